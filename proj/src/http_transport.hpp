#pragma once

// JSON-over-HTTP with bounded retries and an in-flight request limit, shared
// by the completions generator and the NLI client.

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <json.hpp>

namespace sembayes::detail {

struct TransportOptions {
    std::string base_url;  // scheme://host[:port]
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};  // doubled after each failed attempt
    int max_in_flight = 4;
    std::string bearer_token;
};

class JsonTransport {
public:
    explicit JsonTransport(TransportOptions options);

    // Throws AuthError on 401/403, BackendError (retriable) once 429, 5xx or
    // connection failures persist past the last attempt, BackendError
    // (non-retriable) on other statuses and MalformedReplyError when the body
    // is not JSON.
    nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
    nlohmann::json get(const std::string& path) const;

    const TransportOptions& options() const noexcept { return options_; }

private:
    nlohmann::json request(const std::string& method, const std::string& path, const nlohmann::json* body) const;

    TransportOptions options_;
    std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace sembayes::detail
