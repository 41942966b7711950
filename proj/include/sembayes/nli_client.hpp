#pragma once

// Client for the NLI microservice and the equivalence oracle built on it.
//
//   POST /v1/nli        {"premise": s, "hypothesis": s}
//                       -> {"label": "entailment"|"neutral"|"contradiction",
//                           "scores": [entailment, neutral, contradiction]}
//   POST /v1/nli/batch  [request, ...] -> [response, ...]
//   GET  /healthz       -> {"model": s, "ready": b, "version": s}

#include <array>
#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sembayes/oracle.hpp"

namespace sembayes {

namespace detail {
class JsonTransport;
}

enum class NliLabel { entailment, neutral, contradiction };

const char* to_string(NliLabel label) noexcept;

struct NliResult {
    NliLabel label = NliLabel::neutral;
    std::array<double, 3> scores{};  // entailment, neutral, contradiction
};

struct NliHealth {
    std::string model;
    bool ready = false;
    std::string version;
};

struct NliClientConfig {
    std::string base_url = "http://127.0.0.1:8080";
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};
    int max_in_flight = 4;

    static NliClientConfig from_json(const nlohmann::json& doc);
};

// Throws MalformedReplyError when a reply does not follow the protocol.
NliResult parse_nli_result(const nlohmann::json& reply);

class NliClient {
public:
    explicit NliClient(NliClientConfig config);
    ~NliClient();

    NliResult classify(const std::string& premise, const std::string& hypothesis) const;
    std::vector<NliResult> classify_batch(const std::vector<std::pair<std::string, std::string>>& pairs) const;
    NliHealth health() const;

private:
    NliClientConfig config_;
    std::unique_ptr<detail::JsonTransport> transport_;
};

// Strict bidirectional entailment between candidate and representative. Each
// side is phrased as "<prompt> <answer>" so the service sees the question.
// Two empty answers are equivalent; an empty and a nonempty one are not.
class NliOracle final : public EquivalenceOracle {
public:
    explicit NliOracle(const NliClient& client) : client_(&client) {}
    bool equivalent(std::string_view prompt, const Response& representative,
                    const Response& candidate) const override;

private:
    const NliClient* client_;
};

}  // namespace sembayes
