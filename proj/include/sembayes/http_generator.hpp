#pragma once

// Generator backed by an OpenAI-compatible /v1/completions endpoint. Every
// request uses temperature 1 and n = 1 and asks for per-token
// log-probabilities with the top alternatives at each position.

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "sembayes/generator.hpp"

namespace sembayes {

namespace detail {
class JsonTransport;
}

struct HttpGeneratorConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string path = "/v1/completions";
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    int max_tokens = 64;
    int top_logprobs = 3;
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};
    int max_in_flight = 4;

    // Reads the fields present in a JSON object; absent fields keep their
    // defaults. Throws std::invalid_argument on bad types or values.
    static HttpGeneratorConfig from_json(const nlohmann::json& doc);
};

// Parses one completions reply. Throws CapabilityError naming the missing
// log-probability field and MalformedReplyError for other shape problems.
// Exposed for fixture tests.
struct ParsedCompletion {
    std::vector<std::string> tokens;
    std::vector<double> token_logprobs;
    std::vector<std::vector<TokenProb>> top_alternatives;
    std::string finish_reason;
};
ParsedCompletion parse_completion_reply(const nlohmann::json& reply);

class HttpGenerator final : public Generator {
public:
    // The API key, when set, comes from the environment variable named in
    // the config.
    explicit HttpGenerator(HttpGeneratorConfig config);
    ~HttpGenerator() override;

    Response sample_response(std::string_view prompt, Rng& rng) const override;
    std::vector<TokenProb> next_token_distribution(std::string_view prompt,
                                                   std::span<const std::string> prefix) const override;
    Response continue_with(std::string_view prompt, const TokenPrefix& prefix, const TokenProb& forced,
                           Rng& rng) const override;

    const HttpGeneratorConfig& config() const noexcept { return config_; }

private:
    ParsedCompletion complete(const std::string& text, int max_tokens, std::optional<std::uint64_t> seed) const;

    HttpGeneratorConfig config_;
    std::unique_ptr<detail::JsonTransport> transport_;
};

}  // namespace sembayes
