#include "sembayes/http_generator.hpp"

#include <cmath>
#include <cstdlib>

#include "http_transport.hpp"
#include "sembayes/errors.hpp"

namespace sembayes {

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) {
        throw CapabilityError("completions reply lacks " + where + "." + key);
    }
    return obj[key];
}

std::uint64_t request_seed(Rng& rng) { return rng() >> 33; }

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("http config: bad value for '") + key + "'");
    }
}

}  // namespace

HttpGeneratorConfig HttpGeneratorConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::invalid_argument("http config: expected an object");
    HttpGeneratorConfig c;
    read_field(doc, "base_url", c.base_url);
    read_field(doc, "path", c.path);
    read_field(doc, "model", c.model);
    read_field(doc, "api_key_env", c.api_key_env);
    read_field(doc, "max_tokens", c.max_tokens);
    read_field(doc, "top_logprobs", c.top_logprobs);
    read_field(doc, "max_attempts", c.max_attempts);
    read_field(doc, "max_in_flight", c.max_in_flight);
    long long ms = c.timeout.count();
    read_field(doc, "timeout_ms", ms);
    c.timeout = std::chrono::milliseconds(ms);
    ms = c.backoff.count();
    read_field(doc, "backoff_ms", ms);
    c.backoff = std::chrono::milliseconds(ms);
    if (c.max_tokens < 1) throw std::invalid_argument("http config: max_tokens must be at least 1");
    if (c.top_logprobs < 1) throw std::invalid_argument("http config: top_logprobs must be at least 1");
    return c;
}

ParsedCompletion parse_completion_reply(const nlohmann::json& reply) {
    if (!reply.is_object()) throw MalformedReplyError("completions reply is not an object");
    const auto& choices = reply.contains("choices") ? reply["choices"] : nlohmann::json();
    if (!choices.is_array() || choices.empty()) throw MalformedReplyError("completions reply has no choices");
    const auto& choice = choices[0];
    const auto& lp = require(choice, "logprobs", "choices[0]");
    const auto& tokens = require(lp, "tokens", "choices[0].logprobs");
    const auto& token_lps = require(lp, "token_logprobs", "choices[0].logprobs");
    const auto& top = require(lp, "top_logprobs", "choices[0].logprobs");

    ParsedCompletion out;
    try {
        out.tokens = tokens.get<std::vector<std::string>>();
        for (const auto& v : token_lps) {
            if (v.is_null()) throw CapabilityError("completions reply has null entries in choices[0].logprobs.token_logprobs");
            out.token_logprobs.push_back(v.get<double>());
        }
        for (const auto& pos : top) {
            std::vector<TokenProb> alts;
            if (pos.is_object()) {
                for (const auto& [tok, v] : pos.items()) alts.push_back({tok, std::exp(v.get<double>())});
            } else if (!pos.is_null()) {
                throw MalformedReplyError("choices[0].logprobs.top_logprobs entries must be objects");
            }
            out.top_alternatives.push_back(std::move(alts));
        }
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
            out.finish_reason = choice["finish_reason"].get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedReplyError(std::string("completions reply: ") + e.what());
    }
    if (out.tokens.size() != out.token_logprobs.size()) {
        throw MalformedReplyError("completions reply: tokens and token_logprobs differ in length");
    }
    for (double v : out.token_logprobs) {
        if (!(v <= 0.0)) throw MalformedReplyError("completions reply: token log-probability above 0");
    }
    return out;
}

HttpGenerator::HttpGenerator(HttpGeneratorConfig config) : config_(std::move(config)) {
    detail::TransportOptions opts;
    opts.base_url = config_.base_url;
    opts.timeout = config_.timeout;
    opts.max_attempts = config_.max_attempts;
    opts.backoff = config_.backoff;
    opts.max_in_flight = config_.max_in_flight;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) opts.bearer_token = key;
    }
    transport_ = std::make_unique<detail::JsonTransport>(std::move(opts));
}

HttpGenerator::~HttpGenerator() = default;

ParsedCompletion HttpGenerator::complete(const std::string& text, int max_tokens,
                                         std::optional<std::uint64_t> seed) const {
    nlohmann::json body = {{"prompt", text},
                           {"max_tokens", max_tokens},
                           {"temperature", 1.0},
                           {"logprobs", config_.top_logprobs},
                           {"n", 1}};
    if (!config_.model.empty()) body["model"] = config_.model;
    if (seed) body["seed"] = *seed;
    return parse_completion_reply(transport_->post(config_.path, body));
}

Response HttpGenerator::sample_response(std::string_view prompt, Rng& rng) const {
    ParsedCompletion c = complete(std::string(prompt), config_.max_tokens, request_seed(rng));
    if (c.tokens.empty()) {
        // The model stopped immediately; keep the response nonempty.
        c.tokens.emplace_back("<|endoftext|>");
        c.token_logprobs.push_back(0.0);
    }
    return Response(std::move(c.tokens), std::move(c.token_logprobs));
}

std::vector<TokenProb> HttpGenerator::next_token_distribution(std::string_view prompt,
                                                              std::span<const std::string> prefix) const {
    const ParsedCompletion c = complete(std::string(prompt) + render_tokens(prefix), 1, std::nullopt);
    if (c.top_alternatives.empty()) {
        throw CapabilityError("completions reply lacks choices[0].logprobs.top_logprobs[0]");
    }
    return c.top_alternatives.front();
}

Response HttpGenerator::continue_with(std::string_view prompt, const TokenPrefix& prefix, const TokenProb& forced,
                                      Rng& rng) const {
    if (prefix.tokens.size() != prefix.logprobs.size()) {
        throw std::invalid_argument("continue_with: prefix tokens and log-probabilities differ in length");
    }
    if (!(forced.prob > 0.0) || forced.prob > 1.0) {
        throw std::invalid_argument("continue_with: forced token probability outside (0, 1]");
    }
    std::vector<std::string> tokens(prefix.tokens.begin(), prefix.tokens.end());
    std::vector<double> logprobs(prefix.logprobs.begin(), prefix.logprobs.end());
    tokens.push_back(forced.token);
    logprobs.push_back(std::log(forced.prob));
    const int remaining = config_.max_tokens - static_cast<int>(tokens.size());
    if (!is_end_marker(forced.token) && remaining > 0) {
        ParsedCompletion c =
            complete(std::string(prompt) + render_tokens(tokens), remaining, request_seed(rng));
        tokens.insert(tokens.end(), c.tokens.begin(), c.tokens.end());
        logprobs.insert(logprobs.end(), c.token_logprobs.begin(), c.token_logprobs.end());
    }
    return Response(std::move(tokens), std::move(logprobs));
}

}  // namespace sembayes
