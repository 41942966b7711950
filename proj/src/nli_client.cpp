#include "sembayes/nli_client.hpp"

#include <cmath>

#include "http_transport.hpp"
#include "sembayes/errors.hpp"

namespace sembayes {

namespace {

constexpr double kScoreTolerance = 1e-6;

NliLabel parse_label(const std::string& s) {
    if (s == "entailment") return NliLabel::entailment;
    if (s == "neutral") return NliLabel::neutral;
    if (s == "contradiction") return NliLabel::contradiction;
    throw MalformedReplyError("nli reply: unknown label '" + s + "'");
}

nlohmann::json request_body(const std::string& premise, const std::string& hypothesis) {
    return {{"premise", premise}, {"hypothesis", hypothesis}};
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

}  // namespace

const char* to_string(NliLabel label) noexcept {
    switch (label) {
        case NliLabel::entailment: return "entailment";
        case NliLabel::neutral: return "neutral";
        case NliLabel::contradiction: return "contradiction";
    }
    return "neutral";
}

NliClientConfig NliClientConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::invalid_argument("nli config: expected an object");
    NliClientConfig c;
    try {
        c.base_url = doc.value("base_url", c.base_url);
        c.timeout = std::chrono::milliseconds(doc.value("timeout_ms", static_cast<long long>(c.timeout.count())));
        c.max_attempts = doc.value("max_attempts", c.max_attempts);
        c.backoff = std::chrono::milliseconds(doc.value("backoff_ms", static_cast<long long>(c.backoff.count())));
        c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("nli config: ") + e.what());
    }
    return c;
}

NliResult parse_nli_result(const nlohmann::json& reply) {
    if (!reply.is_object() || !reply.contains("label") || !reply.contains("scores")) {
        throw MalformedReplyError("nli reply needs 'label' and 'scores'");
    }
    NliResult out;
    try {
        out.label = parse_label(reply["label"].get<std::string>());
        const auto& scores = reply["scores"];
        if (scores.is_array()) {
            if (scores.size() != 3) throw MalformedReplyError("nli reply: expected three scores");
            for (std::size_t i = 0; i < 3; ++i) out.scores[i] = scores[i].get<double>();
        } else if (scores.is_object()) {
            out.scores = {scores.at("entailment").get<double>(), scores.at("neutral").get<double>(),
                          scores.at("contradiction").get<double>()};
        } else {
            throw MalformedReplyError("nli reply: scores must be a list or an object");
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedReplyError(std::string("nli reply: ") + e.what());
    }
    double sum = 0.0;
    for (double s : out.scores) {
        if (!(s >= 0.0)) throw MalformedReplyError("nli reply: negative score");
        sum += s;
    }
    if (std::abs(sum - 1.0) > kScoreTolerance) throw MalformedReplyError("nli reply: scores do not sum to 1");
    return out;
}

NliClient::NliClient(NliClientConfig config) : config_(std::move(config)) {
    detail::TransportOptions opts;
    opts.base_url = config_.base_url;
    opts.timeout = config_.timeout;
    opts.max_attempts = config_.max_attempts;
    opts.backoff = config_.backoff;
    opts.max_in_flight = config_.max_in_flight;
    transport_ = std::make_unique<detail::JsonTransport>(std::move(opts));
}

NliClient::~NliClient() = default;

NliResult NliClient::classify(const std::string& premise, const std::string& hypothesis) const {
    return parse_nli_result(transport_->post("/v1/nli", request_body(premise, hypothesis)));
}

std::vector<NliResult> NliClient::classify_batch(const std::vector<std::pair<std::string, std::string>>& pairs) const {
    if (pairs.empty()) return {};
    nlohmann::json body = nlohmann::json::array();
    for (const auto& [p, h] : pairs) body.push_back(request_body(p, h));
    const nlohmann::json reply = transport_->post("/v1/nli/batch", body);
    if (!reply.is_array() || reply.size() != pairs.size()) {
        throw MalformedReplyError("nli batch reply: expected " + std::to_string(pairs.size()) + " results");
    }
    std::vector<NliResult> out;
    for (const auto& r : reply) out.push_back(parse_nli_result(r));
    return out;
}

NliHealth NliClient::health() const {
    const nlohmann::json reply = transport_->get("/healthz");
    NliHealth h;
    try {
        h.model = reply.value("model", std::string{});
        h.ready = reply.value("ready", false);
        h.version = reply.value("version", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw MalformedReplyError(std::string("nli health reply: ") + e.what());
    }
    return h;
}

bool NliOracle::equivalent(std::string_view prompt, const Response& representative,
                           const Response& candidate) const {
    const std::string a = trim(representative.text());
    const std::string b = trim(candidate.text());
    if (a.empty() || b.empty()) return a.empty() && b.empty();
    if (a == b) return true;
    const std::string q = std::string(prompt);
    const std::string pa = q.empty() ? a : q + " " + a;
    const std::string pb = q.empty() ? b : q + " " + b;
    const auto r = client_->classify_batch({{pa, pb}, {pb, pa}});
    return r[0].label == NliLabel::entailment && r[1].label == NliLabel::entailment;
}

}  // namespace sembayes
