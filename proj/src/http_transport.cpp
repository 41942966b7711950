#include "http_transport.hpp"

#include <thread>

#include <httplib.h>

#include "sembayes/errors.hpp"

namespace sembayes::detail {

namespace {

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

bool retriable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

JsonTransport::JsonTransport(TransportOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw std::invalid_argument("http: base URL is empty");
    if (options_.max_attempts < 1) throw std::invalid_argument("http: max_attempts must be at least 1");
    if (options_.max_in_flight < 1) throw std::invalid_argument("http: max_in_flight must be at least 1");
    while (options_.base_url.size() > 1 && options_.base_url.back() == '/') options_.base_url.pop_back();
    in_flight_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
}

nlohmann::json JsonTransport::post(const std::string& path, const nlohmann::json& body) const {
    return request("POST", path, &body);
}

nlohmann::json JsonTransport::get(const std::string& path) const { return request("GET", path, nullptr); }

nlohmann::json JsonTransport::request(const std::string& method, const std::string& path,
                                      const nlohmann::json* body) const {
    std::string last_error;
    auto delay = options_.backoff;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        httplib::Result res;
        {
            SlotGuard slot(*in_flight_);
            httplib::Client cli(options_.base_url);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
            const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
            cli.set_connection_timeout(secs.count(), usecs.count());
            cli.set_read_timeout(secs.count(), usecs.count());
            cli.set_write_timeout(secs.count(), usecs.count());
            httplib::Headers headers;
            if (!options_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + options_.bearer_token);
            res = body ? cli.Post(path, headers, body->dump(), "application/json") : cli.Get(path, headers);
        }
        if (!res) {
            last_error = method + " " + path + ": " + httplib::to_string(res.error());
            continue;
        }
        const int status = res->status;
        if (status == 401 || status == 403) {
            throw AuthError(method + " " + path + ": HTTP " + std::to_string(status));
        }
        if (retriable_status(status)) {
            last_error = method + " " + path + ": HTTP " + std::to_string(status);
            continue;
        }
        if (status < 200 || status >= 300) {
            throw BackendError(method + " " + path + ": HTTP " + std::to_string(status) + ": " + res->body, false);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw MalformedReplyError(method + " " + path + ": reply is not JSON: " + e.what());
        }
    }
    throw BackendError(last_error + " (gave up after " + std::to_string(options_.max_attempts) + " attempts)", true);
}

}  // namespace sembayes::detail
