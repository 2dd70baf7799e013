#pragma once

#include "emotrig/errors.hpp"

#include <httplib.h>
// <resolv.h> leaks this macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

namespace emotrig::http {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // always starts with '/'
};

inline Endpoint parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("malformed URL '" + url + "': missing scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme '" + scheme + "'");
    const auto host_start = scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    Endpoint ep;
    ep.origin = url.substr(0, path_start);
    ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (ep.origin.size() <= host_start) throw ConfigError("malformed URL '" + url + "': missing host");
    return ep;
}

/// Reads the bearer token from the named environment variable. An empty name
/// means no authentication.
inline std::optional<std::string> api_key_from_env(const std::string& var) {
    if (var.empty()) return std::nullopt;
    const char* v = std::getenv(var.c_str());
    if (!v || !*v) throw ConfigError("API key variable " + var + " is not set");
    return std::string(v);
}

struct RetryPolicy {
    std::chrono::milliseconds timeout{60'000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
};

inline std::string truncate(const std::string& s, std::size_t n = 200) {
    return s.size() <= n ? s : s.substr(0, n) + "...";
}

/// POSTs a JSON body and returns the parsed JSON response.
///
/// Connection failures, timeouts, 429 and 5xx are retried with exponential
/// backoff; other non-2xx statuses fail at once.
inline nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                                const std::optional<std::string>& bearer, const RetryPolicy& policy = {}) {
    const auto ep = parse_url(url);
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
    const std::string payload = body.dump();

    std::string last_failure;
    int last_status = 0;
    bool last_was_timeout = false;
    auto backoff = policy.initial_backoff;
    const int attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(ep.path, headers, payload, "application/json");
        const auto elapsed = std::chrono::steady_clock::now() - started;
        if (!res) {
            last_was_timeout = res.error() == httplib::Error::ConnectionTimeout || elapsed >= policy.timeout;
            last_failure = httplib::to_string(res.error());
            last_status = 0;
        } else if (res->status >= 200 && res->status < 300) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error&) {
                throw ProtocolError("response from " + url + " is not valid JSON: " + truncate(res->body));
            }
        } else {
            last_was_timeout = false;
            last_status = res->status;
            last_failure = "HTTP " + std::to_string(res->status) + ": " + truncate(res->body);
            if (res->status != 429 && res->status < 500) throw TransportError(url + " returned " + last_failure, res->status);
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    const std::string msg = url + " failed after " + std::to_string(attempts) + " attempts: " + last_failure;
    if (last_was_timeout) throw TimeoutError(msg);
    throw TransportError(msg, last_status);
}

} // namespace emotrig::http
