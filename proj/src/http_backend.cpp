#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "http_client.hpp"
#include "qw/error.hpp"
#include "qw/writer.hpp"

namespace qw {

namespace detail {

HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       std::chrono::seconds timeout) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::invalid_argument, "base URL needs a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    std::string origin = base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin.rfind("https://", 0) == 0)
        throw Error(ErrorCode::backend_failure, "https endpoints need a build with OpenSSL");
#endif
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(prefix + path, h, body, "application/json");
    if (!res) throw Error(ErrorCode::backend_failure, "request to " + base_url + path + " failed: " +
                                                          httplib::to_string(res.error()));
    return {res->status, res->body};
}

}  // namespace detail

HttpBackend::HttpBackend(Options options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw Error(ErrorCode::invalid_argument, "HTTP backend needs a base URL");
}

HttpBackend::Options HttpBackend::options_from_env() {
    Options o;
    if (const char* v = std::getenv("QW_LM_BASE_URL")) o.base_url = v;
    if (const char* v = std::getenv("QW_LM_API_KEY")) o.api_key = v;
    if (const char* v = std::getenv("QW_LM_MODEL"); v && *v) o.model = v;
    if (o.base_url.empty()) throw Error(ErrorCode::invalid_argument, "QW_LM_BASE_URL is not set");
    return o;
}

std::string HttpBackend::complete(const std::string& prompt, const CompletionParams& params) {
    nlohmann::json req = {
        {"model", options_.model},
        {"prompt", prompt},
        {"max_tokens", params.max_tokens},
        {"temperature", params.temperature},
        {"stop", params.stop},
    };
    if (params.seed) req["seed"] = *params.seed;
    std::vector<std::pair<std::string, std::string>> headers;
    if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);
    const auto body = req.dump();

    std::string last_error;
    auto delay = options_.backoff;
    for (std::size_t attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        detail::HttpResponse res;
        try {
            res = detail::post_json(options_.base_url, "/completions", body, headers, options_.timeout);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::backend_failure) throw;
            last_error = e.what();
            continue;
        }
        if (res.status >= 500) {
            last_error = "completion endpoint returned " + std::to_string(res.status);
            continue;
        }
        if (res.status != 200)
            throw Error(ErrorCode::backend_failure,
                        "completion endpoint returned " + std::to_string(res.status) + ": " + res.body);
        try {
            auto j = nlohmann::json::parse(res.body);
            return j.at("choices").at(0).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::backend_failure, std::string("malformed completion response: ") + e.what());
        }
    }
    throw Error(ErrorCode::backend_failure, last_error);
}

}  // namespace qw
