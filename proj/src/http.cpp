// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "http.hpp"

#include <cstdlib>

#include <fmt/format.h>

#include "conceptidx/common.hpp"

namespace conceptidx::detail {

namespace {

struct SplitUrl {
    std::string scheme_host;  // "https://api.example.com:443"
    std::string base_path;    // "/v1"
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint", "endpoint must be an http(s) URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.scheme_host = url;
    } else {
        out.scheme_host = url.substr(0, path_start);
        out.base_path = url.substr(path_start);
    }
    while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
    return out;
}

}  // namespace

nlohmann::json http_post_json(const std::string& base_url, const std::string& path,
                              const nlohmann::json& body, const std::string& api_key,
                              int timeout_s) {
    auto url = split_url(base_url);
    httplib::Client client(url.scheme_host);
    client.set_connection_timeout(timeout_s, 0);
    client.set_read_timeout(timeout_s, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(url.base_path + path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProviderError(fmt::format("POST {}{} failed: {}", base_url, path, httplib::to_string(res.error())));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError(fmt::format("POST {}{} returned HTTP {}", base_url, path, res->status));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProviderError(fmt::format("POST {}{}: unparseable response ({})", base_url, path, e.what()));
    }
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

}  // namespace conceptidx::detail
