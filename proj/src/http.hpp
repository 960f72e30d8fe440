// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace conceptidx::detail {

/// POSTs `body` to `base_url` + `path` and parses the JSON reply. Throws
/// ProviderError on transport failures and non-2xx statuses; no retries here.
nlohmann::json http_post_json(const std::string& base_url, const std::string& path,
                              const nlohmann::json& body, const std::string& api_key,
                              int timeout_s);

/// Reads an environment variable, empty when unset.
std::string env_or_empty(const char* name);

}  // namespace conceptidx::detail
