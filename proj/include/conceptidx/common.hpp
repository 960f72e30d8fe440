// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conceptidx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files (corpus, taxonomy, runs, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// Configuration values outside their documented range. `field` names the
/// offending key so the CLI can report it.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Remote provider failures (embedding or chat endpoint), after retries.
class ProviderError : public Error {
public:
    using Error::Error;
};

// Warnings go through a process-wide sink so tests can observe them.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);
std::size_t warning_count();

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

std::uint64_t fnv1a64(std::string_view data);
std::uint64_t splitmix64(std::uint64_t x);
std::string sha256_hex(std::string_view data);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from
/// workers are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::vector<std::string> read_lines(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);

}  // namespace conceptidx
