// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "conceptidx/common.hpp"
#include "conceptidx/llm.hpp"

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("conceptidx_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& content) const {
        auto p = file(name);
        conceptidx::write_text_file(p, content);
        return p;
    }

private:
    fs::path path_;
};

/// Chat backend driven by a callback; counts invocations.
class ScriptedChat : public conceptidx::ChatBackend {
public:
    using Fn = std::function<std::string(const conceptidx::ChatRequest&, const conceptidx::DispatchHint&)>;
    explicit ScriptedChat(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const conceptidx::ChatRequest& r, const conceptidx::DispatchHint& h) override {
        ++calls;
        return fn_(r, h);
    }
    std::atomic<int> calls{0};

private:
    Fn fn_;
};

/// True iff `fn` throws E whose message contains `needle`.
template <typename E, typename F>
bool throws_with(F&& fn, const std::string& needle) {
    try {
        fn();
    } catch (const E& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    } catch (...) {
        return false;
    }
    return false;
}

inline std::string repo_path(const std::string& rel) { return std::string(CONCEPTIDX_SOURCE_DIR) + "/" + rel; }

}  // namespace testutil
