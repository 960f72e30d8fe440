// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace conceptidx {

using EmbeddingVector = std::vector<float>;

enum class Metric { cosine, dot };

Metric parse_metric(const std::string& name);
std::string to_string(Metric m);

/// Cosine of a zero vector with anything is 0. Throws InputError on
/// dimension mismatch.
double similarity(std::span<const float> a, std::span<const float> b, Metric metric);

/// Dense row-major matrix of embeddings with a string id per row.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t rows() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::string& id(std::size_t row) const { return ids_.at(row); }

    std::span<const float> row(std::size_t r) const {
        return {data_.data() + r * dim_, dim_};
    }
    EmbeddingVector row_vector(std::size_t r) const {
        auto s = row(r);
        return {s.begin(), s.end()};
    }
    std::optional<std::size_t> find(const std::string& id) const;

    /// Appends a row; ids must be unique and the row length must equal dim().
    void add(const std::string& id, std::span<const float> values);

    const std::vector<float>& data() const noexcept { return data_; }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// `<prefix>.f32` holds little-endian float32 rows, `<prefix>.manifest.json`
/// holds {"dim": D, "ids": [...]}.
void write_embedding_store(const EmbeddingMatrix& m, const std::string& prefix);
EmbeddingMatrix read_embedding_store(const std::string& prefix);
bool embedding_store_exists(const std::string& prefix);

struct ProviderConfig {
    std::string endpoint = "mock";  // "mock", "mock-bow" or an http(s) base URL
    std::string model = "mock-embed";
    Metric metric = Metric::cosine;
    std::string cache_path;  // directory; empty disables persistence
    std::size_t dim = 64;    // mock backends only
    std::uint64_t seed = 0;  // mock backends only
    std::size_t max_inflight = 4;
    std::size_t batch_size = 64;
    int retries = 3;
    int backoff_base_ms = 500;
    int timeout_s = 60;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// Whole-text mock: N(0,1) draws seeded by a 64-bit hash of the normalized
/// text, L2-normalized.
class MockEmbeddingBackend : public EmbeddingBackend {
public:
    MockEmbeddingBackend(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Bag-of-words mock: sum of per-token seeded Gaussian vectors, normalized.
/// Texts that share tokens get correlated vectors, which makes the synthetic
/// pipeline behave like a (very weak) lexical encoder.
class BowMockEmbeddingBackend : public EmbeddingBackend {
public:
    BowMockEmbeddingBackend(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// OpenAI-compatible POST {endpoint}/embeddings client.
class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    ProviderConfig cfg_;
};

/// Embeds texts through a backend with a content-addressed persistent cache.
/// Safe to call from several threads; cache writes are serialized.
class EmbeddingProvider {
public:
    explicit EmbeddingProvider(ProviderConfig cfg);
    EmbeddingProvider(ProviderConfig cfg, std::unique_ptr<EmbeddingBackend> backend);

    const ProviderConfig& config() const noexcept { return cfg_; }
    Metric metric() const noexcept { return cfg_.metric; }

    /// One row per input (ids "0".."n-1"), order preserved.
    EmbeddingMatrix embed_batch(const std::vector<std::string>& texts);
    EmbeddingVector embed(const std::string& text);

    /// Number of backend requests issued (network calls for HTTP backends).
    std::size_t backend_calls() const noexcept { return backend_calls_.load(); }
    std::size_t cache_size() const;

    std::string cache_key(const std::string& text) const;

private:
    void load_cache();
    void persist(const std::vector<std::string>& new_keys);

    ProviderConfig cfg_;
    std::unique_ptr<EmbeddingBackend> backend_;
    mutable std::mutex mutex_;
    std::optional<std::size_t> dim_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
    std::vector<std::string> cache_order_;
    std::atomic<std::size_t> backend_calls_{0};
};

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& cfg);

}  // namespace conceptidx
