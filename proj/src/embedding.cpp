// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "conceptidx/common.hpp"
#include "conceptidx/lexical.hpp"
#include "http.hpp"

namespace conceptidx {

namespace fs = std::filesystem;
using nlohmann::json;

Metric parse_metric(const std::string& name) {
    if (name == "cosine") return Metric::cosine;
    if (name == "dot") return Metric::dot;
    throw ConfigError("metric", "metric must be \"cosine\" or \"dot\", got \"" + name + "\"");
}

std::string to_string(Metric m) { return m == Metric::cosine ? "cosine" : "dot"; }

double similarity(std::span<const float> a, std::span<const float> b, Metric metric) {
    if (a.size() != b.size()) {
        throw InputError(fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
    }
    double dot = 0.0;
    if (metric == Metric::dot) {
        for (std::size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
        return dot;
    }
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingMatrix::add(const std::string& id, std::span<const float> values) {
    if (ids_.empty() && dim_ == 0) dim_ = values.size();
    if (values.size() != dim_) {
        throw InputError(fmt::format("row \"{}\" has dimension {}, expected {}", id, values.size(), dim_));
    }
    if (!index_.emplace(id, ids_.size()).second) {
        throw InputError(fmt::format("duplicate embedding id \"{}\"", id));
    }
    ids_.push_back(id);
    data_.insert(data_.end(), values.begin(), values.end());
}

namespace {

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

void append_rows(const std::string& path, std::span<const float> values, bool truncate) {
    std::ofstream out(path, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app));
    if (!out) throw Error("cannot write " + path);
    for (float f : values) {
        auto bits = to_le(std::bit_cast<std::uint32_t>(f));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!out) throw Error("write failed: " + path);
}

void write_manifest(const std::string& path, std::size_t dim, const std::vector<std::string>& ids) {
    json m;
    m["dim"] = dim;
    m["ids"] = ids;
    write_text_file(path, m.dump() + "\n");
}

}  // namespace

void write_embedding_store(const EmbeddingMatrix& m, const std::string& prefix) {
    append_rows(prefix + ".f32", m.data(), /*truncate=*/true);
    write_manifest(prefix + ".manifest.json", m.dim(), m.ids());
}

bool embedding_store_exists(const std::string& prefix) {
    return fs::exists(prefix + ".f32") && fs::exists(prefix + ".manifest.json");
}

EmbeddingMatrix read_embedding_store(const std::string& prefix) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(prefix + ".manifest.json"));
    } catch (const json::parse_error& e) {
        throw InputError(fmt::format("{}.manifest.json: {}", prefix, e.what()));
    }
    if (!manifest.contains("dim") || !manifest.contains("ids")) {
        throw InputError(prefix + ".manifest.json: needs \"dim\" and \"ids\"");
    }
    auto dim = manifest["dim"].get<std::size_t>();
    auto ids = manifest["ids"].get<std::vector<std::string>>();
    auto blob = read_text_file(prefix + ".f32");
    if (blob.size() != ids.size() * dim * sizeof(float)) {
        throw InputError(fmt::format("{}.f32: size {} bytes does not match {} rows x {} dims", prefix,
                                     blob.size(), ids.size(), dim));
    }
    EmbeddingMatrix m(dim);
    std::vector<float> row(dim);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            std::uint32_t bits;
            std::memcpy(&bits, blob.data() + (r * dim + c) * sizeof bits, sizeof bits);
            row[c] = std::bit_cast<float>(to_le(bits));
        }
        m.add(ids[r], row);
    }
    return m;
}

namespace {

EmbeddingVector gaussian_unit(std::uint64_t seed, std::size_t dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    EmbeddingVector out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

std::string normalize_text(const std::string& text) {
    std::string out;
    bool space = false;
    for (char c : to_lower(trim(text))) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::vector<EmbeddingVector> MockEmbeddingBackend::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(gaussian_unit(fnv1a64(normalize_text(t)) ^ splitmix64(seed_), dim_));
    }
    return out;
}

std::vector<EmbeddingVector> BowMockEmbeddingBackend::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::unordered_map<std::string, EmbeddingVector> token_cache;
    for (const auto& t : texts) {
        std::vector<double> acc(dim_, 0.0);
        for (const auto& tok : tokenize(t)) {
            auto it = token_cache.find(tok);
            if (it == token_cache.end()) {
                it = token_cache.emplace(tok, gaussian_unit(fnv1a64(tok) ^ splitmix64(seed_), dim_)).first;
            }
            for (std::size_t i = 0; i < dim_; ++i) acc[i] += it->second[i];
        }
        double norm = 0.0;
        for (double x : acc) norm += x * x;
        norm = std::sqrt(norm);
        EmbeddingVector v(dim_, 0.0f);
        if (norm > 0.0) {
            for (std::size_t i = 0; i < dim_; ++i) v[i] = static_cast<float>(acc[i] / norm);
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<EmbeddingVector> HttpEmbeddingBackend::embed(const std::vector<std::string>& texts) {
    json body;
    body["model"] = cfg_.model;
    body["input"] = texts;
    auto api_key = detail::env_or_empty("CONCEPT_EMBED_API_KEY");
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        if (attempt > 0 && cfg_.backoff_base_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 1)));
        }
        try {
            auto res = detail::http_post_json(cfg_.endpoint, "/embeddings", body, api_key, cfg_.timeout_s);
            const auto& data = res.at("data");
            if (data.size() != texts.size()) {
                throw ProviderError(fmt::format("embedding endpoint returned {} rows for {} inputs", data.size(),
                                                texts.size()));
            }
            std::vector<EmbeddingVector> out;
            out.reserve(texts.size());
            for (const auto& row : data) out.push_back(row.at("embedding").get<EmbeddingVector>());
            return out;
        } catch (const ProviderError& e) {
            last_error = e.what();
        } catch (const json::exception& e) {
            last_error = std::string("malformed embedding response: ") + e.what();
        }
    }
    throw ProviderError("embedding endpoint unreachable after retries: " + last_error);
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& cfg) {
    if (cfg.endpoint == "mock") return std::make_unique<MockEmbeddingBackend>(cfg.dim, cfg.seed);
    if (cfg.endpoint == "mock-bow") return std::make_unique<BowMockEmbeddingBackend>(cfg.dim, cfg.seed);
    return std::make_unique<HttpEmbeddingBackend>(cfg);
}

EmbeddingProvider::EmbeddingProvider(ProviderConfig cfg)
    : EmbeddingProvider(cfg, make_embedding_backend(cfg)) {}

EmbeddingProvider::EmbeddingProvider(ProviderConfig cfg, std::unique_ptr<EmbeddingBackend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
    if (cfg_.batch_size == 0) throw ConfigError("embed.batch_size", "batch_size must be positive");
    load_cache();
}

std::string EmbeddingProvider::cache_key(const std::string& text) const {
    return sha256_hex(cfg_.endpoint + "\n" + cfg_.model + "\n" + std::to_string(cfg_.dim) + "\n" +
                      std::to_string(cfg_.seed) + "\n" + text);
}

std::size_t EmbeddingProvider::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

void EmbeddingProvider::load_cache() {
    if (cfg_.cache_path.empty()) return;
    auto prefix = (fs::path(cfg_.cache_path) / "emb").string();
    if (!embedding_store_exists(prefix)) return;
    auto m = read_embedding_store(prefix);
    if (m.rows() > 0) dim_ = m.dim();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        cache_.emplace(m.id(r), m.row_vector(r));
        cache_order_.push_back(m.id(r));
    }
}

void EmbeddingProvider::persist(const std::vector<std::string>& new_keys) {
    if (cfg_.cache_path.empty() || new_keys.empty()) return;
    fs::create_directories(cfg_.cache_path);
    auto prefix = (fs::path(cfg_.cache_path) / "emb").string();
    bool fresh = cache_order_.size() == new_keys.size() || !fs::exists(prefix + ".f32");
    std::vector<float> rows;
    const auto& keys = fresh ? cache_order_ : new_keys;
    for (const auto& k : keys) {
        const auto& v = cache_.at(k);
        rows.insert(rows.end(), v.begin(), v.end());
    }
    append_rows(prefix + ".f32", rows, fresh);
    write_manifest(prefix + ".manifest.json", *dim_, cache_order_);
}

EmbeddingMatrix EmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    if (texts.empty()) throw InputError("embed_batch needs at least one text");
    std::vector<std::string> keys;
    keys.reserve(texts.size());
    for (const auto& t : texts) keys.push_back(cache_key(t));

    // Unique misses, in first-occurrence order.
    std::vector<std::size_t> miss_pos;
    {
        std::lock_guard lock(mutex_);
        std::unordered_map<std::string, bool> queued;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (cache_.count(keys[i]) || queued.count(keys[i])) continue;
            queued.emplace(keys[i], true);
            miss_pos.push_back(i);
        }
    }

    if (!miss_pos.empty()) {
        std::size_t n_chunks = (miss_pos.size() + cfg_.batch_size - 1) / cfg_.batch_size;
        std::vector<std::vector<EmbeddingVector>> results(n_chunks);
        parallel_for(n_chunks, cfg_.max_inflight, [&](std::size_t c) {
            std::vector<std::string> chunk;
            auto end = std::min(miss_pos.size(), (c + 1) * cfg_.batch_size);
            for (std::size_t j = c * cfg_.batch_size; j < end; ++j) chunk.push_back(texts[miss_pos[j]]);
            ++backend_calls_;
            results[c] = backend_->embed(chunk);
            if (results[c].size() != chunk.size()) throw ProviderError("backend returned wrong row count");
        });

        std::lock_guard lock(mutex_);
        std::vector<std::string> added;
        std::size_t j = 0;
        for (auto& chunk : results) {
            for (auto& vec : chunk) {
                const auto& key = keys[miss_pos[j++]];
                if (!dim_) dim_ = vec.size();
                if (vec.size() != *dim_) {
                    throw ProviderError(fmt::format("embedding dimension {} does not match cached dimension {}",
                                                    vec.size(), *dim_));
                }
                for (float f : vec) {
                    if (!std::isfinite(f)) throw ProviderError("backend returned a non-finite embedding value");
                }
                if (cache_.emplace(key, std::move(vec)).second) {
                    cache_order_.push_back(key);
                    added.push_back(key);
                }
            }
        }
        persist(added);
    }

    std::lock_guard lock(mutex_);
    EmbeddingMatrix out(*dim_);
    for (std::size_t i = 0; i < texts.size(); ++i) out.add(std::to_string(i), cache_.at(keys[i]));
    return out;
}

EmbeddingVector EmbeddingProvider::embed(const std::string& text) {
    return embed_batch({text}).row_vector(0);
}

}  // namespace conceptidx
