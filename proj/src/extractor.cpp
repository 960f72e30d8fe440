// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/extractor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "conceptidx/common.hpp"

namespace conceptidx {

using nlohmann::json;

namespace {

constexpr double kProbFloor = 1e-12;

void softmax_inplace(std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& x : z) {
        x = std::exp(x - m);
        sum += x;
    }
    for (auto& x : z) x /= sum;
}

struct Activations {
    std::vector<double> pre;     // W1^T e + b1
    std::vector<double> hidden;  // relu(pre)
    HeadOutputs out;
};

std::vector<double> head(const Matrix& w, const std::vector<double>& b, const std::vector<double>& h) {
    std::vector<double> z(b);
    for (std::size_t i = 0; i < w.rows; ++i) {
        double hi = h[i];
        if (hi == 0.0) continue;
        const double* row = &w.data[i * w.cols];
        for (std::size_t j = 0; j < w.cols; ++j) z[j] += hi * row[j];
    }
    softmax_inplace(z);
    return z;
}

Activations run(const ExtractorModel& m, std::span<const float> e) {
    if (e.size() != m.input_dim()) {
        throw InputError(fmt::format("embedding has dimension {}, extractor expects {}", e.size(), m.input_dim()));
    }
    Activations a;
    a.pre = m.b1;
    for (std::size_t d = 0; d < m.w1.rows; ++d) {
        double ed = e[d];
        const double* row = &m.w1.data[d * m.w1.cols];
        for (std::size_t i = 0; i < m.w1.cols; ++i) a.pre[i] += ed * row[i];
    }
    a.hidden.resize(a.pre.size());
    for (std::size_t i = 0; i < a.pre.size(); ++i) a.hidden[i] = std::max(0.0, a.pre[i]);
    a.out.topics = head(m.wt, m.bt, a.hidden);
    a.out.phrases = head(m.wp, m.bp, a.hidden);
    return a;
}

double head_loss(const std::vector<double>& p, const std::vector<std::size_t>& positives) {
    double l = 0.0;
    for (auto i : positives) l -= std::log(std::max(p.at(i), kProbFloor));
    return l;
}

// dL/dz for one head: S * p - y restricted to unclamped positives.
std::vector<double> head_delta(const std::vector<double>& p, const std::vector<std::size_t>& positives) {
    std::vector<double> dz(p.size(), 0.0);
    double s = 0.0;
    for (auto i : positives) {
        if (p[i] > kProbFloor) {
            s += 1.0;
            dz[i] -= 1.0;
        }
    }
    for (std::size_t j = 0; j < p.size(); ++j) dz[j] += s * p[j];
    return dz;
}

void require_positives(const ConceptProfile& profile) {
    if (profile.core_topics.empty() || profile.core_phrases.empty()) {
        throw InputError(fmt::format("document \"{}\" needs at least one core topic and one core phrase",
                                     profile.doc_id));
    }
}

// Adds the gradient of one example into `g`; returns the example's loss.
double accumulate_gradient(const ExtractorModel& m, std::span<const float> e, const ConceptProfile& profile,
                           ExtractorModel& g) {
    require_positives(profile);
    auto a = run(m, e);
    double loss = head_loss(a.out.topics, profile.core_topics) + head_loss(a.out.phrases, profile.core_phrases);
    auto dzt = head_delta(a.out.topics, profile.core_topics);
    auto dzp = head_delta(a.out.phrases, profile.core_phrases);

    const std::size_t H = m.hidden_size();
    std::vector<double> dh(H, 0.0);
    auto backprop_head = [&](const Matrix& w, Matrix& gw, std::vector<double>& gb, const std::vector<double>& dz) {
        for (std::size_t j = 0; j < dz.size(); ++j) gb[j] += dz[j];
        for (std::size_t i = 0; i < H; ++i) {
            const double* wrow = &w.data[i * w.cols];
            double* grow = &gw.data[i * w.cols];
            double hi = a.hidden[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < dz.size(); ++j) {
                grow[j] += hi * dz[j];
                acc += wrow[j] * dz[j];
            }
            dh[i] += acc;
        }
    };
    backprop_head(m.wt, g.wt, g.bt, dzt);
    backprop_head(m.wp, g.wp, g.bp, dzp);

    for (std::size_t i = 0; i < H; ++i) {
        if (a.pre[i] <= 0.0) dh[i] = 0.0;
        g.b1[i] += dh[i];
    }
    for (std::size_t d = 0; d < m.input_dim(); ++d) {
        double ed = e[d];
        double* grow = &g.w1.data[d * H];
        for (std::size_t i = 0; i < H; ++i) grow[i] += ed * dh[i];
    }
    return loss;
}

template <typename F>
void for_each_block(ExtractorModel& m, F f) {
    f(m.w1.data);
    f(m.b1);
    f(m.wt.data);
    f(m.bt);
    f(m.wp.data);
    f(m.bp);
}

}  // namespace

ExtractorModel::ExtractorModel(std::size_t dim, std::size_t hidden, std::size_t topics, std::size_t phrases)
    : w1(dim, hidden),
      b1(hidden, 0.0),
      wt(hidden, topics),
      bt(topics, 0.0),
      wp(hidden, phrases),
      bp(phrases, 0.0) {}

HeadOutputs forward(const ExtractorModel& model, std::span<const float> embedding) {
    return run(model, embedding).out;
}

double extractor_loss(const HeadOutputs& pred, const ConceptProfile& profile) {
    require_positives(profile);
    return head_loss(pred.topics, profile.core_topics) + head_loss(pred.phrases, profile.core_phrases);
}

ExtractorModel loss_gradient(const ExtractorModel& model, std::span<const float> embedding,
                             const ConceptProfile& profile) {
    ExtractorModel g(model.input_dim(), model.hidden_size(), model.num_topics(), model.num_phrases());
    accumulate_gradient(model, embedding, profile, g);
    return g;
}

TrainResult train_extractor(const std::vector<ConceptProfile>& profiles, const EmbeddingMatrix& embeddings,
                            std::size_t num_topics, std::size_t num_phrases, const TrainConfig& cfg) {
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden_size == 0 || cfg.learning_rate < 0.0) {
        throw ConfigError("extractor", "epochs, batch_size and hidden_size must be positive, learning_rate >= 0");
    }
    if (embeddings.rows() != profiles.size()) {
        throw InputError(fmt::format("{} profiles but {} embeddings", profiles.size(), embeddings.rows()));
    }
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].core_topics.empty() || profiles[i].core_phrases.empty()) {
            warn(fmt::format("document \"{}\" has no core topics or phrases; excluded from training",
                             profiles[i].doc_id));
            continue;
        }
        usable.push_back(i);
    }
    if (usable.empty()) throw InputError("extractor training set is empty");

    const std::size_t D = embeddings.dim();
    const std::size_t H = cfg.hidden_size;
    TrainResult result;
    result.model = ExtractorModel(D, H, num_topics, num_phrases);
    auto& m = result.model;

    std::mt19937_64 rng(cfg.seed);
    auto init = [&](Matrix& w) {
        double bound = 1.0 / std::sqrt(static_cast<double>(w.rows));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& x : w.data) x = u(rng);
    };
    init(m.w1);
    init(m.wt);
    init(m.wp);

    ExtractorModel grad(D, H, num_topics, num_phrases);
    std::vector<std::size_t> order = usable;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            auto end = std::min(order.size(), start + cfg.batch_size);
            for_each_block(grad, [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
            for (std::size_t k = start; k < end; ++k) {
                epoch_loss += accumulate_gradient(m, embeddings.row(order[k]), profiles[order[k]], grad);
            }
            double scale = cfg.learning_rate / static_cast<double>(end - start);
            if (scale == 0.0) continue;
            std::vector<std::vector<double>*> gblocks;
            for_each_block(grad, [&](std::vector<double>& v) { gblocks.push_back(&v); });
            std::size_t bi = 0;
            for_each_block(m, [&](std::vector<double>& v) {
                const auto& g = *gblocks[bi++];
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= scale * g[i];
            });
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

SparseVector top_k_normalized(const std::vector<double>& probs, std::size_t k) {
    std::vector<std::size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (probs[a] != probs[b]) return probs[a] > probs[b];
                          return a < b;
                      });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    double sum = 0.0;
    for (auto i : idx) sum += probs[i];
    SparseVector out;
    if (sum <= 0.0) return out;
    for (auto i : idx) {
        if (probs[i] > 0.0) out.push_back({i, probs[i] / sum});
    }
    return out;
}

EnrichedConcepts enrich(const ExtractorModel& model, std::span<const float> embedding, std::size_t k_topics,
                        std::size_t k_phrases) {
    if (k_topics == 0 || k_phrases == 0) throw ConfigError("extractor", "enrichment counts must be >= 1");
    auto out = forward(model, embedding);
    return {top_k_normalized(out.topics, k_topics), top_k_normalized(out.phrases, k_phrases)};
}

EnrichedConcepts extract_from_text(const ExtractorModel& model, EmbeddingProvider& embedder, const std::string& text,
                                   std::size_t k_topics, std::size_t k_phrases) {
    if (trim(text).empty()) return {};
    auto e = embedder.embed(text);
    return enrich(model, e, k_topics, k_phrases);
}

void save_model(const ExtractorModel& model, const TrainConfig& cfg, const std::string& prefix) {
    json manifest;
    manifest["dims"] = {{"input", model.input_dim()},
                        {"hidden", model.hidden_size()},
                        {"topics", model.num_topics()},
                        {"phrases", model.num_phrases()}};
    manifest["seed"] = cfg.seed;
    manifest["cfg"] = {{"learning_rate", cfg.learning_rate},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"hidden_size", cfg.hidden_size}};
    manifest["blocks"] = {"W1", "b1", "Wt", "bt", "Wp", "bp"};
    write_text_file(prefix + ".json", manifest.dump(2) + "\n");

    std::ofstream out(prefix + ".bin", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + prefix + ".bin");
    auto copy = model;
    for_each_block(copy, [&](std::vector<double>& v) {
        for (double x : v) {
            auto bits = std::bit_cast<std::uint64_t>(x);
            unsigned char bytes[8];
            for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
            out.write(reinterpret_cast<const char*>(bytes), 8);
        }
    });
    if (!out) throw Error("write failed: " + prefix + ".bin");
}

ExtractorModel load_model(const std::string& prefix) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(prefix + ".json"));
    } catch (const json::parse_error& e) {
        throw InputError(fmt::format("{}.json: {}", prefix, e.what()));
    }
    const auto& dims = manifest.at("dims");
    ExtractorModel m(dims.at("input").get<std::size_t>(), dims.at("hidden").get<std::size_t>(),
                     dims.at("topics").get<std::size_t>(), dims.at("phrases").get<std::size_t>());
    auto blob = read_text_file(prefix + ".bin");
    std::size_t expected = 0;
    for_each_block(m, [&](std::vector<double>& v) { expected += v.size(); });
    if (blob.size() != expected * 8) {
        throw InputError(fmt::format("{}.bin: {} bytes, expected {}", prefix, blob.size(), expected * 8));
    }
    std::size_t pos = 0;
    for_each_block(m, [&](std::vector<double>& v) {
        for (auto& x : v) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(blob[pos + i])) << (8 * i);
            x = std::bit_cast<double>(bits);
            pos += 8;
        }
    });
    return m;
}

}  // namespace conceptidx
