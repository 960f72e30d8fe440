// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conceptidx/concept_profile.hpp"
#include "conceptidx/embedding.hpp"

namespace conceptidx {

/// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Shared ReLU trunk feeding a topic head and a phrase head, each softmax.
struct ExtractorModel {
    Matrix w1;  // D x H
    std::vector<double> b1;
    Matrix wt;  // H x |T|
    std::vector<double> bt;
    Matrix wp;  // H x |P|
    std::vector<double> bp;

    ExtractorModel() = default;
    ExtractorModel(std::size_t dim, std::size_t hidden, std::size_t topics, std::size_t phrases);

    std::size_t input_dim() const noexcept { return w1.rows; }
    std::size_t hidden_size() const noexcept { return w1.cols; }
    std::size_t num_topics() const noexcept { return wt.cols; }
    std::size_t num_phrases() const noexcept { return wp.cols; }

    friend bool operator==(const ExtractorModel&, const ExtractorModel&) = default;
};

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 300;
    std::size_t batch_size = 16;
    std::size_t hidden_size = 32;
    std::uint64_t seed = 13;
};

struct HeadOutputs {
    std::vector<double> topics;
    std::vector<double> phrases;
};

HeadOutputs forward(const ExtractorModel& model, std::span<const float> embedding);

/// Multi-hot cross-entropy summed over both heads, probabilities clamped
/// below at 1e-12. Throws InputError when a head has no positive label.
double extractor_loss(const HeadOutputs& pred, const ConceptProfile& profile);

/// Gradient of extractor_loss for one example, same layout as the model.
ExtractorModel loss_gradient(const ExtractorModel& model, std::span<const float> embedding,
                             const ConceptProfile& profile);

struct TrainResult {
    ExtractorModel model;
    std::vector<double> epoch_loss;  // mean per-document loss, one per epoch
};

/// Mini-batch gradient descent with seeded uniform(+-1/sqrt(fan_in)) init.
/// `embeddings` rows align with `profiles`.
TrainResult train_extractor(const std::vector<ConceptProfile>& profiles, const EmbeddingMatrix& embeddings,
                            std::size_t num_topics, std::size_t num_phrases, const TrainConfig& cfg);

/// Keep the k largest entries (ties: lower index first), renormalize to 1.
SparseVector top_k_normalized(const std::vector<double>& probs, std::size_t k);

struct EnrichedConcepts {
    SparseVector topics;
    SparseVector phrases;
};

EnrichedConcepts enrich(const ExtractorModel& model, std::span<const float> embedding, std::size_t k_topics,
                        std::size_t k_phrases);

/// Empty (all-whitespace) text maps to all-zero vectors.
EnrichedConcepts extract_from_text(const ExtractorModel& model, EmbeddingProvider& embedder, const std::string& text,
                                   std::size_t k_topics, std::size_t k_phrases);

/// `<prefix>.json` manifest plus `<prefix>.bin` float64 blob in block order
/// W1, b1, Wt, bt, Wp, bp.
void save_model(const ExtractorModel& model, const TrainConfig& cfg, const std::string& prefix);
ExtractorModel load_model(const std::string& prefix);

}  // namespace conceptidx
