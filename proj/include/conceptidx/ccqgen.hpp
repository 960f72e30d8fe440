// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conceptidx/concept_profile.hpp"
#include "conceptidx/corpus.hpp"
#include "conceptidx/embedding.hpp"
#include "conceptidx/extractor.hpp"
#include "conceptidx/llm.hpp"

namespace conceptidx {

struct GeneratedQuery {
    std::string doc_id;
    std::size_t seq = 1;  // 1-based within the document
    std::string text;
    std::vector<std::string> condition_phrases;  // empty iff seq == 1
    bool kept = true;
    double filter_score = 0.0;
    std::optional<std::string> negative_text;

    friend bool operator==(const GeneratedQuery&, const GeneratedQuery&) = default;
};

/// normalize(max(y_doc - y_queries, eps)) over the support of y_doc.
/// Throws InputError for an empty support or non-positive eps.
SparseVector undercoverage_pi(const SparseVector& y_doc, const SparseVector& y_queries, double eps = 1e-3);

/// Sequential weighted draws without replacement; returns min(count,
/// |support|) distinct indices in draw order. `pi` must sum to 1 (1e-9).
std::vector<std::size_t> sample_conditions(const SparseVector& pi, std::size_t count, std::mt19937_64& rng);
std::vector<std::size_t> sample_conditions(const SparseVector& pi, std::size_t count, std::uint64_t seed);

struct QueryGenConfig {
    std::size_t num_queries = 5;  // M
    double epsilon = 1e-3;
    std::size_t k_topics_enriched = 15;
    std::size_t k_phrases_enriched = 30;
    PromptTemplate prompt = default_template(PromptKind::query_plain);
    std::uint64_t seed = 0;
};

/// Sequential generation: query 1 is unconditioned; every later query is
/// conditioned on floor(k_phrases_enriched / M) phrases sampled from the
/// under-coverage distribution of the queries so far. `on_query` sees each
/// query as soon as it exists.
std::vector<GeneratedQuery> generate_query_set(const Document& doc, const ConceptProfile& profile,
                                               const PhraseVocab& vocab, LlmGateway& gateway,
                                               const ExtractorModel& extractor, EmbeddingProvider& embedder,
                                               const QueryGenConfig& cfg,
                                               const std::function<void(const GeneratedQuery&)>& on_query = {});

/// Keep the ceil(fraction * |support|) largest entries (ties: lower index).
SparseVector truncate_top_fraction(const SparseVector& v, double fraction);

/// Inner product of the two vectors after each is truncated to its own top
/// fraction.
double concept_similarity(const SparseVector& y_query, const SparseVector& y_doc, double top_fraction);

/// (x - mean) / std over the population; all zeros when std < 1e-12.
std::vector<double> z_normalize(const std::vector<double>& xs);

struct FilterConfig {
    std::size_t top_n = 10;       // N
    std::size_t pool_size = 1000; // C
    double top_fraction = 0.1;    // rho
};

struct FilterContext {
    const Corpus& corpus;
    const EmbeddingMatrix& corpus_embeddings;  // rows align with corpus
    const std::vector<ConceptProfile>& profiles;
    const ExtractorModel& extractor;
    EmbeddingProvider& embedder;
    std::size_t k_topics_enriched = 15;
    std::size_t k_phrases_enriched = 30;
};

/// Round-trip filter on z(text) + z(concept) over the top-C pool (source
/// document always included). Sets kept and filter_score in place.
void filter_queries(std::vector<GeneratedQuery>& queries, const FilterContext& ctx, const FilterConfig& cfg,
                    std::size_t jobs = 1);

/// JSONL {"query","positive_doc_id","negative_text"?} for kept queries.
std::size_t export_training_pairs(const std::vector<GeneratedQuery>& queries, const std::string& path);

std::string format_queries_jsonl(const std::vector<GeneratedQuery>& queries);
void write_queries(const std::string& path, const std::vector<GeneratedQuery>& queries);
std::vector<GeneratedQuery> read_queries(const std::string& path);

}  // namespace conceptidx
