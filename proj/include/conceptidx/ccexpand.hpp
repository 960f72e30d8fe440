// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "conceptidx/ccqgen.hpp"
#include "conceptidx/concept_profile.hpp"
#include "conceptidx/corpus.hpp"
#include "conceptidx/embedding.hpp"
#include "conceptidx/extractor.hpp"
#include "conceptidx/llm.hpp"
#include "conceptidx/retrieval.hpp"

namespace conceptidx {

struct Snippet {
    std::string doc_id;
    std::size_t query_seq = 0;
    std::string text;
    EmbeddingVector embedding;

    friend bool operator==(const Snippet&, const Snippet&) = default;
};

/// Snippets grouped by document; immutable once search starts.
class SnippetIndex {
public:
    void add(Snippet s);
    const std::vector<Snippet>* find(const std::string& doc_id) const;
    std::size_t num_docs() const noexcept { return per_doc_.size(); }
    std::size_t size() const noexcept;
    const std::map<std::string, std::vector<Snippet>>& per_doc() const noexcept { return per_doc_; }

    /// `<dir>/snippets.jsonl` plus `<dir>/snippet_emb.{f32,manifest.json}`
    /// with row ids "docid#seq".
    void save(const std::string& dir) const;
    static SnippetIndex load(const std::string& dir);

private:
    std::map<std::string, std::vector<Snippet>> per_doc_;
};

enum class RescoreVariant { snippet_max, snippet_average, concept_match, none };

RescoreVariant parse_variant(const std::string& name);
std::string to_string(RescoreVariant v);

struct RescoreConfig {
    double alpha = 0.8;
    std::size_t top_k = 1000;
    RescoreVariant variant = RescoreVariant::snippet_max;
    std::size_t hyde_n = 5;
};

/// One snippet per query, generated and embedded offline.
std::vector<Snippet> build_snippets(const Document& doc, const std::vector<GeneratedQuery>& queries,
                                    LlmGateway& gateway, EmbeddingProvider& embedder);

/// (1 - alpha) * base + alpha * best snippet similarity over the top-K block
/// of `base`; documents without snippets fall back to their base score. The
/// tail beyond K is appended unchanged.
RankedList rescore_with_snippets(std::span<const float> query, const RankedList& base, const SnippetIndex& index,
                                 Metric metric, const RescoreConfig& cfg);

/// Same blend with the similarity to the mean snippet embedding (unit-length
/// mean under cosine).
RankedList rescore_average(std::span<const float> query, const RankedList& base, const SnippetIndex& index,
                           Metric metric, const RescoreConfig& cfg);

/// z(base score) + z(concept similarity) over the top-K block.
RankedList rescore_concept_match(const std::string& query_text, const RankedList& base, const Corpus& corpus,
                                 const std::vector<ConceptProfile>& profiles, const ExtractorModel& extractor,
                                 EmbeddingProvider& embedder, const RescoreConfig& cfg, double top_fraction = 0.1,
                                 std::size_t k_topics_enriched = 15, std::size_t k_phrases_enriched = 30);

/// score(d) = (sim(q, d) + sum_i sim(h_i, d)) / (n + 1) over n generated
/// hypothetical documents; n = 0 is plain dense search.
RankedList hyde_expand(const std::string& query_text, std::span<const float> query, LlmGateway& gateway,
                       EmbeddingProvider& embedder, std::size_t n, const EmbeddingMatrix& corpus, Metric metric,
                       std::size_t k, const std::string& query_id = {});

}  // namespace conceptidx
