// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptidx/embedding.hpp"
#include "conceptidx/lexical.hpp"

namespace conceptidx {

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;

    /// Reassigns ranks 1..n in current order.
    void renumber();
    friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Sorts (id, score) pairs by descending score, ties by ascending id, and
/// keeps the first k.
RankedList rank_scores(const std::vector<std::string>& ids, const std::vector<double>& scores, std::size_t k,
                       std::string query_id = {});

/// Similarity of `query` against every row of `corpus`.
std::vector<double> score_all(std::span<const float> query, const EmbeddingMatrix& corpus, Metric metric);

/// Exact top-k scan. k larger than the corpus returns the full ranking.
RankedList dense_search(std::span<const float> query, const EmbeddingMatrix& corpus, std::size_t k, Metric metric,
                        std::string query_id = {});

/// query id -> (doc id -> grade)
using Qrels = std::map<std::string, std::map<std::string, int>>;

enum class GainKind { linear, exponential };
GainKind parse_gain(const std::string& name);

struct QueryMetrics {
    std::string query_id;
    std::map<std::size_t, double> ndcg;
    std::map<std::size_t, double> map;
    std::map<std::size_t, double> recall;
    bool no_relevant = false;
};

struct LatencyStats {
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double mean_ms = 0.0;
    std::size_t samples = 0;
};

LatencyStats summarize_latency(std::vector<double> millis);

struct MetricsReport {
    std::vector<QueryMetrics> per_query;
    std::map<std::size_t, double> mean_ndcg;
    std::map<std::size_t, double> mean_map;
    std::map<std::size_t, double> mean_recall;
    std::vector<std::string> no_relevant;  // evaluated queries without any relevant doc
    std::vector<std::string> skipped;      // run queries absent from qrels
    std::map<std::string, LatencyStats> latency;

    nlohmann::json to_json() const;
};

/// nDCG@k (gain = grade or 2^grade - 1, log2 discount, ideal from all judged
/// grades), MAP@k and Recall@k with relevance = grade >= 1, AP divided by the
/// total number of relevant documents.
MetricsReport compute_metrics(const std::vector<RankedList>& runs, const Qrels& qrels,
                              const std::vector<std::size_t>& ks, GainKind gain = GainKind::linear);

struct QuerySetStats {
    std::optional<double> redundancy;  // undefined for a single query
    double lexical_overlap = 0.0;
};

/// Redundancy: mean pairwise cosine of term-frequency vectors. Lexical
/// overlap: mean BM25 of each query against the source document.
QuerySetStats query_set_stats(const std::vector<std::string>& queries, std::size_t source_doc,
                              const Bm25Index& index);

/// TREC run: `qid Q0 docid rank score tag`, score with 6 decimals.
std::string format_run(const std::vector<RankedList>& runs, const std::string& tag);
void write_run(const std::string& path, const std::vector<RankedList>& runs, const std::string& tag);
std::vector<RankedList> parse_run(const std::string& content, const std::string& source = "run");
std::vector<RankedList> read_run(const std::string& path);

/// TREC qrels: `qid 0 docid grade`.
std::string format_qrels(const Qrels& qrels);
Qrels parse_qrels(const std::string& content, const std::string& source = "qrels");
Qrels read_qrels(const std::string& path);

}  // namespace conceptidx
