// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "conceptidx/corpus.hpp"
#include "conceptidx/embedding.hpp"

namespace conceptidx {

struct TraversalResult {
    std::vector<std::string> candidates;  // visit order, root excluded
    std::size_t visited_count = 0;        // includes the root
    std::map<std::string, double> per_node_sim;
};

/// Mean cosine between the document and every topic name in the subtree of
/// `node` (node included). `name_embeddings` rows are keyed by node id.
double node_similarity(std::span<const float> doc_embedding, const std::string& node, const Taxonomy& taxonomy,
                       const EmbeddingMatrix& name_embeddings);

/// Top-down traversal: a visited node at level l visits its
/// min(l + 2, #children) most similar children (ties: ascending node id).
/// Every visited node except the root becomes a candidate.
TraversalResult traverse_candidates(std::span<const float> doc_embedding, const Taxonomy& taxonomy,
                                    const EmbeddingMatrix& name_embeddings);

/// Embeds every node name once; rows keyed by node id.
EmbeddingMatrix embed_taxonomy_names(const Taxonomy& taxonomy, EmbeddingProvider& provider);

}  // namespace conceptidx
