// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace conceptidx {

struct SparseEntry {
    std::size_t index = 0;
    double value = 0.0;
    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Sparse vector with entries sorted by ascending index and no duplicates.
using SparseVector = std::vector<SparseEntry>;

double sparse_sum(const SparseVector& v);
double sparse_at(const SparseVector& v, std::size_t index);
SparseVector sparse_from_dense(const std::vector<double>& dense);
std::vector<double> sparse_to_dense(const SparseVector& v, std::size_t size);

/// Per-document concept record. Topic indices refer to Taxonomy::topic_ids(),
/// phrase indices to PhraseVocab. Core lists keep LLM selection order.
struct ConceptProfile {
    std::string doc_id;
    std::vector<std::size_t> core_topics;
    std::vector<std::size_t> core_phrases;
    SparseVector enriched_topics;
    SparseVector enriched_phrases;
};

}  // namespace conceptidx
