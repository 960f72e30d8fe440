// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "conceptidx/concept_profile.hpp"
#include "conceptidx/corpus.hpp"

namespace conceptidx {

/// Lowercase, split on any run of non-alphanumeric bytes, drop empties.
/// Bytes >= 0x80 count as alphanumeric so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// Okapi BM25 statistics over a fixed document collection.
class Bm25Index {
public:
    Bm25Index() = default;
    Bm25Index(const std::vector<std::vector<std::string>>& docs, Bm25Params params = {});
    static Bm25Index build(const Corpus& corpus, Bm25Params params = {});

    std::size_t num_docs() const noexcept { return doc_len_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    const Bm25Params& params() const noexcept { return params_; }
    std::size_t doc_len(std::size_t doc) const { return doc_len_.at(doc); }
    std::size_t df(const std::string& term) const;
    std::size_t tf(const std::string& term, std::size_t doc) const;
    double idf(const std::string& term) const;

    /// Sum over query terms (duplicates counted) of idf * saturated tf.
    double score(const std::vector<std::string>& query_terms, std::size_t doc) const;

    /// True when every term of `terms` occurs at least once in `doc`.
    bool contains_all(const std::vector<std::string>& terms, std::size_t doc) const;

private:
    std::optional<std::uint32_t> term_id(const std::string& term) const;

    Bm25Params params_;
    std::unordered_map<std::string, std::uint32_t> terms_;
    std::vector<std::uint32_t> df_;
    std::vector<std::size_t> doc_len_;
    std::vector<std::unordered_map<std::uint32_t, std::uint32_t>> tf_;
    double avgdl_ = 0.0;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
double bm25_idf(std::size_t df, std::size_t num_docs);

double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b);

/// Top-n other documents by Jaccard similarity of core topics, ties broken
/// by ascending doc id. Returns profile positions.
std::vector<std::size_t> topic_neighbors(const std::vector<ConceptProfile>& profiles, std::size_t doc,
                                         std::size_t n = 100);

/// exp(s_d) / (1 + sum exp(s_d')) with s = BM25 of the phrase tokens.
/// Saturates to +inf when s_d alone exceeds the double range.
double phrase_distinctiveness(const std::vector<std::string>& phrase_tokens, std::size_t doc,
                              const std::vector<std::size_t>& neighbors, const Bm25Index& index);

/// Natural log of phrase_distinctiveness via log-sum-exp; always finite.
double phrase_log_distinctiveness(const std::vector<std::string>& phrase_tokens, std::size_t doc,
                                  const std::vector<std::size_t>& neighbors, const Bm25Index& index);

struct ScoredPhrase {
    std::size_t phrase = 0;
    double score = 0.0;  // log distinctiveness
};

struct CandidatePhraseConfig {
    std::size_t neighbors = 100;
    double top_fraction = 0.2;
};

/// Vocabulary phrases contained in `doc`, ranked by distinctiveness
/// (descending, ties lexicographic), truncated to ceil(top_fraction * count).
std::vector<ScoredPhrase> candidate_phrases(std::size_t doc, const PhraseVocab& vocab, const Bm25Index& index,
                                            const std::vector<ConceptProfile>& profiles,
                                            const CandidatePhraseConfig& cfg = {});

/// Term-frequency vector (zero counts absent) and its cosine similarity.
using TfVector = std::map<std::string, std::size_t>;
TfVector tf_vector(std::string_view text);
double tf_cosine(const TfVector& a, const TfVector& b);

}  // namespace conceptidx
