// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/lexical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "conceptidx/common.hpp"

namespace conceptidx {

double sparse_sum(const SparseVector& v) {
    double s = 0.0;
    for (const auto& e : v) s += e.value;
    return s;
}

double sparse_at(const SparseVector& v, std::size_t index) {
    auto it = std::lower_bound(v.begin(), v.end(), index,
                               [](const SparseEntry& e, std::size_t i) { return e.index < i; });
    return (it != v.end() && it->index == index) ? it->value : 0.0;
}

SparseVector sparse_from_dense(const std::vector<double>& dense) {
    SparseVector out;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != 0.0) out.push_back({i, dense[i]});
    }
    return out;
}

std::vector<double> sparse_to_dense(const SparseVector& v, std::size_t size) {
    std::vector<double> out(size, 0.0);
    for (const auto& e : v) out.at(e.index) = e.value;
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double bm25_idf(std::size_t df, std::size_t num_docs) {
    double n = static_cast<double>(num_docs);
    double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

Bm25Index::Bm25Index(const std::vector<std::vector<std::string>>& docs, Bm25Params params)
    : params_(params) {
    doc_len_.reserve(docs.size());
    tf_.resize(docs.size());
    std::size_t total = 0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (const auto& tok : docs[d]) {
            auto [it, inserted] = terms_.emplace(tok, static_cast<std::uint32_t>(df_.size()));
            if (inserted) df_.push_back(0);
            if (tf_[d][it->second]++ == 0) ++df_[it->second];
        }
        doc_len_.push_back(docs[d].size());
        total += docs[d].size();
    }
    avgdl_ = docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs.size());
}

Bm25Index Bm25Index::build(const Corpus& corpus, Bm25Params params) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(corpus.size());
    for (const auto& doc : corpus.documents()) docs.push_back(tokenize(doc.text()));
    return Bm25Index(docs, params);
}

std::optional<std::uint32_t> Bm25Index::term_id(const std::string& term) const {
    auto it = terms_.find(term);
    if (it == terms_.end()) return std::nullopt;
    return it->second;
}

std::size_t Bm25Index::df(const std::string& term) const {
    auto id = term_id(term);
    return id ? df_[*id] : 0;
}

std::size_t Bm25Index::tf(const std::string& term, std::size_t doc) const {
    auto id = term_id(term);
    if (!id) return 0;
    const auto& m = tf_.at(doc);
    auto it = m.find(*id);
    return it == m.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const { return bm25_idf(df(term), num_docs()); }

double Bm25Index::score(const std::vector<std::string>& query_terms, std::size_t doc) const {
    if (doc >= num_docs()) throw InputError(fmt::format("unknown document ordinal {}", doc));
    const auto& m = tf_[doc];
    double norm = params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc_len_[doc]) / avgdl_);
    double s = 0.0;
    for (const auto& t : query_terms) {
        auto id = term_id(t);
        if (!id) continue;
        auto it = m.find(*id);
        if (it == m.end()) continue;
        double f = it->second;
        s += bm25_idf(df_[*id], num_docs()) * f * (params_.k1 + 1.0) / (f + norm);
    }
    return s;
}

bool Bm25Index::contains_all(const std::vector<std::string>& terms, std::size_t doc) const {
    if (terms.empty()) return false;
    const auto& m = tf_.at(doc);
    return std::all_of(terms.begin(), terms.end(), [&](const std::string& t) {
        auto id = term_id(t);
        return id && m.count(*id) != 0;
    });
}

double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    if (a.empty() && b.empty()) return 0.0;
    std::vector<std::size_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    double uni = static_cast<double>(a.size() + b.size() - inter.size());
    return static_cast<double>(inter.size()) / uni;
}

std::vector<std::size_t> topic_neighbors(const std::vector<ConceptProfile>& profiles, std::size_t doc,
                                         std::size_t n) {
    const auto& self = profiles.at(doc);
    if (self.core_topics.empty()) {
        warn(fmt::format("document \"{}\" has no core topics; no topical neighbors", self.doc_id));
        return {};
    }
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (i == doc) continue;
        scored.emplace_back(jaccard(self.core_topics, profiles[i].core_topics), i);
    }
    auto keep = std::min(n, scored.size());
    auto better = [&](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return profiles[x.second].doc_id < profiles[y.second].doc_id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    std::vector<std::size_t> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
    return out;
}

double phrase_log_distinctiveness(const std::vector<std::string>& phrase_tokens, std::size_t doc,
                                  const std::vector<std::size_t>& neighbors, const Bm25Index& index) {
    // log(1 + sum exp(s)) with the "1" as exp(0), shifted by the max term.
    double m = 0.0;
    std::vector<double> s_nb;
    s_nb.reserve(neighbors.size());
    for (auto nb : neighbors) {
        s_nb.push_back(index.score(phrase_tokens, nb));
        m = std::max(m, s_nb.back());
    }
    double acc = std::exp(-m);
    for (double s : s_nb) acc += std::exp(s - m);
    return index.score(phrase_tokens, doc) - (m + std::log(acc));
}

double phrase_distinctiveness(const std::vector<std::string>& phrase_tokens, std::size_t doc,
                              const std::vector<std::size_t>& neighbors, const Bm25Index& index) {
    return std::exp(phrase_log_distinctiveness(phrase_tokens, doc, neighbors, index));
}

std::vector<ScoredPhrase> candidate_phrases(std::size_t doc, const PhraseVocab& vocab, const Bm25Index& index,
                                            const std::vector<ConceptProfile>& profiles,
                                            const CandidatePhraseConfig& cfg) {
    auto neighbors = topic_neighbors(profiles, doc, cfg.neighbors);
    std::vector<ScoredPhrase> scored;
    for (std::size_t p = 0; p < vocab.size(); ++p) {
        auto toks = tokenize(vocab[p]);
        if (!index.contains_all(toks, doc)) continue;
        scored.push_back({p, phrase_log_distinctiveness(toks, doc, neighbors, index)});
    }
    if (scored.empty()) {
        warn(fmt::format("document \"{}\" contains no vocabulary phrase", profiles.at(doc).doc_id));
        return {};
    }
    std::sort(scored.begin(), scored.end(), [&](const ScoredPhrase& a, const ScoredPhrase& b) {
        if (a.score != b.score) return a.score > b.score;
        return vocab[a.phrase] < vocab[b.phrase];
    });
    auto keep = static_cast<std::size_t>(std::ceil(cfg.top_fraction * static_cast<double>(scored.size()) - 1e-9));
    scored.resize(std::clamp<std::size_t>(keep, 1, scored.size()));
    return scored;
}

TfVector tf_vector(std::string_view text) {
    TfVector v;
    for (auto& t : tokenize(text)) ++v[t];
    return v;
}

double tf_cosine(const TfVector& a, const TfVector& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [t, c] : a) {
        na += double(c) * double(c);
        auto it = b.find(t);
        if (it != b.end()) dot += double(c) * double(it->second);
    }
    for (const auto& [t, c] : b) nb += double(c) * double(c);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace conceptidx
