// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/ccexpand.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "conceptidx/common.hpp"

namespace conceptidx {

namespace fs = std::filesystem;
using nlohmann::json;

void SnippetIndex::add(Snippet s) {
    auto& list = per_doc_[s.doc_id];
    for (const auto& existing : list) {
        if (existing.query_seq == s.query_seq) {
            throw InputError(fmt::format("duplicate snippet {}#{}", s.doc_id, s.query_seq));
        }
    }
    list.push_back(std::move(s));
}

const std::vector<Snippet>* SnippetIndex::find(const std::string& doc_id) const {
    auto it = per_doc_.find(doc_id);
    return it == per_doc_.end() ? nullptr : &it->second;
}

std::size_t SnippetIndex::size() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, v] : per_doc_) n += v.size();
    return n;
}

void SnippetIndex::save(const std::string& dir) const {
    fs::create_directories(dir);
    std::string jsonl;
    EmbeddingMatrix emb;
    for (const auto& [doc, list] : per_doc_) {
        for (const auto& s : list) {
            jsonl += json{{"doc_id", s.doc_id}, {"query_seq", s.query_seq}, {"text", s.text}}.dump() + "\n";
            emb.add(fmt::format("{}#{}", s.doc_id, s.query_seq), s.embedding);
        }
    }
    write_text_file((fs::path(dir) / "snippets.jsonl").string(), jsonl);
    write_embedding_store(emb, (fs::path(dir) / "snippet_emb").string());
}

SnippetIndex SnippetIndex::load(const std::string& dir) {
    auto path = (fs::path(dir) / "snippets.jsonl").string();
    auto emb = read_embedding_store((fs::path(dir) / "snippet_emb").string());
    SnippetIndex index;
    auto lines = read_lines(path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (trim(lines[ln]).empty()) continue;
        Snippet s;
        try {
            auto j = json::parse(lines[ln]);
            s.doc_id = j.at("doc_id").get<std::string>();
            s.query_seq = j.at("query_seq").get<std::size_t>();
            s.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw InputError(fmt::format("{}:{}: {}", path, ln + 1, e.what()));
        }
        auto row = emb.find(fmt::format("{}#{}", s.doc_id, s.query_seq));
        if (!row) throw InputError(fmt::format("{}:{}: snippet has no stored embedding", path, ln + 1));
        s.embedding = emb.row_vector(*row);
        index.add(std::move(s));
    }
    return index;
}

RescoreVariant parse_variant(const std::string& name) {
    if (name == "max" || name == "snippet_max") return RescoreVariant::snippet_max;
    if (name == "average" || name == "snippet_average") return RescoreVariant::snippet_average;
    if (name == "concept" || name == "concept_match") return RescoreVariant::concept_match;
    if (name == "none") return RescoreVariant::none;
    throw ConfigError("variant", "unknown rescore variant \"" + name + "\"");
}

std::string to_string(RescoreVariant v) {
    switch (v) {
        case RescoreVariant::snippet_max: return "max";
        case RescoreVariant::snippet_average: return "average";
        case RescoreVariant::concept_match: return "concept";
        case RescoreVariant::none: return "none";
    }
    return "none";
}

std::vector<Snippet> build_snippets(const Document& doc, const std::vector<GeneratedQuery>& queries,
                                    LlmGateway& gateway, EmbeddingProvider& embedder) {
    if (queries.empty()) throw InputError(fmt::format("document \"{}\" has no queries to expand", doc.id));
    std::vector<Snippet> out;
    std::vector<std::string> texts;
    for (const auto& q : queries) {
        Snippet s;
        s.doc_id = doc.id;
        s.query_seq = q.seq;
        s.text = gateway.generate_snippet(doc, q.text);
        texts.push_back(s.text);
        out.push_back(std::move(s));
    }
    auto emb = embedder.embed_batch(texts);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].embedding = emb.row_vector(i);
    return out;
}

namespace {

void check_config(const RescoreConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha", "alpha must be in [0,1]");
    if (cfg.top_k == 0) throw ConfigError("top_k", "top_k must be >= 1");
}

// Re-sorts the first K entries of `base` by `rel` and appends the tail.
RankedList reblock(const RankedList& base, std::size_t k, const std::vector<double>& rel) {
    std::vector<std::string> ids;
    ids.reserve(k);
    for (std::size_t i = 0; i < k; ++i) ids.push_back(base.entries[i].doc_id);
    auto out = rank_scores(ids, rel, k, base.query_id);
    out.entries.insert(out.entries.end(), base.entries.begin() + static_cast<std::ptrdiff_t>(k), base.entries.end());
    out.renumber();
    return out;
}

template <typename SnippetTerm>
RankedList blend(const RankedList& base, const SnippetIndex& index, const RescoreConfig& cfg, SnippetTerm term) {
    check_config(cfg);
    auto k = std::min(cfg.top_k, base.entries.size());
    std::vector<double> rel(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& e = base.entries[i];
        const auto* snippets = index.find(e.doc_id);
        double s = (snippets && !snippets->empty()) ? term(*snippets) : e.score;
        rel[i] = (1.0 - cfg.alpha) * e.score + cfg.alpha * s;
    }
    return reblock(base, k, rel);
}

}  // namespace

RankedList rescore_with_snippets(std::span<const float> query, const RankedList& base, const SnippetIndex& index,
                                 Metric metric, const RescoreConfig& cfg) {
    return blend(base, index, cfg, [&](const std::vector<Snippet>& snippets) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& s : snippets) best = std::max(best, similarity(query, s.embedding, metric));
        return best;
    });
}

RankedList rescore_average(std::span<const float> query, const RankedList& base, const SnippetIndex& index,
                           Metric metric, const RescoreConfig& cfg) {
    return blend(base, index, cfg, [&](const std::vector<Snippet>& snippets) {
        std::vector<double> mean(snippets.front().embedding.size(), 0.0);
        for (const auto& s : snippets) {
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.embedding[i];
        }
        double scale = 1.0 / static_cast<double>(snippets.size());
        if (metric == Metric::cosine) {
            double norm = 0.0;
            for (double x : mean) norm += x * x;
            norm = std::sqrt(norm);
            scale = norm > 0.0 ? 1.0 / norm : 0.0;
        }
        EmbeddingVector v(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) v[i] = static_cast<float>(mean[i] * scale);
        return similarity(query, v, metric);
    });
}

RankedList rescore_concept_match(const std::string& query_text, const RankedList& base, const Corpus& corpus,
                                 const std::vector<ConceptProfile>& profiles, const ExtractorModel& extractor,
                                 EmbeddingProvider& embedder, const RescoreConfig& cfg, double top_fraction,
                                 std::size_t k_topics_enriched, std::size_t k_phrases_enriched) {
    check_config(cfg);
    auto k = std::min(cfg.top_k, base.entries.size());
    auto y_q = extract_from_text(extractor, embedder, query_text, k_topics_enriched, k_phrases_enriched).phrases;
    std::vector<double> s_text(k), s_concept(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& e = base.entries[i];
        s_text[i] = e.score;
        s_concept[i] = concept_similarity(y_q, profiles.at(corpus.ordinal(e.doc_id)).enriched_phrases, top_fraction);
    }
    auto zt = z_normalize(s_text);
    auto zc = z_normalize(s_concept);
    std::vector<double> rel(k);
    for (std::size_t i = 0; i < k; ++i) rel[i] = zt[i] + zc[i];
    return reblock(base, k, rel);
}

RankedList hyde_expand(const std::string& query_text, std::span<const float> query, LlmGateway& gateway,
                       EmbeddingProvider& embedder, std::size_t n, const EmbeddingMatrix& corpus, Metric metric,
                       std::size_t k, const std::string& query_id) {
    auto scores = score_all(query, corpus, metric);
    if (n > 0) {
        auto hypo = gateway.generate_hypothetical_docs(query_text, n);
        auto emb = embedder.embed_batch(hypo);
        for (std::size_t h = 0; h < emb.rows(); ++h) {
            auto hs = score_all(emb.row(h), corpus, metric);
            for (std::size_t d = 0; d < scores.size(); ++d) scores[d] += hs[d];
        }
        for (auto& s : scores) s /= static_cast<double>(n + 1);
    }
    return rank_scores(corpus.ids(), scores, k, query_id);
}

}  // namespace conceptidx
