// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/ccqgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "conceptidx/common.hpp"
#include "conceptidx/retrieval.hpp"

namespace conceptidx {

using nlohmann::json;

SparseVector undercoverage_pi(const SparseVector& y_doc, const SparseVector& y_queries, double eps) {
    if (!(eps > 0.0)) throw InputError("epsilon must be positive");
    if (y_doc.empty()) throw InputError("under-coverage distribution needs a non-empty document support");
    SparseVector pi;
    pi.reserve(y_doc.size());
    double sum = 0.0;
    for (const auto& e : y_doc) {
        double v = std::max(e.value - sparse_at(y_queries, e.index), eps);
        pi.push_back({e.index, v});
        sum += v;
    }
    for (auto& e : pi) e.value /= sum;
    return pi;
}

std::vector<std::size_t> sample_conditions(const SparseVector& pi, std::size_t count, std::mt19937_64& rng) {
    if (count == 0) throw InputError("sample count must be >= 1");
    double total = sparse_sum(pi);
    if (std::abs(total - 1.0) > 1e-9) {
        throw InputError(fmt::format("sampling distribution sums to {:.12f}, not 1", total));
    }
    std::vector<SparseEntry> remaining(pi.begin(), pi.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::size_t> out;
    auto n = std::min(count, remaining.size());
    out.reserve(n);
    while (out.size() < n) {
        double mass = 0.0;
        for (const auto& e : remaining) mass += e.value;
        double u = unit(rng) * mass;
        std::size_t pick = remaining.size() - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            acc += remaining[i].value;
            if (u < acc) {
                pick = i;
                break;
            }
        }
        out.push_back(remaining[pick].index);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

std::vector<std::size_t> sample_conditions(const SparseVector& pi, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_conditions(pi, count, rng);
}

std::vector<GeneratedQuery> generate_query_set(const Document& doc, const ConceptProfile& profile,
                                               const PhraseVocab& vocab, LlmGateway& gateway,
                                               const ExtractorModel& extractor, EmbeddingProvider& embedder,
                                               const QueryGenConfig& cfg,
                                               const std::function<void(const GeneratedQuery&)>& on_query) {
    if (cfg.num_queries == 0) throw ConfigError("qgen.num_queries", "num_queries must be >= 1");
    if (profile.enriched_phrases.empty()) {
        throw InputError(fmt::format("document \"{}\" has no enriched phrase distribution", doc.id));
    }
    std::mt19937_64 rng(splitmix64(cfg.seed ^ fnv1a64(doc.id)));
    auto per_query = std::max<std::size_t>(1, cfg.k_phrases_enriched / cfg.num_queries);

    std::vector<GeneratedQuery> out;
    std::string history;  // previous query texts, space-joined in generation order
    for (std::size_t m = 1; m <= cfg.num_queries; ++m) {
        GeneratedQuery q;
        q.doc_id = doc.id;
        q.seq = m;
        std::optional<std::vector<std::string>> condition;
        if (m > 1) {
            auto covered = extract_from_text(extractor, embedder, history, cfg.k_topics_enriched,
                                             cfg.k_phrases_enriched);
            auto pi = undercoverage_pi(profile.enriched_phrases, covered.phrases, cfg.epsilon);
            std::vector<std::string> phrases;
            for (auto idx : sample_conditions(pi, per_query, rng)) phrases.push_back(vocab[idx]);
            q.condition_phrases = phrases;
            condition = std::move(phrases);
        }
        auto gen = gateway.generate_query(cfg.prompt, doc, condition);
        q.text = std::move(gen.text);
        q.negative_text = std::move(gen.negative);
        if (!history.empty()) history += ' ';
        history += q.text;
        if (on_query) on_query(q);
        out.push_back(std::move(q));
    }
    return out;
}

SparseVector truncate_top_fraction(const SparseVector& v, double fraction) {
    if (v.empty()) return {};
    auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, v.size());
    SparseVector sorted = v;
    std::stable_sort(sorted.begin(), sorted.end(), [](const SparseEntry& a, const SparseEntry& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.index < b.index;
    });
    sorted.resize(keep);
    std::sort(sorted.begin(), sorted.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    return sorted;
}

double concept_similarity(const SparseVector& y_query, const SparseVector& y_doc, double top_fraction) {
    auto a = truncate_top_fraction(y_query, top_fraction);
    auto b = truncate_top_fraction(y_doc, top_fraction);
    double dot = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].index == b[j].index) {
            dot += a[i++].value * b[j++].value;
        } else if (a[i].index < b[j].index) {
            ++i;
        } else {
            ++j;
        }
    }
    return dot;
}

std::vector<double> z_normalize(const std::vector<double>& xs) {
    std::vector<double> z(xs.size(), 0.0);
    if (xs.empty()) return z;
    double n = static_cast<double>(xs.size());
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / n);
    if (sd < 1e-12) return z;
    for (std::size_t i = 0; i < xs.size(); ++i) z[i] = (xs[i] - mean) / sd;
    return z;
}

void filter_queries(std::vector<GeneratedQuery>& queries, const FilterContext& ctx, const FilterConfig& cfg,
                    std::size_t jobs) {
    if (cfg.top_n == 0 || cfg.pool_size == 0 || cfg.top_n > cfg.pool_size) {
        throw ConfigError("qgen.top_n", "filter needs 1 <= top_n <= pool_size");
    }
    if (!(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0)) {
        throw ConfigError("qgen.top_fraction", "top_fraction must be in (0, 1]");
    }
    const auto metric = ctx.embedder.metric();
    parallel_for(queries.size(), jobs, [&](std::size_t qi) {
        auto& q = queries[qi];
        auto source = ctx.corpus.ordinal(q.doc_id);
        auto q_emb = ctx.embedder.embed(q.text);
        auto text_scores = score_all(q_emb, ctx.corpus_embeddings, metric);
        auto pool = rank_scores(ctx.corpus_embeddings.ids(), text_scores, cfg.pool_size);

        std::vector<std::size_t> members;
        members.reserve(pool.entries.size() + 1);
        bool has_source = false;
        for (const auto& e : pool.entries) {
            auto ord = ctx.corpus.ordinal(e.doc_id);
            has_source = has_source || ord == source;
            members.push_back(ord);
        }
        if (!has_source) members.push_back(source);

        auto y_q = extract_from_text(ctx.extractor, ctx.embedder, q.text, ctx.k_topics_enriched,
                                     ctx.k_phrases_enriched)
                       .phrases;
        std::vector<double> s_text, s_concept;
        s_text.reserve(members.size());
        s_concept.reserve(members.size());
        for (auto ord : members) {
            s_text.push_back(text_scores[ord]);
            s_concept.push_back(concept_similarity(y_q, ctx.profiles.at(ord).enriched_phrases, cfg.top_fraction));
        }
        auto zt = z_normalize(s_text);
        auto zc = z_normalize(s_concept);
        std::vector<double> combined(members.size());
        std::vector<std::string> ids(members.size());
        double source_score = 0.0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            combined[i] = zt[i] + zc[i];
            ids[i] = ctx.corpus[members[i]].id;
            if (members[i] == source) source_score = combined[i];
        }
        auto ranked = rank_scores(ids, combined, cfg.top_n);
        q.filter_score = source_score;
        q.kept = std::any_of(ranked.entries.begin(), ranked.entries.end(),
                             [&](const RankedEntry& e) { return e.doc_id == q.doc_id; });
    });
}

std::size_t export_training_pairs(const std::vector<GeneratedQuery>& queries, const std::string& path) {
    std::string out;
    std::size_t n = 0;
    for (const auto& q : queries) {
        if (!q.kept) continue;
        json j;
        j["query"] = q.text;
        j["positive_doc_id"] = q.doc_id;
        if (q.negative_text) j["negative_text"] = *q.negative_text;
        out += j.dump() + "\n";
        ++n;
    }
    if (n == 0) warn("no query survived filtering; training pair file is empty");
    write_text_file(path, out);
    return n;
}

std::string format_queries_jsonl(const std::vector<GeneratedQuery>& queries) {
    std::string out;
    for (const auto& q : queries) {
        json j;
        j["doc_id"] = q.doc_id;
        j["seq"] = q.seq;
        j["text"] = q.text;
        j["condition_phrases"] = q.condition_phrases;
        j["kept"] = q.kept;
        j["filter_score"] = q.filter_score;
        if (q.negative_text) j["negative_text"] = *q.negative_text;
        out += j.dump() + "\n";
    }
    return out;
}

void write_queries(const std::string& path, const std::vector<GeneratedQuery>& queries) {
    write_text_file(path, format_queries_jsonl(queries));
}

std::vector<GeneratedQuery> read_queries(const std::string& path) {
    std::vector<GeneratedQuery> out;
    auto lines = read_lines(path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (trim(lines[ln]).empty()) continue;
        try {
            auto j = json::parse(lines[ln]);
            GeneratedQuery q;
            q.doc_id = j.at("doc_id").get<std::string>();
            q.seq = j.at("seq").get<std::size_t>();
            q.text = j.at("text").get<std::string>();
            q.condition_phrases = j.at("condition_phrases").get<std::vector<std::string>>();
            q.kept = j.value("kept", true);
            q.filter_score = j.value("filter_score", 0.0);
            if (j.contains("negative_text")) q.negative_text = j["negative_text"].get<std::string>();
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw InputError(fmt::format("{}:{}: {}", path, ln + 1, e.what()));
        }
    }
    return out;
}

}  // namespace conceptidx
