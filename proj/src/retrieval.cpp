// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "conceptidx/common.hpp"

namespace conceptidx {

using nlohmann::json;

void RankedList::renumber() {
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = i + 1;
}

RankedList rank_scores(const std::vector<std::string>& ids, const std::vector<double>& scores, std::size_t k,
                       std::string query_id) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return ids[a] < ids[b];
                      });
    RankedList out;
    out.query_id = std::move(query_id);
    out.entries.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.entries.push_back({ids[order[i]], scores[order[i]], i + 1});
    return out;
}

std::vector<double> score_all(std::span<const float> query, const EmbeddingMatrix& corpus, Metric metric) {
    if (corpus.rows() > 0 && query.size() != corpus.dim()) {
        throw InputError(fmt::format("query dimension {} does not match corpus dimension {}", query.size(),
                                     corpus.dim()));
    }
    std::vector<double> scores(corpus.rows());
    for (std::size_t r = 0; r < corpus.rows(); ++r) scores[r] = similarity(query, corpus.row(r), metric);
    return scores;
}

RankedList dense_search(std::span<const float> query, const EmbeddingMatrix& corpus, std::size_t k, Metric metric,
                        std::string query_id) {
    if (corpus.empty()) throw InputError("dense_search over an empty corpus");
    return rank_scores(corpus.ids(), score_all(query, corpus, metric), k, std::move(query_id));
}

GainKind parse_gain(const std::string& name) {
    if (name == "linear") return GainKind::linear;
    if (name == "exp") return GainKind::exponential;
    throw ConfigError("eval.ndcg_gain", "ndcg_gain must be \"linear\" or \"exp\", got \"" + name + "\"");
}

LatencyStats summarize_latency(std::vector<double> millis) {
    LatencyStats s;
    s.samples = millis.size();
    if (millis.empty()) return s;
    std::sort(millis.begin(), millis.end());
    auto pct = [&](double p) {
        // Nearest-rank percentile.
        auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(millis.size())));
        return millis[std::clamp<std::size_t>(rank, 1, millis.size()) - 1];
    };
    s.p50_ms = pct(0.50);
    s.p95_ms = pct(0.95);
    s.mean_ms = std::accumulate(millis.begin(), millis.end(), 0.0) / static_cast<double>(millis.size());
    return s;
}

json MetricsReport::to_json() const {
    auto keyed = [](const std::map<std::size_t, double>& m, const char* name) {
        json j = json::object();
        for (const auto& [k, v] : m) j[fmt::format("{}@{}", name, k)] = v;
        return j;
    };
    json j;
    json mean = json::object();
    mean.update(keyed(mean_ndcg, "ndcg"));
    mean.update(keyed(mean_map, "map"));
    mean.update(keyed(mean_recall, "recall"));
    j["mean"] = mean;
    j["num_queries"] = per_query.size();
    json pq = json::array();
    for (const auto& q : per_query) {
        json e;
        e["query_id"] = q.query_id;
        e.update(keyed(q.ndcg, "ndcg"));
        e.update(keyed(q.map, "map"));
        e.update(keyed(q.recall, "recall"));
        if (q.no_relevant) e["no_relevant"] = true;
        pq.push_back(std::move(e));
    }
    j["per_query"] = std::move(pq);
    j["no_relevant"] = no_relevant;
    j["skipped"] = skipped;
    if (!latency.empty()) {
        json lat = json::object();
        for (const auto& [stage, s] : latency) {
            lat[stage] = {{"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}, {"mean_ms", s.mean_ms}, {"samples", s.samples}};
        }
        j["latency"] = std::move(lat);
    }
    return j;
}

MetricsReport compute_metrics(const std::vector<RankedList>& runs, const Qrels& qrels,
                              const std::vector<std::size_t>& ks, GainKind gain) {
    MetricsReport report;
    auto gain_of = [gain](int grade) {
        return gain == GainKind::linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
    };
    for (const auto& run : runs) {
        auto qit = qrels.find(run.query_id);
        if (qit == qrels.end()) {
            warn(fmt::format("query \"{}\" has no judgments; skipped", run.query_id));
            report.skipped.push_back(run.query_id);
            continue;
        }
        const auto& judged = qit->second;
        std::vector<int> ideal;
        std::size_t total_relevant = 0;
        for (const auto& [_, g] : judged) {
            ideal.push_back(g);
            if (g >= 1) ++total_relevant;
        }
        std::sort(ideal.rbegin(), ideal.rend());

        QueryMetrics qm;
        qm.query_id = run.query_id;
        qm.no_relevant = total_relevant == 0;
        for (auto k : ks) {
            double dcg = 0.0;
            double idcg = 0.0;
            double ap = 0.0;
            std::size_t hits = 0;
            auto depth = std::min(k, run.entries.size());
            for (std::size_t i = 0; i < depth; ++i) {
                auto it = judged.find(run.entries[i].doc_id);
                int g = it == judged.end() ? 0 : it->second;
                dcg += gain_of(g) / std::log2(static_cast<double>(i) + 2.0);
                if (g >= 1) {
                    ++hits;
                    ap += static_cast<double>(hits) / static_cast<double>(i + 1);
                }
            }
            for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
                idcg += gain_of(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
            }
            qm.ndcg[k] = idcg > 0.0 ? dcg / idcg : 0.0;
            qm.map[k] = total_relevant ? ap / static_cast<double>(total_relevant) : 0.0;
            qm.recall[k] = total_relevant ? static_cast<double>(hits) / static_cast<double>(total_relevant) : 0.0;
        }
        if (qm.no_relevant) {
            warn(fmt::format("query \"{}\" has no relevant documents; scored 0", run.query_id));
            report.no_relevant.push_back(run.query_id);
        }
        report.per_query.push_back(std::move(qm));
    }
    if (report.per_query.empty()) throw InputError("no run query has relevance judgments");
    auto n = static_cast<double>(report.per_query.size());
    for (auto k : ks) {
        double sn = 0.0, sm = 0.0, sr = 0.0;
        for (const auto& q : report.per_query) {
            sn += q.ndcg.at(k);
            sm += q.map.at(k);
            sr += q.recall.at(k);
        }
        report.mean_ndcg[k] = sn / n;
        report.mean_map[k] = sm / n;
        report.mean_recall[k] = sr / n;
    }
    return report;
}

QuerySetStats query_set_stats(const std::vector<std::string>& queries, std::size_t source_doc,
                              const Bm25Index& index) {
    if (queries.empty()) throw InputError("query_set_stats needs at least one query");
    QuerySetStats out;
    std::vector<TfVector> tfs;
    tfs.reserve(queries.size());
    double overlap = 0.0;
    for (const auto& q : queries) {
        tfs.push_back(tf_vector(q));
        overlap += index.score(tokenize(q), source_doc);
    }
    out.lexical_overlap = overlap / static_cast<double>(queries.size());
    if (queries.size() >= 2) {
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < tfs.size(); ++i) {
            for (std::size_t j = i + 1; j < tfs.size(); ++j) {
                sum += tf_cosine(tfs[i], tfs[j]);
                ++pairs;
            }
        }
        out.redundancy = sum / static_cast<double>(pairs);
    }
    return out;
}

std::string format_run(const std::vector<RankedList>& runs, const std::string& tag) {
    std::string out;
    for (const auto& run : runs) {
        for (const auto& e : run.entries) {
            out += fmt::format("{} Q0 {} {} {:.6f} {}\n", run.query_id, e.doc_id, e.rank, e.score, tag);
        }
    }
    return out;
}

void write_run(const std::string& path, const std::vector<RankedList>& runs, const std::string& tag) {
    write_text_file(path, format_run(runs, tag));
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::vector<RankedList> parse_run(const std::string& content, const std::string& source) {
    std::vector<RankedList> runs;
    std::map<std::string, std::size_t> pos;
    std::istringstream in(content);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (trim(line).empty()) continue;
        auto f = split_ws(line);
        RankedEntry e;
        if (f.size() != 6 || !parse_number(f[3], e.rank) || !parse_number(f[4], e.score)) {
            throw InputError(fmt::format("{}:{}: malformed run line \"{}\"", source, ln, line));
        }
        e.doc_id = f[2];
        auto [it, inserted] = pos.emplace(f[0], runs.size());
        if (inserted) runs.push_back(RankedList{f[0], {}});
        runs[it->second].entries.push_back(std::move(e));
    }
    return runs;
}

std::vector<RankedList> read_run(const std::string& path) { return parse_run(read_text_file(path), path); }

std::string format_qrels(const Qrels& qrels) {
    std::string out;
    for (const auto& [qid, docs] : qrels) {
        for (const auto& [doc, grade] : docs) out += fmt::format("{} 0 {} {}\n", qid, doc, grade);
    }
    return out;
}

Qrels parse_qrels(const std::string& content, const std::string& source) {
    Qrels q;
    std::istringstream in(content);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (trim(line).empty()) continue;
        auto f = split_ws(line);
        int grade = 0;
        if (f.size() != 4 || !parse_number(f[3], grade) || grade < 0) {
            throw InputError(fmt::format("{}:{}: malformed qrels line \"{}\"", source, ln, line));
        }
        q[f[0]][f[2]] = grade;
    }
    return q;
}

Qrels read_qrels(const std::string& path) { return parse_qrels(read_text_file(path), path); }

}  // namespace conceptidx
