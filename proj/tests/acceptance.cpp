// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks 1-11. One PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "conceptidx/ccexpand.hpp"
#include "conceptidx/pipeline.hpp"
#include "conceptidx/taxonomy_candidates.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace conceptidx;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

Outcome gradient_check() {
    auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) worst = std::max(worst, oracle::gradient_check(seed));
    double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 5.0,
            fmt::format("max relative error {:.2e} over 20 random models (bound 1e-4), {:.3f} s", worst, secs)};
}

Outcome undercoverage() {
    auto pi = undercoverage_pi(sparse_from_dense({0.5, 0.3, 0.2}), sparse_from_dense({0.5, 0, 0}), 1e-3);
    const double want[3] = {0.00200, 0.59880, 0.39920};
    bool hand = pi.size() == 3;
    for (std::size_t i = 0; hand && i < 3; ++i) hand = std::abs(pi[i].value - want[i]) <= 1e-5;

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    double worst_sum = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> d(1 + rng() % 30), q(d.size());
        for (auto& x : d) x = u(rng) < 0.2 ? 0.0 : u(rng);
        d[0] += 1e-3;
        double s = std::accumulate(d.begin(), d.end(), 0.0);
        for (auto& x : d) x /= s;
        for (auto& x : q) x = u(rng) < 0.5 ? 0.0 : u(rng);
        auto p = undercoverage_pi(sparse_from_dense(d), sparse_from_dense(q), 1e-3);
        worst_sum = std::max(worst_sum, std::abs(sparse_sum(p) - 1.0));
    }
    auto yd = sparse_from_dense({0.1, 0.2, 0.3, 0.4, 0.0});
    auto full = undercoverage_pi(yd, yd, 1e-3);
    bool uniform = full.size() == 4;
    for (const auto& e : full) uniform = uniform && e.value == 0.25;
    return {hand && worst_sum <= 1e-9 && uniform,
            fmt::format("hand case ({:.5f}, {:.5f}, {:.5f}); max |sum-1| {:.1e} over 1000; full coverage uniform: {}",
                        pi.at(0).value, pi.at(1).value, pi.at(2).value, worst_sum, uniform)};
}

Outcome sampling() {
    auto pi = sparse_from_dense({0.5, 0.3, 0.2});
    std::mt19937_64 rng(2026);
    std::array<int, 3> counts{};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[sample_conditions(pi, 1, rng).at(0)];
    double dev = 0.0;
    for (int i = 0; i < 3; ++i) dev = std::max(dev, std::abs(counts[i] / double(draws) - pi[i].value));

    auto wide = sparse_from_dense({0.05, 0.1, 0.15, 0.2, 0.25, 0.25});
    bool distinct = true, deterministic = true;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        auto a = sample_conditions(wide, 4, s);
        distinct = distinct && std::set<std::size_t>(a.begin(), a.end()).size() == a.size() && a.size() == 4;
        deterministic = deterministic && sample_conditions(wide, 4, s) == a;
    }
    return {dev <= 0.01 && distinct && deterministic,
            fmt::format("max frequency deviation {:.4f} over {} draws; distinct: {}; seed-deterministic: {}", dev,
                        draws, distinct, deterministic)};
}

// Checks that every visited node at level l expanded min(l + 2, children)
// children, and that repeated runs agree.
Outcome traversal() {
    std::vector<TaxonomyNode> nodes{{"r", "computing", std::nullopt, 0}};
    for (int a = 0; a < 4; ++a) {
        auto ia = fmt::format("a{}", a);
        nodes.push_back({ia, "area " + ia, "r", 0});
        for (int b = 0; b < 5; ++b) {
            auto ib = fmt::format("{}b{}", ia, b);
            nodes.push_back({ib, "field " + ib, ia, 0});
            for (int c = 0; c < 6; ++c) {
                auto ic = fmt::format("{}c{}", ib, c);
                nodes.push_back({ic, "topic " + ic, ib, 0});
                for (int d = 0; d < 7; ++d) {
                    auto id = fmt::format("{}d{}", ic, d);
                    nodes.push_back({id, "subtopic " + id, ic, 0});
                }
            }
        }
    }
    Taxonomy fixture(nodes);
    auto synthetic = load_taxonomy(testutil::repo_path("data/synthetic/taxonomy.json"));

    std::size_t checked = 0, violations = 0, unstable = 0;
    for (const Taxonomy* tax : {&fixture, &synthetic}) {
        std::vector<std::vector<std::string>> runs;
        for (int rep = 0; rep < 10; ++rep) {
            ProviderConfig pc;
            pc.endpoint = "mock-bow";
            pc.dim = 64;
            EmbeddingProvider emb(pc);
            auto names = embed_taxonomy_names(*tax, emb);
            std::vector<std::vector<std::string>> per_doc;
            for (int d = 0; d < 5; ++d) {
                auto doc = emb.embed(fmt::format("document {} about topic a{}b{}", d, d % 4, d % 5));
                auto res = traverse_candidates(doc, *tax, names);
                if (rep == 0) {
                    std::set<std::string> visited(res.candidates.begin(), res.candidates.end());
                    visited.insert(tax->root());
                    for (const auto& id : visited) {
                        const auto& kids = tax->children(id);
                        std::size_t expanded = 0;
                        for (const auto& k : kids) expanded += visited.count(k);
                        std::size_t want = std::min<std::size_t>(tax->node(id).level + 2, kids.size());
                        ++checked;
                        if (expanded != want) ++violations;
                    }
                }
                runs.emplace_back(res.candidates);
            }
        }
        for (std::size_t i = 5; i < runs.size(); ++i)
            if (runs[i] != runs[i % 5]) ++unstable;
    }
    return {checked > 0 && violations == 0 && unstable == 0,
            fmt::format("{} visited nodes checked, {} branching violations, {} unstable runs out of 90", checked,
                        violations, unstable)};
}

Outcome bm25() {
    Bm25Index idx({tokenize("a a b")}, {0.9, 0.4});
    double s = idx.score({"a"}, 0);
    std::mt19937_64 rng(3);
    std::size_t negatives = 0;
    for (int i = 0; i < 10000; ++i) {
        std::size_t n = 1 + rng() % 1000000;
        if (bm25_idf(rng() % (n + 1), n) < 0.0) ++negatives;
    }
    double formula = std::log(4.0 / 3.0) * 2 * 1.9 / 2.9;
    return {std::abs(s - 0.3766) <= 1e-4 && negatives == 0,
            fmt::format("toy score {:.6f} (want 0.3766 +- 1e-4; the closed form ln(4/3)*2*1.9/2.9 is {:.6f}); "
                        "negative idf in {} of 10000",
                        s, formula, negatives)};
}

Outcome metrics() {
    std::mt19937_64 rng(606);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle::metrics_instance_error(rng));
    Qrels qrels{{"q", {{"a", 1}, {"b", 0}, {"c", 2}}}};
    RankedList run{"q", {{"a", 3, 1}, {"b", 2, 2}, {"c", 1, 3}}};
    double hand = compute_metrics({run}, qrels, {3}).mean_ndcg.at(3);
    return {worst <= 1e-9 && std::abs(hand - 0.7602) <= 1e-4,
            fmt::format("max deviation from direct evaluation {:.1e} over 100 instances; hand nDCG@3 {:.4f}", worst,
                        hand)};
}

Outcome rescore_invariants() {
    std::mt19937_64 rng(12);
    std::normal_distribution<float> n(0, 1);
    const std::size_t dim = 16, docs = 60, k = 40;
    std::vector<float> q(dim);
    for (auto& x : q) x = n(rng);
    EmbeddingMatrix corpus(dim);
    SnippetIndex idx;
    std::map<std::string, double> best;
    for (std::size_t d = 0; d < docs; ++d) {
        auto id = fmt::format("d{:03}", d);
        std::vector<float> v(dim);
        for (auto& x : v) x = n(rng);
        corpus.add(id, v);
        best[id] = -2.0;
        for (std::size_t s = 1; s <= 5; ++s) {
            std::vector<float> e(dim);
            for (auto& x : e) x = n(rng);
            best[id] = std::max(best[id], similarity(q, e, Metric::cosine));
            idx.add({id, s, "snippet", e});
        }
    }
    auto base = dense_search(q, corpus, docs, Metric::cosine, "q");
    RescoreConfig cfg;
    cfg.top_k = k;
    cfg.alpha = 0.0;
    bool a0 = rescore_with_snippets(q, base, idx, Metric::cosine, cfg) == base;
    cfg.alpha = 1.0;
    auto r1 = rescore_with_snippets(q, base, idx, Metric::cosine, cfg);
    std::vector<std::string> want;
    for (std::size_t i = 0; i < k; ++i) want.push_back(base.entries[i].doc_id);
    std::sort(want.begin(), want.end(),
              [&](const auto& a, const auto& b) { return best[a] != best[b] ? best[a] > best[b] : a < b; });
    bool a1 = true;
    for (std::size_t i = 0; i < k; ++i) a1 = a1 && r1.entries[i].doc_id == want[i];
    cfg.alpha = 0.8;
    auto r8 = rescore_with_snippets(q, base, idx, Metric::cosine, cfg);
    auto tail_of = [&](const RankedList& r) {
        RankedList t{r.query_id, {r.entries.begin() + k, r.entries.end()}};
        return format_run({t}, "tag");
    };
    bool tail = tail_of(r8) == tail_of(base) && tail_of(r1) == tail_of(base);

    SnippetIndex hand_idx;
    hand_idx.add({"d1", 1, "s", {0.2f, static_cast<float>(std::sqrt(1 - 0.04))}});
    hand_idx.add({"d2", 1, "s", {0.9f, static_cast<float>(std::sqrt(1 - 0.81))}});
    RankedList hb{"q", {{"d1", 0.9, 1}, {"d2", 0.8, 2}}};
    RescoreConfig hc;
    auto hr = rescore_with_snippets(std::vector<float>{1, 0}, hb, hand_idx, Metric::cosine, hc);
    bool hand = hr.entries[0].doc_id == "d2" && std::abs(hr.entries[0].score - 0.88) < 1e-6 &&
                std::abs(hr.entries[1].score - 0.34) < 1e-6;
    return {a0 && a1 && tail && hand,
            fmt::format("alpha=0 identity: {}; alpha=1 snippet order: {}; tail byte-identical: {}; hand blend "
                        "d2 {:.2f} > d1 {:.2f}: {}",
                        a0, a1, tail, hr.entries[0].score, hr.entries[1].score, hand)};
}

// ---------------------------------------------------------------------------
// Shared end-to-end run on the bundled corpus with planted snippet fixtures.

struct EndToEnd {
    testutil::TempDir dir;
    std::unique_ptr<Pipeline> pipeline;
    double seconds = 0.0;
    std::size_t planted = 0;
    std::size_t planted_title_queries = 0;
    nlohmann::json metrics;
    std::string error;
};

void run_end_to_end(EndToEnd& e) {
        try {
            auto t0 = Clock::now();
            auto cfg = load_config(testutil::repo_path("data/synthetic/config.json"));
            auto fixtures = (e.dir.path() / "fixtures").string();
            std::filesystem::create_directories(fixtures);
            cfg.paths.workdir = (e.dir.path() / "work").string();
            cfg.llm.fixtures_dir = fixtures;
            cfg.expand.alpha = 0.8;
            e.pipeline = std::make_unique<Pipeline>(cfg);
            auto& p = *e.pipeline;

            // The unconditioned first query of each document is its title under
            // the echo mock, so the snippet prompt for that query is known in
            // advance. Its fixture paragraph restates the planted query.
            std::map<std::string, std::string> query_text;
            for (const auto& hq : read_heldout_queries(p.input_path(cfg.paths.queries))) query_text[hq.qid] = hq.text;
            for (const auto& line : read_lines(testutil::repo_path("data/synthetic/planted.jsonl"))) {
                if (trim(line).empty()) continue;
                auto j = nlohmann::json::parse(line);
                const auto& doc = p.corpus().by_id(j["doc_id"].get<std::string>());
                auto key = prompt_fingerprint(p.gateway().snippet_request(doc, doc.title));
                write_text_file(fixtures + "/" + key + ".txt",
                                fmt::format("This work develops {}. It details the approach, its evaluation and "
                                            "how {} compares with prior practice.",
                                            query_text.at(j["qid"].get<std::string>()),
                                            query_text.at(j["qid"].get<std::string>())));
                ++e.planted;
            }
            p.run_all();
            e.seconds = seconds_since(t0);
            e.metrics = nlohmann::json::parse(read_text_file(p.artifact("metrics.json")));
            std::set<std::string> planted_docs;
            for (const auto& line : read_lines(testutil::repo_path("data/synthetic/planted.jsonl")))
                if (!trim(line).empty()) planted_docs.insert(nlohmann::json::parse(line)["doc_id"].get<std::string>());
            for (const auto& q : read_queries(p.artifact("queries.jsonl")))
                if (q.seq == 1 && planted_docs.count(q.doc_id) && q.text == p.corpus().by_id(q.doc_id).title)
                    ++e.planted_title_queries;
        } catch (const std::exception& ex) {
            e.error = ex.what();
        }
}

EndToEnd& end_to_end() {
    static EndToEnd e2e;
    static bool done = false;
    if (!done) {
        run_end_to_end(e2e);
        done = true;
    }
    return e2e;
}

Outcome offline_guarantee() {
    auto& e = end_to_end();
    if (!e.error.empty()) return {false, "pipeline failed: " + e.error};
    auto& p = *e.pipeline;
    auto queries = read_heldout_queries(p.input_path(p.config().paths.queries)).size();
    std::size_t repeat = (1000 + queries - 1) / queries;
    auto before = p.gateway().log().total();
    auto offline = p.bench("max", repeat);
    auto offline_calls = p.gateway().log().total() - before;
    auto hyde = p.bench("hyde", 1);
    auto hyde_calls = hyde.stages.at("search").llm_calls + hyde.stages.at("rescore").llm_calls;
    std::size_t want_hyde = queries * p.config().expand.hyde_n;

    double search_ms = offline.stages.at("search").stats.mean_ms;
    double rescore_ms = offline.stages.at("rescore").stats.mean_ms;
    double overhead = rescore_ms / search_ms;
    bool calls_ok = offline_calls == 0 && offline.searches >= 1000 && hyde_calls == want_hyde;
    auto snippets = read_lines(p.artifact("snippets.jsonl")).size();
    return {calls_ok && overhead < 0.20,
            fmt::format("{} searches+rescores made {} LLM calls; hyde made {} (want {}); rescore {:.4f} ms vs "
                        "search {:.4f} ms = {:.1f}% overhead (bound 20%; K={} scores {} snippet vectors against "
                        "{} document vectors in the base scan)",
                        offline.searches, offline_calls, hyde_calls, want_hyde, rescore_ms, search_ms,
                        100.0 * overhead, p.config().expand.top_k, snippets, p.corpus().size())};
}

Outcome hallucination_guard() {
    std::mt19937_64 rng(99);
    std::vector<std::string> current;
    LlmGateway gw(
        [] {
            GatewayConfig c;
            c.backoff_base_ms = 0;
            return c;
        }(),
        std::make_unique<testutil::ScriptedChat>([&](auto&, auto&) {
            // Half genuine candidates, half invented names, shuffled.
            std::vector<std::string> out;
            for (std::size_t i = 0; i < current.size() / 2; ++i) out.push_back(current[rng() % current.size()]);
            for (std::size_t i = 0; i < current.size() / 2; ++i) out.push_back(fmt::format("invented concept {}", rng()));
            std::shuffle(out.begin(), out.end(), rng);
            std::string text;
            for (const auto& s : out) text += s + "\n";
            return text;
        }));
    Document doc{"d", "title", "abstract"};
    std::size_t violations = 0, empty = 0;
    for (int t = 0; t < 1000; ++t) {
        current.clear();
        for (int i = 0, n = 2 + static_cast<int>(rng() % 20); i < n; ++i)
            current.push_back(fmt::format("concept {} {}", t, i));
        std::set<std::string> allowed(current.begin(), current.end());
        auto sel = gw.select_concepts(doc, current, 10, t % 2 ? ConceptKind::topic : ConceptKind::phrase);
        if (sel.empty()) ++empty;
        for (const auto& s : sel) violations += allowed.count(s) == 0;
    }
    return {violations == 0, fmt::format("1000 trials, {} out-of-candidate outputs, {} empty selections",
                                         violations, empty)};
}

Outcome end_to_end_smoke() {
    auto& e = end_to_end();
    if (!e.error.empty()) return {false, "pipeline failed: " + e.error};
    auto& p = *e.pipeline;
    std::vector<std::string> missing;
    for (auto name : {"concept_index.jsonl", "queries.jsonl", "pairs.jsonl", "snippets.jsonl", "run.base.txt",
                      "run.rescored.txt", "metrics.json"})
        if (!std::filesystem::exists(p.artifact(name))) missing.push_back(name);
    double base = e.metrics["base"]["mean"]["ndcg@10"].get<double>();
    double rescored = e.metrics["rescored"]["mean"]["ndcg@10"].get<double>();
    bool ok = missing.empty() && e.seconds < 60.0 && rescored > base && e.planted_title_queries == e.planted;
    return {ok, fmt::format("{:.1f} s; missing artifacts: {}; planted fixtures used {}/{}; nDCG@10 base {:.4f} -> "
                            "rescored {:.4f}",
                            e.seconds, missing.empty() ? "none" : fmt::format("{}", fmt::join(missing, ",")),
                            e.planted_title_queries, e.planted, base, rescored)};
}

Outcome query_statistics() {
    Bm25Index idx({tokenize("graph neural ranking for citation recommendation"), tokenize("other text")});
    auto same = query_set_stats({"graph ranking", "graph ranking", "graph ranking"}, 0, idx);
    auto disjoint = query_set_stats({"alpha beta", "gamma delta", "epsilon"}, 0, idx);
    double red_same = same.redundancy.value_or(-1), red_dis = disjoint.redundancy.value_or(-1);
    bool ok = std::abs(red_same - 1.0) <= 1e-12 && red_dis == 0.0 && disjoint.lexical_overlap == 0.0;
    return {ok, fmt::format("identical set redundancy {:.6f}; disjoint set redundancy {:.6f}, overlap {:.6f}",
                            red_same, red_dis, disjoint.lexical_overlap)};
}

}  // namespace

int main() {
    set_warning_sink([](std::string_view) {});
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"extractor gradient check", gradient_check},
        {"under-coverage distribution", undercoverage},
        {"condition sampling fidelity", sampling},
        {"taxonomy traversal branching", traversal},
        {"BM25 oracle", bm25},
        {"metrics oracle", metrics},
        {"rescore invariants", rescore_invariants},
        {"offline guarantee and overhead", offline_guarantee},
        {"hallucination guard", hallucination_guard},
        {"end-to-end smoke with planted snippets", end_to_end_smoke},
        {"query statistics", query_statistics},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& ex) {
            o = {false, fmt::format("threw: {}", ex.what())};
        }
        failures += !o.pass;
        std::cout << fmt::format("[{}] {:>2}. {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
                  << std::flush;
    }
    std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
