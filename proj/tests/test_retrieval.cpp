// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <fmt/format.h>

#include "conceptidx/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace conceptidx;
using testutil::TempDir;

TEST_CASE("rank_scores ordering and truncation") {
    auto r = rank_scores({"c", "a", "b", "d"}, {0.5, 0.5, 0.9, 0.1}, 3, "q");
    REQUIRE(r.entries.size() == 3);
    CHECK(r.entries[0].doc_id == "b");
    CHECK(r.entries[1].doc_id == "a");
    CHECK(r.entries[2].doc_id == "c");
    CHECK(r.entries[2].rank == 3);
    CHECK(rank_scores({"a"}, {1.0}, 10).entries.size() == 1);
}

TEST_CASE("dense search equals a brute-force scan") {
    std::mt19937_64 rng(8);
    std::normal_distribution<float> n(0, 1);
    EmbeddingMatrix corpus(12);
    for (int d = 0; d < 50; ++d) {
        std::vector<float> v(12);
        for (auto& x : v) x = n(rng);
        corpus.add(fmt::format("d{:02}", d), v);
    }
    for (auto metric : {Metric::cosine, Metric::dot}) {
        for (int t = 0; t < 20; ++t) {
            std::vector<float> q(12);
            for (auto& x : q) x = n(rng);
            std::vector<std::pair<double, std::string>> brute;
            for (std::size_t i = 0; i < corpus.rows(); ++i) {
                auto row = corpus.row(i);
                double dot = 0, nq = 0, nd = 0;
                for (std::size_t j = 0; j < 12; ++j) {
                    dot += double(q[j]) * row[j];
                    nq += double(q[j]) * q[j];
                    nd += double(row[j]) * row[j];
                }
                double s = metric == Metric::dot ? dot : dot / (std::sqrt(nq) * std::sqrt(nd));
                brute.push_back({-s, corpus.ids()[i]});
            }
            std::sort(brute.begin(), brute.end());
            auto got = dense_search(q, corpus, 7, metric);
            REQUIRE(got.entries.size() == 7);
            for (std::size_t i = 0; i < 7; ++i) {
                CHECK(got.entries[i].doc_id == brute[i].second);
                CHECK(got.entries[i].score == doctest::Approx(-brute[i].first).epsilon(1e-9));
            }
        }
    }
    CHECK(dense_search(std::vector<float>(12, 1.0f), corpus, 500, Metric::dot).entries.size() == 50);
}

TEST_CASE("metrics hand case") {
    Qrels qrels{{"q", {{"a", 1}, {"b", 0}, {"c", 2}}}};
    RankedList run{"q", {{"a", 3, 1}, {"b", 2, 2}, {"c", 1, 3}}};
    auto rep = compute_metrics({run}, qrels, {3});
    CHECK(std::abs(rep.mean_ndcg.at(3) - 0.7602) <= 1e-4);
    CHECK(rep.mean_ndcg.at(3) == doctest::Approx(2.0 / (2.0 + 1.0 / std::log2(3.0))));
    CHECK(rep.mean_map.at(3) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(rep.mean_recall.at(3) == 1.0);
}

TEST_CASE("metrics agree with direct formula evaluation") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) CHECK(oracle::metrics_instance_error(rng) <= 1e-9);
}

TEST_CASE("metrics edge cases") {
    Qrels qrels{{"q1", {{"a", 0}}}, {"q2", {{"a", 1}}}};
    std::vector<RankedList> runs{{"q1", {{"a", 1, 1}}}, {"q2", {{"b", 1, 1}}}, {"q3", {{"a", 1, 1}}}};
    auto before = warning_count();
    auto rep = compute_metrics(runs, qrels, {10});
    CHECK(rep.no_relevant == std::vector<std::string>{"q1"});
    CHECK(rep.skipped == std::vector<std::string>{"q3"});
    CHECK(rep.per_query.size() == 2);
    CHECK(rep.mean_ndcg.at(10) == 0.0);
    CHECK(warning_count() >= before + 2);
    CHECK(rep.to_json()["no_relevant"] == nlohmann::json::array({"q1"}));
    CHECK_THROWS_AS(compute_metrics({{"zz", {}}}, qrels, {10}), InputError);
    CHECK(parse_gain("exp") == GainKind::exponential);
}

TEST_CASE("latency summary") {
    auto s = summarize_latency({5, 1, 3, 2, 4});
    CHECK(s.samples == 5);
    CHECK(s.mean_ms == 3.0);
    CHECK(s.p50_ms == 3.0);
    CHECK(s.p95_ms <= 5.0);
    CHECK(s.p95_ms >= 4.0);
}

TEST_CASE("TREC run and qrels I/O") {
    TempDir t;
    std::vector<RankedList> runs{{"q1", {{"d1", 0.5, 1}, {"d2", 0.25, 2}}}, {"q2", {{"d9", -1.0, 1}}}};
    write_run(t.file("run.txt"), runs, "tag");
    auto text = read_text_file(t.file("run.txt"));
    CHECK(text.substr(0, text.find('\n')) == "q1 Q0 d1 1 0.500000 tag");
    CHECK(read_run(t.file("run.txt")) == runs);
    CHECK_THROWS_AS(parse_run("q1 Q0 d1 x 0.5 tag\n"), InputError);

    Qrels q{{"q1", {{"d1", 2}, {"d2", 0}}}};
    CHECK(parse_qrels(format_qrels(q)) == q);
    CHECK(parse_qrels("q1 0 d1 1\n\nq1 0 d3 2\n").at("q1").size() == 2);
    CHECK_THROWS_AS(parse_qrels("q1 0 d1\n"), InputError);
}

TEST_CASE("query set statistics") {
    std::vector<std::vector<std::string>> docs{tokenize("neural ranking with graph features"), tokenize("other")};
    Bm25Index idx(docs);
    auto same = query_set_stats({"graph ranking", "graph ranking", "graph ranking"}, 0, idx);
    REQUIRE(same.redundancy.has_value());
    CHECK(*same.redundancy == doctest::Approx(1.0));
    auto disjoint = query_set_stats({"alpha beta", "gamma", "delta epsilon"}, 0, idx);
    CHECK(*disjoint.redundancy == 0.0);
    CHECK(disjoint.lexical_overlap == 0.0);
    CHECK(same.lexical_overlap > 0.0);
    CHECK(same.lexical_overlap == doctest::Approx(idx.score(tokenize("graph ranking"), 0)));
    CHECK_FALSE(query_set_stats({"single"}, 0, idx).redundancy.has_value());
}
