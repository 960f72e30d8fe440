// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <fmt/format.h>

#include "conceptidx/ccexpand.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace conceptidx;
using testutil::ScriptedChat;
using testutil::TempDir;

namespace {

GatewayConfig fast() {
    GatewayConfig c;
    c.backoff_base_ms = 0;
    return c;
}

// Unit vector in 2-D with cosine `c` to e_x.
EmbeddingVector with_cos(double c) { return {static_cast<float>(c), static_cast<float>(std::sqrt(1 - c * c))}; }

RankedList base_of(std::vector<std::pair<std::string, double>> rows) {
    RankedList r;
    r.query_id = "q";
    for (auto& [id, s] : rows) r.entries.push_back({id, s, 0});
    r.renumber();
    return r;
}

std::vector<std::string> order(const RankedList& r) {
    std::vector<std::string> out;
    for (const auto& e : r.entries) out.push_back(e.doc_id);
    return out;
}

}  // namespace

TEST_CASE("hand blend ranks d2 over d1") {
    SnippetIndex idx;
    idx.add({"d1", 1, "s", with_cos(0.2)});
    idx.add({"d1", 2, "s", with_cos(-0.5)});
    idx.add({"d2", 1, "s", with_cos(0.9)});
    std::vector<float> q{1, 0};
    RescoreConfig cfg;
    auto r = rescore_with_snippets(q, base_of({{"d1", 0.9}, {"d2", 0.8}}), idx, Metric::cosine, cfg);
    REQUIRE(r.entries.size() == 2);
    CHECK(r.entries[0].doc_id == "d2");
    CHECK(r.entries[0].score == doctest::Approx(0.88));
    CHECK(r.entries[0].rank == 1);
    CHECK(r.entries[1].score == doctest::Approx(0.34));
    CHECK(r.entries[1].rank == 2);
    CHECK(r.query_id == "q");
}

TEST_CASE("alpha extremes, tail preservation, docs without snippets") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> n(0, 1);
    std::vector<float> q(8);
    for (auto& x : q) x = n(rng);
    SnippetIndex idx;
    std::vector<std::pair<std::string, double>> rows;
    std::map<std::string, double> best;
    for (int d = 0; d < 40; ++d) {
        auto id = fmt::format("d{:02}", d);
        rows.push_back({id, 1.0 - 0.01 * d});
        best[id] = -1e9;
        for (std::size_t s = 1; s <= 3; ++s) {
            EmbeddingVector e(8);
            for (auto& x : e) x = n(rng);
            best[id] = std::max(best[id], similarity(q, e, Metric::cosine));
            idx.add({id, s, "t", e});
        }
    }
    auto base = base_of(rows);
    RescoreConfig cfg;
    cfg.top_k = 25;

    cfg.alpha = 0.0;
    auto a0 = rescore_with_snippets(q, base, idx, Metric::cosine, cfg);
    CHECK(a0 == base);

    cfg.alpha = 1.0;
    auto a1 = rescore_with_snippets(q, base, idx, Metric::cosine, cfg);
    auto base_order = order(base);
    std::vector<std::string> top(base_order.begin(), base_order.begin() + 25);
    std::stable_sort(top.begin(), top.end(), [&](auto& a, auto& b) {
        return best[a] != best[b] ? best[a] > best[b] : a < b;
    });
    auto got = order(a1);
    CHECK(std::vector<std::string>(got.begin(), got.begin() + 25) == top);
    for (std::size_t i = 25; i < 40; ++i) {
        CHECK(a1.entries[i].doc_id == base.entries[i].doc_id);
        CHECK(a1.entries[i].score == base.entries[i].score);
        CHECK(a1.entries[i].rank == i + 1);
    }
    CHECK(format_run({a1}, "x").substr(format_run({a1}, "x").find("d25")) ==
          format_run({base}, "x").substr(format_run({base}, "x").find("d25")));

    // A document without snippets keeps its base score.
    cfg.alpha = 0.8;
    auto with_gap = base_of({{"zz", 0.5}, {"d00", 0.4}});
    auto r = rescore_with_snippets(q, with_gap, idx, Metric::cosine, cfg);
    for (const auto& e : r.entries)
        if (e.doc_id == "zz") CHECK(e.score == 0.5);

    cfg.alpha = 1.5;
    CHECK_THROWS_AS(rescore_with_snippets(q, base, idx, Metric::cosine, cfg), ConfigError);
}

TEST_CASE("average variant uses the normalized mean") {
    SnippetIndex idx;
    idx.add({"d", 1, "a", {1, 0}});
    idx.add({"d", 2, "b", {0, 1}});
    RescoreConfig cfg;
    cfg.alpha = 1.0;
    std::vector<float> q{1, 0};
    auto avg = rescore_average(q, base_of({{"d", 0.0}}), idx, Metric::cosine, cfg);
    CHECK(avg.entries[0].score == doctest::Approx(std::sqrt(2.0) / 2));
    auto mx = rescore_with_snippets(q, base_of({{"d", 0.0}}), idx, Metric::cosine, cfg);
    CHECK(mx.entries[0].score == doctest::Approx(1.0));
    CHECK(parse_variant("average") == RescoreVariant::snippet_average);
    CHECK(to_string(RescoreVariant::concept_match) == "concept");
    CHECK_THROWS(parse_variant("bogus"));
}

TEST_CASE("concept-match variant") {
    ProviderConfig pc;
    pc.dim = 8;
    EmbeddingProvider emb(pc);
    auto model = oracle::random_model(8, 5, 3, 6, 2);
    Corpus corpus({{"a", "", "x"}, {"b", "", "y"}, {"c", "", "z"}});
    auto y_q = extract_from_text(model, emb, "query", 15, 2).phrases;
    // b shares the query's concepts; a and c are disjoint from it.
    auto disjoint = SparseVector{};
    for (std::size_t j = 0; j < 6; ++j)
        if (sparse_at(y_q, j) == 0.0) disjoint.push_back({j, 1.0});
    if (disjoint.empty()) disjoint = {{5, 1.0}};
    std::vector<ConceptProfile> prof(3);
    prof[0].enriched_phrases = disjoint;
    prof[1].enriched_phrases = y_q;
    prof[2].enriched_phrases = disjoint;
    RescoreConfig cfg;
    auto r = rescore_concept_match("query", base_of({{"a", 0.5}, {"b", 0.5}, {"c", 0.5}}), corpus, prof, model, emb,
                                   cfg, 1.0, 15, 2);
    CHECK(order(r) == std::vector<std::string>{"b", "a", "c"});
    // Equal concepts: base order survives.
    prof[1].enriched_phrases = disjoint;
    auto same = rescore_concept_match("query", base_of({{"c", 0.9}, {"a", 0.5}, {"b", 0.1}}), corpus, prof, model,
                                      emb, cfg, 1.0, 15, 2);
    CHECK(order(same) == std::vector<std::string>{"c", "a", "b"});
}

TEST_CASE("hyde expansion") {
    ProviderConfig pc;
    pc.dim = 16;
    EmbeddingProvider emb(pc);
    EmbeddingMatrix corpus(16);
    for (int i = 0; i < 10; ++i) corpus.add(fmt::format("d{}", i), emb.embed(fmt::format("doc {}", i)));
    auto q = emb.embed("doc 3");
    LlmGateway gw(fast(), std::make_unique<MockChatBackend>());
    auto plain = dense_search(q, corpus, 10, Metric::cosine, "q");
    CHECK(hyde_expand("doc 3", q, gw, emb, 0, corpus, Metric::cosine, 10, "q") == plain);
    CHECK(gw.log().total() == 0);
    // Echo mock: each hypothetical document is the query itself.
    auto echoed = hyde_expand("doc 3", q, gw, emb, 5, corpus, Metric::cosine, 10, "q");
    CHECK(gw.log().count("hyde") == 5);
    CHECK(order(echoed) == order(plain));
    for (std::size_t i = 0; i < 10; ++i) CHECK(echoed.entries[i].score == doctest::Approx(plain.entries[i].score));

    LlmGateway gw2(fast(), std::make_unique<ScriptedChat>([](auto&, auto&) { return std::string("doc 7"); }));
    auto shifted = hyde_expand("doc 3", q, gw2, emb, 3, corpus, Metric::cosine, 2, "q");
    CHECK(shifted.entries[0].doc_id == "d7");
}

TEST_CASE("snippet construction and persistence") {
    TempDir t;
    ProviderConfig pc;
    pc.dim = 8;
    EmbeddingProvider emb(pc);
    LlmGateway gw(fast(), std::make_unique<MockChatBackend>());
    Document doc{"d1", "Title", "Abstract text."};
    std::vector<GeneratedQuery> qs{{"d1", 1, "first"}, {"d1", 2, "second"}};
    auto snippets = build_snippets(doc, qs, gw, emb);
    REQUIRE(snippets.size() == 2);
    CHECK(snippets[1].query_seq == 2);
    CHECK(snippets[1].text.find("second") != std::string::npos);
    CHECK(snippets[1].embedding == emb.embed(snippets[1].text));
    CHECK(gw.log().count("snippet") == 2);
    CHECK_THROWS_AS(build_snippets(doc, {}, gw, emb), InputError);

    SnippetIndex idx;
    for (auto& s : snippets) idx.add(s);
    CHECK_THROWS(idx.add(snippets[0]));
    idx.add({"d0", 1, "other", emb.embed("other")});
    CHECK(idx.size() == 3);
    CHECK(idx.num_docs() == 2);
    CHECK(idx.find("zz") == nullptr);
    idx.save(t.path().string());
    auto back = SnippetIndex::load(t.path().string());
    CHECK(back.per_doc() == idx.per_doc());
    auto manifest = nlohmann::json::parse(read_text_file(t.file("snippet_emb.manifest.json")));
    CHECK(manifest["ids"][0] == "d0#1");
}
