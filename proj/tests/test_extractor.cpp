// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "conceptidx/extractor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace conceptidx;
using testutil::TempDir;

namespace {

ConceptProfile profile(std::vector<std::size_t> t, std::vector<std::size_t> p) {
    ConceptProfile prof;
    prof.doc_id = "x";
    prof.core_topics = std::move(t);
    prof.core_phrases = std::move(p);
    return prof;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("forward: zero model is uniform, outputs are distributions") {
    ExtractorModel zero(3, 4, 4, 8);
    auto out = forward(zero, std::vector<float>{1, 2, 3});
    for (double x : out.topics) CHECK(x == doctest::Approx(0.25));
    for (double x : out.phrases) CHECK(x == doctest::Approx(0.125));

    auto m = oracle::random_model(8, 5, 4, 6, 3);
    std::vector<float> e{0.1f, -1, 2, 0.5f, 0, 0, 1, -0.3f};
    auto r = forward(m, e);
    CHECK(std::abs(sum(r.topics) - 1.0) <= 1e-9);
    CHECK(std::abs(sum(r.phrases) - 1.0) <= 1e-9);
    for (double x : r.phrases) CHECK(x > 0.0);
    CHECK_THROWS_AS(forward(m, std::vector<float>{1, 2}), InputError);

    // Swapping two topic columns (and biases) swaps the outputs.
    auto sw = m;
    for (std::size_t h = 0; h < sw.wt.rows; ++h) std::swap(sw.wt(h, 0), sw.wt(h, 3));
    std::swap(sw.bt[0], sw.bt[3]);
    auto rs = forward(sw, e);
    CHECK(rs.topics[0] == doctest::Approx(r.topics[3]));
    CHECK(rs.topics[3] == doctest::Approx(r.topics[0]));
}

TEST_CASE("loss oracles") {
    HeadOutputs uni{std::vector<double>(4, 0.25), std::vector<double>(8, 0.125)};
    CHECK(extractor_loss(uni, profile({1}, {2})) == doctest::Approx(std::log(4.0) + std::log(8.0)));
    CHECK(extractor_loss(uni, profile({1}, {2})) == doctest::Approx(3.4657).epsilon(1e-4));
    // Doubling positives doubles the phrase term.
    CHECK(extractor_loss(uni, profile({1}, {2, 5})) == doctest::Approx(std::log(4.0) + 2 * std::log(8.0)));

    HeadOutputs exact{{0, 1, 0, 0}, {0, 0, 1}};
    CHECK(extractor_loss(exact, profile({1}, {2})) == 0.0);
    // Clamp keeps log(0) finite.
    CHECK(std::isfinite(extractor_loss(exact, profile({0}, {2}))));
    CHECK_THROWS_AS(extractor_loss(uni, profile({}, {2})), InputError);
    CHECK_THROWS_AS(extractor_loss(uni, profile({1}, {})), InputError);
}

TEST_CASE("analytic gradient matches central differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(oracle::gradient_check(seed) < 1e-4);
}

namespace {

struct Toy {
    std::vector<ConceptProfile> profiles;
    EmbeddingMatrix emb{6};
};

Toy toy_problem() {
    Toy t;
    std::mt19937_64 rng(9);
    std::normal_distribution<float> noise(0.0f, 0.1f);
    for (int i = 0; i < 40; ++i) {
        bool a = i % 2 == 0;
        std::vector<float> e(6);
        for (std::size_t j = 0; j < 6; ++j) e[j] = (a ? (j < 3) : (j >= 3)) ? 1.0f + noise(rng) : noise(rng);
        auto id = "t" + std::to_string(i);
        t.emb.add(id, e);
        auto p = a ? profile({0}, {0, 1}) : profile({2}, {3, 4});
        p.doc_id = id;
        t.profiles.push_back(p);
    }
    return t;
}

}  // namespace

TEST_CASE("training: deterministic, learns a separable toy, lr=0 is a no-op") {
    auto t = toy_problem();
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.hidden_size = 8;
    cfg.batch_size = 8;
    cfg.seed = 5;
    auto a = train_extractor(t.profiles, t.emb, 3, 6, cfg);
    auto b = train_extractor(t.profiles, t.emb, 3, 6, cfg);
    CHECK(a.model == b.model);
    CHECK(a.epoch_loss == b.epoch_loss);
    REQUIRE(a.epoch_loss.size() == 200);
    CHECK(a.epoch_loss.back() <= 0.5 * a.epoch_loss.front());

    auto c = cfg;
    c.seed = 6;
    CHECK_FALSE(train_extractor(t.profiles, t.emb, 3, 6, c).model == a.model);

    auto z = cfg;
    z.learning_rate = 0.0;
    z.epochs = 5;
    auto first = train_extractor(t.profiles, t.emb, 3, 6, z);
    z.epochs = 1;
    auto init = train_extractor(t.profiles, t.emb, 3, 6, z);
    CHECK(first.model == init.model);
    for (double l : first.epoch_loss) CHECK(l == doctest::Approx(first.epoch_loss.front()).epsilon(1e-12));

    CHECK_THROWS_AS(train_extractor({}, EmbeddingMatrix(6), 3, 6, cfg), InputError);
}

TEST_CASE("top-k renormalization and enrich") {
    auto v = top_k_normalized({0.4, 0.3, 0.2, 0.1}, 2);
    REQUIRE(v.size() == 2);
    CHECK(v[0].index == 0);
    CHECK(v[0].value == doctest::Approx(4.0 / 7.0));
    CHECK(v[1].index == 1);
    CHECK(v[1].value == doctest::Approx(3.0 / 7.0));

    auto one = top_k_normalized({0.1, 0.5, 0.4}, 1);
    CHECK(one == SparseVector{{1, 1.0}});
    auto full = top_k_normalized({0.2, 0.3, 0.5}, 10);
    CHECK(full.size() == 3);
    CHECK(full[2].value == doctest::Approx(0.5));
    auto tie = top_k_normalized({0.25, 0.25, 0.25, 0.25}, 2);
    CHECK(tie[0].index == 0);
    CHECK(tie[1].index == 1);

    auto m = oracle::random_model(8, 5, 4, 6, 4);
    std::vector<float> e(8, 0.5f);
    auto en = enrich(m, e, 2, 3);
    CHECK(en.topics.size() == 2);
    CHECK(en.phrases.size() == 3);
    CHECK(sparse_sum(en.phrases) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(enrich(m, e, 0, 3));
}

TEST_CASE("extract_from_text") {
    ProviderConfig pc;
    pc.dim = 8;
    EmbeddingProvider emb(pc);
    auto m = oracle::random_model(8, 5, 4, 6, 8);
    auto empty = extract_from_text(m, emb, "   ", 2, 3);
    CHECK(empty.topics.empty());
    CHECK(empty.phrases.empty());
    auto one = extract_from_text(m, emb, "a query", 2, 3);
    auto direct = enrich(m, emb.embed("a query"), 2, 3);
    CHECK(one.phrases == direct.phrases);
    CHECK(one.topics == direct.topics);
}

TEST_CASE("model save/load is bit exact") {
    TempDir t;
    auto m = oracle::random_model(8, 5, 4, 6, 12);
    save_model(m, TrainConfig{}, t.file("model"));
    CHECK(load_model(t.file("model")) == m);
    auto manifest = nlohmann::json::parse(read_text_file(t.file("model.json")));
    CHECK(manifest.contains("seed"));
    t.write("model.bin", "short");
    CHECK_THROWS_AS(load_model(t.file("model")), InputError);
}
