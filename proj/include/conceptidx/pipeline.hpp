// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptidx/ccexpand.hpp"
#include "conceptidx/ccqgen.hpp"
#include "conceptidx/concept_profile.hpp"
#include "conceptidx/corpus.hpp"
#include "conceptidx/embedding.hpp"
#include "conceptidx/extractor.hpp"
#include "conceptidx/lexical.hpp"
#include "conceptidx/llm.hpp"
#include "conceptidx/retrieval.hpp"

namespace conceptidx {

struct PathsConfig {
    std::string corpus;
    std::string taxonomy;
    std::string phrases;
    std::string queries;  // held-out JSONL {"qid","text"}
    std::string qrels;
    std::string workdir = "work";

    friend bool operator==(const PathsConfig&, const PathsConfig&) = default;
};

struct IndexConfig {
    std::size_t k_topics = 10;
    std::size_t k_phrases = 15;
    std::size_t neighbors = 100;
    double candidate_fraction = 0.2;
    double bm25_k1 = 0.9;
    double bm25_b = 0.4;

    friend bool operator==(const IndexConfig&, const IndexConfig&) = default;
};

struct ExtractorConfig {
    TrainConfig train;
    std::size_t k_topics_enriched = 15;
    std::size_t k_phrases_enriched = 30;
};

struct QgenConfig {
    std::size_t num_queries = 5;
    double epsilon = 1e-3;
    std::string scheme = "query_plain";
    std::size_t top_n = 10;
    std::size_t pool_size = 1000;
    double top_fraction = 0.1;

    friend bool operator==(const QgenConfig&, const QgenConfig&) = default;
};

struct ExpandConfig {
    double alpha = 0.8;
    std::size_t top_k = 1000;
    std::string variant = "max";  // max | average | concept | hyde | hyde+max | none
    std::size_t hyde_n = 5;

    friend bool operator==(const ExpandConfig&, const ExpandConfig&) = default;
};

struct EvalConfig {
    std::vector<std::size_t> ks = {10, 100};
    std::string ndcg_gain = "linear";

    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct PipelineConfig {
    PathsConfig paths;
    ProviderConfig embed;
    std::optional<ProviderConfig> embed_taxonomy;  // defaults to `embed`
    GatewayConfig llm;
    IndexConfig index;
    ExtractorConfig extractor;
    QgenConfig qgen;
    ExpandConfig expand;
    EvalConfig eval;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string base_dir;  // relative paths resolve against this; never serialized
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Strict: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the dotted field.
PipelineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = {});
PipelineConfig load_config(const std::string& path);
void validate_config(const PipelineConfig& cfg);
/// Applies "a.b=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);
bool configs_equal(const PipelineConfig& a, const PipelineConfig& b);

struct HeldOutQuery {
    std::string qid;
    std::string text;
};
std::vector<HeldOutQuery> read_heldout_queries(const std::string& path);

struct StageLatency {
    LatencyStats stats;
    std::size_t llm_calls = 0;
};

struct LatencyReport {
    std::map<std::string, StageLatency> stages;
    std::size_t searches = 0;
    std::string variant;
    nlohmann::json to_json() const;
};

std::vector<ConceptProfile> read_concept_index(const std::string& path, const Taxonomy& taxonomy,
                                               const PhraseVocab& vocab, const Corpus& corpus);
void write_concept_index(const std::string& path, const std::vector<ConceptProfile>& profiles,
                         const Taxonomy& taxonomy, const PhraseVocab& vocab);

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, std::unique_ptr<ChatBackend> chat = nullptr,
                      std::unique_ptr<EmbeddingBackend> embed = nullptr);

    const PipelineConfig& config() const noexcept { return cfg_; }
    LlmGateway& gateway() { return *gateway_; }
    EmbeddingProvider& embedder() { return *embedder_; }
    std::string artifact(const std::string& name) const;
    std::string input_path(const std::string& p) const;

    void index_build();
    void extractor_train();
    void index_enrich();
    void qgen_generate();
    void qgen_filter();
    std::size_t qgen_export_pairs();
    void expand_snippets();
    std::vector<RankedList> search();
    std::vector<RankedList> rescore(const std::string& variant);
    nlohmann::json eval();
    nlohmann::json stats();
    LatencyReport bench(const std::string& variant, std::size_t repeat);
    /// Every stage in order, ending with search, rescore and eval.
    void run_all();

    const Corpus& corpus();
    const Taxonomy& taxonomy();
    const PhraseVocab& vocab();

private:
    const EmbeddingMatrix& corpus_embeddings();
    EmbeddingProvider& taxonomy_embedder();
    std::vector<ConceptProfile> load_profiles();
    const ExtractorModel& model();
    const SnippetIndex& snippet_index();
    std::vector<HeldOutQuery> heldout();
    RescoreConfig rescore_config() const;
    RankedList rescore_one(const std::string& variant, const HeldOutQuery& q, std::span<const float> q_emb,
                           const RankedList& base, const std::vector<ConceptProfile>* profiles);

    PipelineConfig cfg_;
    std::unique_ptr<LlmGateway> gateway_;
    std::unique_ptr<EmbeddingProvider> embedder_;
    std::unique_ptr<EmbeddingProvider> taxonomy_embedder_;
    std::optional<Corpus> corpus_;
    std::optional<Taxonomy> taxonomy_;
    std::optional<PhraseVocab> vocab_;
    std::optional<EmbeddingMatrix> corpus_emb_;
    std::optional<ExtractorModel> model_;
    std::optional<SnippetIndex> snippets_;
};

/// Parses the command line and runs one command. Exit codes: 0 ok, 1
/// runtime failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace conceptidx
