// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <set>

#include <fmt/format.h>

#include "conceptidx/common.hpp"
#include "conceptidx/taxonomy_candidates.hpp"

namespace conceptidx {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

json provider_to_json(const ProviderConfig& p) {
    return {{"endpoint", p.endpoint},         {"model", p.model},
            {"metric", to_string(p.metric)},  {"cache_path", p.cache_path},
            {"dim", p.dim},                   {"seed", p.seed},
            {"max_inflight", p.max_inflight}, {"batch_size", p.batch_size},
            {"retries", p.retries},           {"backoff_base_ms", p.backoff_base_ms},
            {"timeout_s", p.timeout_s}};
}

// Reads keys of one JSON object, tracking which were consumed so leftovers
// can be reported as unknown fields.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_, fmt::format("\"{}\" must be an object", prefix_));
    }

    std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& sub(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        const auto& v = j_.at(key);
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            ok = v.is_number_unsigned();
        } else if constexpr (std::is_integral_v<T>) {
            ok = v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        } else {
            ok = true;
        }
        if (!ok) throw ConfigError(field(key), fmt::format("{} has the wrong type", field(key)));
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key), fmt::format("{} has the wrong type", field(key)));
        }
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError(field(key), fmt::format("unknown config key {}", field(key)));
        }
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

ProviderConfig provider_from_json(const json& j, const std::string& prefix) {
    ProviderConfig p;
    Section s(j, prefix);
    s.get("endpoint", p.endpoint);
    s.get("model", p.model);
    std::string metric = to_string(p.metric);
    s.get("metric", metric);
    try {
        p.metric = parse_metric(metric);
    } catch (const Error& e) {
        throw ConfigError(s.field("metric"), e.what());
    }
    s.get("cache_path", p.cache_path);
    s.get("dim", p.dim);
    s.get("seed", p.seed);
    s.get("max_inflight", p.max_inflight);
    s.get("batch_size", p.batch_size);
    s.get("retries", p.retries);
    s.get("backoff_base_ms", p.backoff_base_ms);
    s.get("timeout_s", p.timeout_s);
    s.finish();
    return p;
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field, fmt::format("{} {}", field, what));
}

void validate_provider(const ProviderConfig& p, const std::string& prefix) {
    require(!p.endpoint.empty(), prefix + ".endpoint", "must be non-empty");
    require(p.dim >= 1, prefix + ".dim", "must be >= 1");
    require(p.max_inflight >= 1, prefix + ".max_inflight", "must be >= 1");
    require(p.batch_size >= 1, prefix + ".batch_size", "must be >= 1");
    require(p.retries >= 0, prefix + ".retries", "must be >= 0");
    require(p.backoff_base_ms >= 0, prefix + ".backoff_base_ms", "must be >= 0");
    require(p.timeout_s >= 1, prefix + ".timeout_s", "must be >= 1");
}

const std::set<std::string> kVariants = {"max", "average", "concept", "hyde", "hyde+max", "none"};

}  // namespace

json config_to_json(const PipelineConfig& cfg) {
    json j;
    j["paths"] = {{"corpus", cfg.paths.corpus},   {"taxonomy", cfg.paths.taxonomy}, {"phrases", cfg.paths.phrases},
                  {"queries", cfg.paths.queries}, {"qrels", cfg.paths.qrels},       {"workdir", cfg.paths.workdir}};
    j["embed"] = provider_to_json(cfg.embed);
    if (cfg.embed_taxonomy) j["embed_taxonomy"] = provider_to_json(*cfg.embed_taxonomy);
    const auto& l = cfg.llm;
    j["llm"] = {{"endpoint", l.endpoint},
                {"model", l.model},
                {"fixtures_dir", l.fixtures_dir},
                {"temperature_generate", l.temperature_generate},
                {"temperature_select", l.temperature_select},
                {"max_tokens", l.max_tokens},
                {"retries", l.retries},
                {"backoff_base_ms", l.backoff_base_ms},
                {"max_inflight", l.max_inflight},
                {"timeout_s", l.timeout_s}};
    const auto& ix = cfg.index;
    j["index"] = {{"k_topics", ix.k_topics},
                  {"k_phrases", ix.k_phrases},
                  {"neighbors", ix.neighbors},
                  {"candidate_fraction", ix.candidate_fraction},
                  {"bm25_k1", ix.bm25_k1},
                  {"bm25_b", ix.bm25_b}};
    const auto& ex = cfg.extractor;
    j["extractor"] = {{"hidden_size", ex.train.hidden_size},
                      {"learning_rate", ex.train.learning_rate},
                      {"epochs", ex.train.epochs},
                      {"batch_size", ex.train.batch_size},
                      {"seed", ex.train.seed},
                      {"k_topics_enriched", ex.k_topics_enriched},
                      {"k_phrases_enriched", ex.k_phrases_enriched}};
    const auto& q = cfg.qgen;
    j["qgen"] = {{"num_queries", q.num_queries}, {"epsilon", q.epsilon},     {"scheme", q.scheme},
                 {"top_n", q.top_n},             {"pool_size", q.pool_size}, {"top_fraction", q.top_fraction}};
    const auto& e = cfg.expand;
    j["expand"] = {{"alpha", e.alpha}, {"top_k", e.top_k}, {"variant", e.variant}, {"hyde_n", e.hyde_n}};
    j["eval"] = {{"ks", cfg.eval.ks}, {"ndcg_gain", cfg.eval.ndcg_gain}};
    j["seed"] = cfg.seed;
    j["jobs"] = cfg.jobs;
    return j;
}

PipelineConfig config_from_json(const json& j, const std::string& base_dir) {
    PipelineConfig cfg;
    cfg.base_dir = base_dir;
    Section root(j, "");
    if (root.has("paths")) {
        Section s(root.sub("paths"), "paths");
        s.get("corpus", cfg.paths.corpus);
        s.get("taxonomy", cfg.paths.taxonomy);
        s.get("phrases", cfg.paths.phrases);
        s.get("queries", cfg.paths.queries);
        s.get("qrels", cfg.paths.qrels);
        s.get("workdir", cfg.paths.workdir);
        s.finish();
    }
    if (root.has("embed")) cfg.embed = provider_from_json(root.sub("embed"), "embed");
    if (root.has("embed_taxonomy")) cfg.embed_taxonomy = provider_from_json(root.sub("embed_taxonomy"), "embed_taxonomy");
    if (root.has("llm")) {
        Section s(root.sub("llm"), "llm");
        auto& l = cfg.llm;
        s.get("endpoint", l.endpoint);
        s.get("model", l.model);
        s.get("fixtures_dir", l.fixtures_dir);
        s.get("temperature_generate", l.temperature_generate);
        s.get("temperature_select", l.temperature_select);
        s.get("max_tokens", l.max_tokens);
        s.get("retries", l.retries);
        s.get("backoff_base_ms", l.backoff_base_ms);
        s.get("max_inflight", l.max_inflight);
        s.get("timeout_s", l.timeout_s);
        s.finish();
    }
    if (root.has("index")) {
        Section s(root.sub("index"), "index");
        auto& ix = cfg.index;
        s.get("k_topics", ix.k_topics);
        s.get("k_phrases", ix.k_phrases);
        s.get("neighbors", ix.neighbors);
        s.get("candidate_fraction", ix.candidate_fraction);
        s.get("bm25_k1", ix.bm25_k1);
        s.get("bm25_b", ix.bm25_b);
        s.finish();
    }
    if (root.has("extractor")) {
        Section s(root.sub("extractor"), "extractor");
        auto& ex = cfg.extractor;
        s.get("hidden_size", ex.train.hidden_size);
        s.get("learning_rate", ex.train.learning_rate);
        s.get("epochs", ex.train.epochs);
        s.get("batch_size", ex.train.batch_size);
        s.get("seed", ex.train.seed);
        s.get("k_topics_enriched", ex.k_topics_enriched);
        s.get("k_phrases_enriched", ex.k_phrases_enriched);
        s.finish();
    }
    if (root.has("qgen")) {
        Section s(root.sub("qgen"), "qgen");
        auto& q = cfg.qgen;
        s.get("num_queries", q.num_queries);
        s.get("epsilon", q.epsilon);
        s.get("scheme", q.scheme);
        s.get("top_n", q.top_n);
        s.get("pool_size", q.pool_size);
        s.get("top_fraction", q.top_fraction);
        s.finish();
    }
    if (root.has("expand")) {
        Section s(root.sub("expand"), "expand");
        auto& e = cfg.expand;
        s.get("alpha", e.alpha);
        s.get("top_k", e.top_k);
        s.get("variant", e.variant);
        s.get("hyde_n", e.hyde_n);
        s.finish();
    }
    if (root.has("eval")) {
        Section s(root.sub("eval"), "eval");
        if (s.has("ks")) {
            const auto& ks = s.sub("ks");
            if (!ks.is_array()) throw ConfigError("eval.ks", "eval.ks must be an array of cutoffs");
            cfg.eval.ks.clear();
            for (const auto& k : ks) {
                if (!k.is_number_unsigned()) throw ConfigError("eval.ks", "eval.ks entries must be integers >= 1");
                cfg.eval.ks.push_back(k.get<std::size_t>());
            }
        }
        s.get("ndcg_gain", cfg.eval.ndcg_gain);
        s.finish();
    }
    root.get("seed", cfg.seed);
    root.get("jobs", cfg.jobs);
    root.finish();
    validate_config(cfg);
    return cfg;
}

void validate_config(const PipelineConfig& cfg) {
    require(!cfg.paths.workdir.empty(), "paths.workdir", "must be non-empty");
    validate_provider(cfg.embed, "embed");
    if (cfg.embed_taxonomy) validate_provider(*cfg.embed_taxonomy, "embed_taxonomy");
    const auto& l = cfg.llm;
    require(!l.endpoint.empty(), "llm.endpoint", "must be non-empty");
    require(l.temperature_generate >= 0.0, "llm.temperature_generate", "must be >= 0");
    require(l.temperature_select >= 0.0, "llm.temperature_select", "must be >= 0");
    require(l.max_tokens >= 1, "llm.max_tokens", "must be >= 1");
    require(l.retries >= 0, "llm.retries", "must be >= 0");
    require(l.backoff_base_ms >= 0, "llm.backoff_base_ms", "must be >= 0");
    require(l.max_inflight >= 1, "llm.max_inflight", "must be >= 1");
    require(l.timeout_s >= 1, "llm.timeout_s", "must be >= 1");
    const auto& ix = cfg.index;
    require(ix.k_topics >= 1, "index.k_topics", "must be >= 1");
    require(ix.k_phrases >= 1, "index.k_phrases", "must be >= 1");
    require(ix.neighbors >= 1, "index.neighbors", "must be >= 1");
    require(ix.candidate_fraction > 0.0 && ix.candidate_fraction <= 1.0, "index.candidate_fraction",
            "must be in (0,1]");
    require(ix.bm25_k1 >= 0.0, "index.bm25_k1", "must be >= 0");
    require(ix.bm25_b >= 0.0 && ix.bm25_b <= 1.0, "index.bm25_b", "must be in [0,1]");
    const auto& ex = cfg.extractor;
    require(ex.train.hidden_size >= 1, "extractor.hidden_size", "must be >= 1");
    require(ex.train.learning_rate >= 0.0, "extractor.learning_rate", "must be >= 0");
    require(ex.train.epochs >= 1, "extractor.epochs", "must be >= 1");
    require(ex.train.batch_size >= 1, "extractor.batch_size", "must be >= 1");
    require(ex.k_topics_enriched >= 1, "extractor.k_topics_enriched", "must be >= 1");
    require(ex.k_phrases_enriched >= 1, "extractor.k_phrases_enriched", "must be >= 1");
    const auto& q = cfg.qgen;
    require(q.num_queries >= 1, "qgen.num_queries", "must be >= 1");
    require(q.epsilon > 0.0, "qgen.epsilon", "must be > 0");
    require(q.scheme == "query_plain" || q.scheme == "query_fewshot" || q.scheme == "query_pairwise", "qgen.scheme",
            "must be one of query_plain, query_fewshot, query_pairwise");
    require(q.top_n >= 1, "qgen.top_n", "must be >= 1");
    require(q.pool_size >= q.top_n, "qgen.pool_size", "must be >= qgen.top_n");
    require(q.top_fraction > 0.0 && q.top_fraction <= 1.0, "qgen.top_fraction", "must be in (0,1]");
    const auto& e = cfg.expand;
    require(e.alpha >= 0.0 && e.alpha <= 1.0, "expand.alpha", "must be in range [0,1]");
    require(e.top_k >= 1, "expand.top_k", "must be >= 1");
    require(kVariants.count(e.variant) != 0, "expand.variant",
            "must be one of max, average, concept, hyde, hyde+max, none");
    require(!cfg.eval.ks.empty(), "eval.ks", "must list at least one cutoff");
    for (auto k : cfg.eval.ks) require(k >= 1, "eval.ks", "entries must be >= 1");
    require(cfg.eval.ndcg_gain == "linear" || cfg.eval.ndcg_gain == "exp", "eval.ndcg_gain",
            "must be \"linear\" or \"exp\"");
    require(cfg.jobs >= 1, "jobs", "must be >= 1");
}

PipelineConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config", fmt::format("{}: {}", path, e.what()));
    }
    return config_from_json(j, fs::path(path).parent_path().string());
}

void apply_override(json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("set", fmt::format("override \"{}\" is not of the form key=value", assignment));
    }
    auto key = assignment.substr(0, eq);
    auto raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, fmt::format("bad override key \"{}\"", key));
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

bool configs_equal(const PipelineConfig& a, const PipelineConfig& b) {
    return config_to_json(a) == config_to_json(b);
}

std::vector<HeldOutQuery> read_heldout_queries(const std::string& path) {
    std::vector<HeldOutQuery> out;
    std::set<std::string> seen;
    auto lines = read_lines(path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (trim(lines[ln]).empty()) continue;
        HeldOutQuery q;
        try {
            auto j = json::parse(lines[ln]);
            q.qid = j.at("qid").get<std::string>();
            q.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw InputError(fmt::format("{}:{}: {}", path, ln + 1, e.what()));
        }
        if (q.qid.empty()) throw InputError(fmt::format("{}:{}: empty qid", path, ln + 1));
        if (!seen.insert(q.qid).second) throw InputError(fmt::format("{}:{}: duplicate qid \"{}\"", path, ln + 1, q.qid));
        out.push_back(std::move(q));
    }
    if (out.empty()) throw InputError(path + ": no queries");
    return out;
}

json LatencyReport::to_json() const {
    json j;
    j["variant"] = variant;
    j["searches"] = searches;
    json st = json::object();
    for (const auto& [name, s] : stages) {
        st[name] = {{"p50_ms", s.stats.p50_ms},
                    {"p95_ms", s.stats.p95_ms},
                    {"mean_ms", s.stats.mean_ms},
                    {"samples", s.stats.samples},
                    {"llm_calls", s.llm_calls}};
    }
    j["stages"] = std::move(st);
    auto search = stages.find("search");
    auto rescore = stages.find("rescore");
    if (search != stages.end() && rescore != stages.end() && search->second.stats.mean_ms > 0.0) {
        j["rescore_overhead"] = rescore->second.stats.mean_ms / search->second.stats.mean_ms;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Concept index I/O

std::vector<ConceptProfile> read_concept_index(const std::string& path, const Taxonomy& taxonomy,
                                               const PhraseVocab& vocab, const Corpus& corpus) {
    std::vector<ConceptProfile> profiles(corpus.size());
    std::vector<bool> filled(corpus.size(), false);
    auto lines = read_lines(path);
    auto topic = [&](const std::string& id, std::size_t ln) {
        auto idx = taxonomy.topic_index(id);
        if (!idx) throw InputError(fmt::format("{}:{}: unknown topic \"{}\"", path, ln, id));
        return *idx;
    };
    auto phrase = [&](const std::string& p, std::size_t ln) {
        auto idx = vocab.find(p);
        if (!idx) throw InputError(fmt::format("{}:{}: unknown phrase \"{}\"", path, ln, p));
        return *idx;
    };
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (trim(lines[ln]).empty()) continue;
        ConceptProfile p;
        try {
            auto j = json::parse(lines[ln]);
            p.doc_id = j.at("doc_id").get<std::string>();
            for (const auto& t : j.at("core_topics")) p.core_topics.push_back(topic(t.get<std::string>(), ln + 1));
            for (const auto& t : j.at("core_phrases")) p.core_phrases.push_back(phrase(t.get<std::string>(), ln + 1));
            for (const auto& e : j.at("enriched_topics")) {
                p.enriched_topics.push_back({topic(e.at(0).get<std::string>(), ln + 1), e.at(1).get<double>()});
            }
            for (const auto& e : j.at("enriched_phrases")) {
                p.enriched_phrases.push_back({phrase(e.at(0).get<std::string>(), ln + 1), e.at(1).get<double>()});
            }
        } catch (const json::exception& e) {
            throw InputError(fmt::format("{}:{}: {}", path, ln + 1, e.what()));
        }
        auto by_index = [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; };
        std::sort(p.enriched_topics.begin(), p.enriched_topics.end(), by_index);
        std::sort(p.enriched_phrases.begin(), p.enriched_phrases.end(), by_index);
        auto ord = corpus.ordinal(p.doc_id);
        filled[ord] = true;
        profiles[ord] = std::move(p);
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (!filled[i]) throw InputError(fmt::format("{}: no profile for document \"{}\"", path, corpus[i].id));
    }
    return profiles;
}

void write_concept_index(const std::string& path, const std::vector<ConceptProfile>& profiles,
                         const Taxonomy& taxonomy, const PhraseVocab& vocab) {
    const auto& topics = taxonomy.topic_ids();
    std::string out;
    for (const auto& p : profiles) {
        json j;
        j["doc_id"] = p.doc_id;
        json ct = json::array(), cp = json::array(), et = json::array(), ep = json::array();
        for (auto t : p.core_topics) ct.push_back(topics.at(t));
        for (auto t : p.core_phrases) cp.push_back(vocab[t]);
        for (const auto& e : p.enriched_topics) et.push_back(json::array({topics.at(e.index), e.value}));
        for (const auto& e : p.enriched_phrases) ep.push_back(json::array({vocab[e.index], e.value}));
        j["core_topics"] = std::move(ct);
        j["core_phrases"] = std::move(cp);
        j["enriched_topics"] = std::move(et);
        j["enriched_phrases"] = std::move(ep);
        out += j.dump() + "\n";
    }
    write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

ProviderConfig resolve_provider(ProviderConfig p, const std::string& base_dir) {
    if (!p.cache_path.empty() && fs::path(p.cache_path).is_relative() && !base_dir.empty()) {
        p.cache_path = (fs::path(base_dir) / p.cache_path).string();
    }
    return p;
}

PromptKind scheme_kind(const std::string& scheme) { return parse_prompt_kind(scheme); }

std::size_t kept_count(const std::vector<GeneratedQuery>& qs) {
    return static_cast<std::size_t>(std::count_if(qs.begin(), qs.end(), [](const auto& q) { return q.kept; }));
}

double elapsed_ms(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg, std::unique_ptr<ChatBackend> chat, std::unique_ptr<EmbeddingBackend> embed)
    : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    auto llm = cfg_.llm;
    if (!llm.fixtures_dir.empty()) llm.fixtures_dir = input_path(llm.fixtures_dir);
    gateway_ = chat ? std::make_unique<LlmGateway>(llm, std::move(chat)) : std::make_unique<LlmGateway>(llm);
    auto ep = resolve_provider(cfg_.embed, cfg_.base_dir);
    embedder_ = embed ? std::make_unique<EmbeddingProvider>(ep, std::move(embed))
                      : std::make_unique<EmbeddingProvider>(ep);
    if (cfg_.embed_taxonomy) {
        taxonomy_embedder_ = std::make_unique<EmbeddingProvider>(resolve_provider(*cfg_.embed_taxonomy, cfg_.base_dir));
    }
}

std::string Pipeline::input_path(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute() || cfg_.base_dir.empty()) return p;
    return (fs::path(cfg_.base_dir) / p).string();
}

std::string Pipeline::artifact(const std::string& name) const {
    return (fs::path(input_path(cfg_.paths.workdir)) / name).string();
}

namespace {

std::string existing(const std::string& resolved, const std::string& field) {
    if (resolved.empty()) throw ConfigError(field, fmt::format("{} is required for this command", field));
    if (!fs::exists(resolved)) throw ConfigError(field, fmt::format("{}: file not found: {}", field, resolved));
    return resolved;
}

std::string need_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path)) throw InputError(fmt::format("missing {}; run `{}` first", path, producer));
    return path;
}

}  // namespace

const Corpus& Pipeline::corpus() {
    if (!corpus_) corpus_ = load_corpus(existing(input_path(cfg_.paths.corpus), "paths.corpus"));
    return *corpus_;
}

const Taxonomy& Pipeline::taxonomy() {
    if (!taxonomy_) taxonomy_ = load_taxonomy(existing(input_path(cfg_.paths.taxonomy), "paths.taxonomy"));
    return *taxonomy_;
}

const PhraseVocab& Pipeline::vocab() {
    if (!vocab_) vocab_ = load_phrase_vocab(existing(input_path(cfg_.paths.phrases), "paths.phrases"));
    return *vocab_;
}

EmbeddingProvider& Pipeline::taxonomy_embedder() {
    return taxonomy_embedder_ ? *taxonomy_embedder_ : *embedder_;
}

const EmbeddingMatrix& Pipeline::corpus_embeddings() {
    if (corpus_emb_) return *corpus_emb_;
    auto prefix = artifact("corpus_emb");
    if (embedding_store_exists(prefix)) {
        auto m = read_embedding_store(prefix);
        const auto& c = corpus();
        if (m.ids().size() != c.size()) throw InputError(prefix + ": row count does not match the corpus");
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (m.id(i) != c[i].id) throw InputError(prefix + ": row ids do not match corpus order");
        }
        corpus_emb_ = std::move(m);
    } else {
        const auto& c = corpus();
        std::vector<std::string> texts;
        texts.reserve(c.size());
        for (const auto& d : c.documents()) texts.push_back(d.text());
        auto raw = embedder_->embed_batch(texts);
        EmbeddingMatrix m(raw.dim());
        for (std::size_t i = 0; i < c.size(); ++i) m.add(c[i].id, raw.row(i));
        fs::create_directories(input_path(cfg_.paths.workdir));
        write_embedding_store(m, prefix);
        corpus_emb_ = std::move(m);
    }
    return *corpus_emb_;
}

std::vector<ConceptProfile> Pipeline::load_profiles() {
    return read_concept_index(need_artifact(artifact("concept_index.jsonl"), "index build"), taxonomy(), vocab(),
                              corpus());
}

const ExtractorModel& Pipeline::model() {
    if (!model_) {
        need_artifact(artifact("model.json"), "extractor train");
        model_ = load_model(artifact("model"));
    }
    return *model_;
}

const SnippetIndex& Pipeline::snippet_index() {
    if (!snippets_) {
        need_artifact(artifact("snippets.jsonl"), "expand snippets");
        snippets_ = SnippetIndex::load(input_path(cfg_.paths.workdir));
    }
    return *snippets_;
}

std::vector<HeldOutQuery> Pipeline::heldout() {
    return read_heldout_queries(existing(input_path(cfg_.paths.queries), "paths.queries"));
}

RescoreConfig Pipeline::rescore_config() const {
    RescoreConfig rc;
    rc.alpha = cfg_.expand.alpha;
    rc.top_k = cfg_.expand.top_k;
    rc.hyde_n = cfg_.expand.hyde_n;
    return rc;
}

void Pipeline::index_build() {
    const auto& c = corpus();
    const auto& tax = taxonomy();
    const auto& voc = vocab();
    fs::create_directories(input_path(cfg_.paths.workdir));
    corpus_emb_.reset();
    fs::remove(artifact("corpus_emb.f32"));
    fs::remove(artifact("corpus_emb.manifest.json"));
    const auto& emb = corpus_embeddings();
    auto names = embed_taxonomy_names(tax, taxonomy_embedder());
    write_embedding_store(names, artifact("taxonomy_emb"));

    std::vector<ConceptProfile> profiles(c.size());
    std::vector<std::vector<std::string>> topic_cands(c.size());
    std::vector<std::vector<std::string>> phrase_cands(c.size());
    parallel_for(c.size(), cfg_.jobs, [&](std::size_t i) {
        const auto& doc = c[i];
        profiles[i].doc_id = doc.id;
        auto tr = traverse_candidates(emb.row(i), tax, names);
        topic_cands[i] = tr.candidates;
        std::vector<std::string> shown;
        std::map<std::string, std::string> by_name;
        for (const auto& id : tr.candidates) {
            const auto& name = tax.node(id).name;
            if (by_name.emplace(to_lower(trim(name)), id).second) shown.push_back(name);
        }
        if (shown.empty()) {
            warn(fmt::format("document \"{}\" has no topic candidates", doc.id));
            return;
        }
        auto& core = profiles[i].core_topics;
        for (const auto& s : gateway_->select_concepts(doc, shown, cfg_.index.k_topics, ConceptKind::topic)) {
            core.push_back(*tax.topic_index(by_name.at(to_lower(trim(s)))));
        }
        std::sort(core.begin(), core.end());
        core.erase(std::unique(core.begin(), core.end()), core.end());
    });

    auto bm25 = Bm25Index::build(c, {cfg_.index.bm25_k1, cfg_.index.bm25_b});
    CandidatePhraseConfig pc{cfg_.index.neighbors, cfg_.index.candidate_fraction};
    parallel_for(c.size(), cfg_.jobs, [&](std::size_t i) {
        const auto& doc = c[i];
        std::vector<std::string> shown;
        for (const auto& sp : candidate_phrases(i, voc, bm25, profiles, pc)) shown.push_back(voc[sp.phrase]);
        phrase_cands[i] = shown;
        if (shown.empty()) return;
        auto& core = profiles[i].core_phrases;
        for (const auto& s : gateway_->select_concepts(doc, shown, cfg_.index.k_phrases, ConceptKind::phrase)) {
            core.push_back(*voc.find(s));
        }
        std::sort(core.begin(), core.end());
        core.erase(std::unique(core.begin(), core.end()), core.end());
    });

    std::string cand_out;
    for (std::size_t i = 0; i < c.size(); ++i) {
        cand_out += json{{"doc_id", c[i].id}, {"candidates", topic_cands[i]}, {"phrase_candidates", phrase_cands[i]}}
                        .dump() +
                    "\n";
    }
    write_text_file(artifact("candidates.jsonl"), cand_out);
    write_concept_index(artifact("concept_index.jsonl"), profiles, tax, voc);
}

void Pipeline::extractor_train() {
    auto profiles = load_profiles();
    auto result = train_extractor(profiles, corpus_embeddings(), taxonomy().topic_ids().size(), vocab().size(),
                                  cfg_.extractor.train);
    save_model(result.model, cfg_.extractor.train, artifact("model"));
    write_text_file(artifact("train_loss.json"), json(result.epoch_loss).dump() + "\n");
    model_ = std::move(result.model);
}

void Pipeline::index_enrich() {
    auto profiles = load_profiles();
    const auto& m = model();
    const auto& emb = corpus_embeddings();
    parallel_for(profiles.size(), cfg_.jobs, [&](std::size_t i) {
        auto e = enrich(m, emb.row(i), cfg_.extractor.k_topics_enriched, cfg_.extractor.k_phrases_enriched);
        profiles[i].enriched_topics = std::move(e.topics);
        profiles[i].enriched_phrases = std::move(e.phrases);
    });
    write_concept_index(artifact("concept_index.jsonl"), profiles, taxonomy(), vocab());
}

void Pipeline::qgen_generate() {
    auto profiles = load_profiles();
    const auto& c = corpus();
    const auto& m = model();
    QueryGenConfig qc;
    qc.num_queries = cfg_.qgen.num_queries;
    qc.epsilon = cfg_.qgen.epsilon;
    qc.k_topics_enriched = cfg_.extractor.k_topics_enriched;
    qc.k_phrases_enriched = cfg_.extractor.k_phrases_enriched;
    qc.prompt = default_template(scheme_kind(cfg_.qgen.scheme));
    qc.seed = cfg_.seed;
    const auto& voc = vocab();
    std::vector<std::vector<GeneratedQuery>> per_doc(c.size());
    parallel_for(c.size(), cfg_.jobs, [&](std::size_t i) {
        per_doc[i] = generate_query_set(c[i], profiles[i], voc, *gateway_, m, *embedder_, qc);
    });
    std::vector<GeneratedQuery> all;
    for (auto& v : per_doc) std::move(v.begin(), v.end(), std::back_inserter(all));
    write_queries(artifact("queries.jsonl"), all);
}

void Pipeline::qgen_filter() {
    auto queries = read_queries(need_artifact(artifact("queries.jsonl"), "qgen generate"));
    auto profiles = load_profiles();
    FilterContext ctx{corpus(),  corpus_embeddings(), profiles, model(), *embedder_,
                      cfg_.extractor.k_topics_enriched, cfg_.extractor.k_phrases_enriched};
    FilterConfig fc{cfg_.qgen.top_n, cfg_.qgen.pool_size, cfg_.qgen.top_fraction};
    filter_queries(queries, ctx, fc, cfg_.jobs);
    write_queries(artifact("queries.jsonl"), queries);
}

std::size_t Pipeline::qgen_export_pairs() {
    auto queries = read_queries(need_artifact(artifact("queries.jsonl"), "qgen generate"));
    return export_training_pairs(queries, artifact("pairs.jsonl"));
}

void Pipeline::expand_snippets() {
    auto queries = read_queries(need_artifact(artifact("queries.jsonl"), "qgen generate"));
    const auto& c = corpus();
    std::vector<std::vector<GeneratedQuery>> by_doc(c.size());
    for (auto& q : queries) by_doc[c.ordinal(q.doc_id)].push_back(std::move(q));
    std::vector<std::vector<Snippet>> built(c.size());
    std::vector<std::string> failures(c.size());
    parallel_for(c.size(), cfg_.jobs, [&](std::size_t i) {
        if (by_doc[i].empty()) {
            warn(fmt::format("document \"{}\" has no queries; no snippets built", c[i].id));
            return;
        }
        try {
            built[i] = build_snippets(c[i], by_doc[i], *gateway_, *embedder_);
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    SnippetIndex index;
    for (auto& list : built) {
        for (auto& s : list) index.add(std::move(s));
    }
    index.save(input_path(cfg_.paths.workdir));
    std::string fail_out;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (failures[i].empty()) continue;
        ++failed;
        fail_out += json{{"doc_id", c[i].id}, {"error", failures[i]}}.dump() + "\n";
    }
    if (failed > 0) {
        write_text_file(artifact("snippet_failures.jsonl"), fail_out);
        throw Error(fmt::format("snippet generation failed for {} document(s); partial index saved, see {}", failed,
                                artifact("snippet_failures.jsonl")));
    }
    fs::remove(artifact("snippet_failures.jsonl"));
    snippets_ = std::move(index);
}

std::vector<RankedList> Pipeline::search() {
    auto queries = heldout();
    const auto& emb = corpus_embeddings();
    std::vector<RankedList> runs(queries.size());
    parallel_for(queries.size(), cfg_.jobs, [&](std::size_t i) {
        auto q = embedder_->embed(queries[i].text);
        runs[i] = dense_search(q, emb, cfg_.expand.top_k, embedder_->metric(), queries[i].qid);
    });
    write_run(artifact("run.base.txt"), runs, "base");
    return runs;
}

RankedList Pipeline::rescore_one(const std::string& variant, const HeldOutQuery& q, std::span<const float> q_emb,
                                 const RankedList& base, const std::vector<ConceptProfile>* profiles) {
    auto rc = rescore_config();
    if (variant == "max" || variant == "hyde+max") {
        return rescore_with_snippets(q_emb, base, snippet_index(), embedder_->metric(), rc);
    }
    if (variant == "average") return rescore_average(q_emb, base, snippet_index(), embedder_->metric(), rc);
    if (variant == "concept") {
        return rescore_concept_match(q.text, base, corpus(), *profiles, model(), *embedder_, rc,
                                     cfg_.qgen.top_fraction, cfg_.extractor.k_topics_enriched,
                                     cfg_.extractor.k_phrases_enriched);
    }
    return base;  // "hyde" and "none": the base stage already produced the final list
}

std::vector<RankedList> Pipeline::rescore(const std::string& variant) {
    if (!kVariants.count(variant)) throw ConfigError("variant", fmt::format("unknown rescore variant \"{}\"", variant));
    auto queries = heldout();
    const auto& emb = corpus_embeddings();
    bool hyde = variant == "hyde" || variant == "hyde+max";
    std::optional<std::vector<ConceptProfile>> profiles;
    if (variant == "concept") {
        profiles = load_profiles();
        model();
    }
    if (variant == "max" || variant == "average" || variant == "hyde+max") snippet_index();
    std::vector<RankedList> runs(queries.size());
    parallel_for(queries.size(), cfg_.jobs, [&](std::size_t i) {
        const auto& q = queries[i];
        auto q_emb = embedder_->embed(q.text);
        auto base = hyde ? hyde_expand(q.text, q_emb, *gateway_, *embedder_, cfg_.expand.hyde_n, emb,
                                       embedder_->metric(), cfg_.expand.top_k, q.qid)
                         : dense_search(q_emb, emb, cfg_.expand.top_k, embedder_->metric(), q.qid);
        runs[i] = rescore_one(variant, q, q_emb, base, profiles ? &*profiles : nullptr);
    });
    write_run(artifact("run.rescored.txt"), runs, "rescored-" + variant);
    return runs;
}

json Pipeline::eval() {
    auto qrels = read_qrels(existing(input_path(cfg_.paths.qrels), "paths.qrels"));
    auto gain = parse_gain(cfg_.eval.ndcg_gain);
    json out;
    out["ks"] = cfg_.eval.ks;
    out["ndcg_gain"] = cfg_.eval.ndcg_gain;
    auto base = read_run(need_artifact(artifact("run.base.txt"), "search"));
    out["base"] = compute_metrics(base, qrels, cfg_.eval.ks, gain).to_json();
    if (fs::exists(artifact("run.rescored.txt"))) {
        out["rescored"] = compute_metrics(read_run(artifact("run.rescored.txt")), qrels, cfg_.eval.ks, gain).to_json();
    }
    write_text_file(artifact("metrics.json"), out.dump(2) + "\n");
    return out;
}

json Pipeline::stats() {
    auto queries = read_queries(need_artifact(artifact("queries.jsonl"), "qgen generate"));
    const auto& c = corpus();
    auto bm25 = Bm25Index::build(c, {cfg_.index.bm25_k1, cfg_.index.bm25_b});
    std::map<std::size_t, std::vector<std::string>> by_doc;
    for (const auto& q : queries) by_doc[c.ordinal(q.doc_id)].push_back(q.text);
    json per_doc = json::array();
    double red_sum = 0.0, ovl_sum = 0.0;
    std::size_t red_n = 0;
    for (const auto& [ord, texts] : by_doc) {
        auto s = query_set_stats(texts, ord, bm25);
        json e{{"doc_id", c[ord].id}, {"num_queries", texts.size()}, {"lexical_overlap", s.lexical_overlap}};
        e["redundancy"] = s.redundancy ? json(*s.redundancy) : json(nullptr);
        if (s.redundancy) {
            red_sum += *s.redundancy;
            ++red_n;
        }
        ovl_sum += s.lexical_overlap;
        per_doc.push_back(std::move(e));
    }
    json out;
    out["num_documents"] = by_doc.size();
    out["num_queries"] = queries.size();
    out["kept_queries"] = kept_count(queries);
    out["mean_redundancy"] = red_n ? json(red_sum / static_cast<double>(red_n)) : json(nullptr);
    out["mean_lexical_overlap"] = by_doc.empty() ? 0.0 : ovl_sum / static_cast<double>(by_doc.size());
    out["per_doc"] = std::move(per_doc);
    write_text_file(artifact("stats.json"), out.dump(2) + "\n");
    return out;
}

LatencyReport Pipeline::bench(const std::string& variant, std::size_t repeat) {
    if (!kVariants.count(variant)) throw ConfigError("variant", fmt::format("unknown rescore variant \"{}\"", variant));
    if (repeat == 0) throw ConfigError("repeat", "repeat must be >= 1");
    auto queries = heldout();
    const auto& emb = corpus_embeddings();
    const auto metric = embedder_->metric();
    bool hyde = variant == "hyde" || variant == "hyde+max";
    std::optional<std::vector<ConceptProfile>> profiles;
    if (variant == "concept") {
        profiles = load_profiles();
        model();
    }
    if (variant == "max" || variant == "average" || variant == "hyde+max") snippet_index();
    const auto* prof = profiles ? &*profiles : nullptr;

    // Populate the query-embedding cache so the timed passes measure steady
    // state rather than the first encoding of each query.
    for (const auto& q : queries) embedder_->embed(q.text);

    std::vector<double> search_ms, rescore_ms;
    std::size_t search_calls = 0, rescore_calls = 0;
    for (std::size_t r = 0; r < repeat; ++r) {
        for (const auto& q : queries) {
            auto before = gateway_->log().total();
            auto t0 = std::chrono::steady_clock::now();
            auto q_emb = embedder_->embed(q.text);
            auto base = hyde ? hyde_expand(q.text, q_emb, *gateway_, *embedder_, cfg_.expand.hyde_n, emb, metric,
                                           cfg_.expand.top_k, q.qid)
                             : dense_search(q_emb, emb, cfg_.expand.top_k, metric, q.qid);
            auto t1 = std::chrono::steady_clock::now();
            auto mid = gateway_->log().total();
            auto out = rescore_one(variant, q, q_emb, base, prof);
            auto t2 = std::chrono::steady_clock::now();
            auto after = gateway_->log().total();
            search_ms.push_back(elapsed_ms(t0, t1));
            rescore_ms.push_back(elapsed_ms(t1, t2));
            search_calls += mid - before;
            rescore_calls += after - mid;
            if (out.entries.empty()) throw Error("empty ranking for query " + q.qid);
        }
    }
    LatencyReport report;
    report.variant = variant;
    report.searches = search_ms.size();
    report.stages["search"] = {summarize_latency(search_ms), search_calls};
    report.stages["rescore"] = {summarize_latency(rescore_ms), rescore_calls};
    if (!hyde && search_calls + rescore_calls != 0) {
        throw Error(fmt::format("offline guarantee violated: {} LLM calls during {} searches", search_calls + rescore_calls,
                                report.searches));
    }
    write_text_file(artifact("latency.json"), report.to_json().dump(2) + "\n");
    return report;
}

void Pipeline::run_all() {
    index_build();
    extractor_train();
    index_enrich();
    qgen_generate();
    qgen_filter();
    qgen_export_pairs();
    expand_snippets();
    search();
    rescore(cfg_.expand.variant);
    eval();
}

}  // namespace conceptidx
