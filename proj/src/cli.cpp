// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "conceptidx/common.hpp"
#include "conceptidx/pipeline.hpp"

namespace conceptidx {

using nlohmann::json;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> workdir;
    std::optional<double> alpha;
    std::vector<std::string> sets;
    bool emit_config = false;
    std::string variant;
    std::size_t repeat = 1;
};

json raw_config(const Options& o, std::string& base_dir) {
    json j = json::object();
    if (!o.config_path.empty()) {
        try {
            j = json::parse(read_text_file(o.config_path));
        } catch (const json::parse_error& e) {
            throw ConfigError("config", fmt::format("{}: {}", o.config_path, e.what()));
        }
        base_dir = std::filesystem::path(o.config_path).parent_path().string();
    }
    for (const auto& s : o.sets) apply_override(j, s);
    if (o.seed) {
        apply_override(j, fmt::format("seed={}", *o.seed));
        apply_override(j, fmt::format("extractor.seed={}", *o.seed));
    }
    if (o.jobs) apply_override(j, fmt::format("jobs={}", *o.jobs));
    if (o.workdir) j["paths"]["workdir"] = *o.workdir;
    if (o.alpha) j["expand"]["alpha"] = *o.alpha;
    if (!o.variant.empty()) j["expand"]["variant"] = o.variant;
    return j;
}

void print_metrics(std::ostream& out, const json& m, const char* which) {
    if (!m.contains(which)) return;
    out << which << ":";
    for (const auto& [k, v] : m[which]["mean"].items()) out << fmt::format(" {}={:.4f}", k, v.get<double>());
    out << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept-aware indexing, query generation and rescoring for dense retrieval", "conceptidx"};
    Options o;
    app.add_option("-c,--config", o.config_path, "JSON config file");
    app.add_option("--seed", o.seed, "Seed for every stochastic stage");
    app.add_option("--jobs", o.jobs, "Worker thread cap");
    app.add_option("--workdir", o.workdir, "Artifact directory");
    app.add_option("--alpha", o.alpha, "Snippet blend weight in [0,1]");
    app.add_option("--set", o.sets, "Config override key.path=value (repeatable)");
    app.add_flag("--emit-config", o.emit_config, "Print the resolved config and exit");
    app.require_subcommand(0, 1);

    auto* index = app.add_subcommand("index", "Concept index construction");
    auto* index_build = index->add_subcommand("build", "Candidates, LLM selection, core concept profiles");
    auto* index_enrich = index->add_subcommand("enrich", "Enriched concept distributions from the extractor");
    index->require_subcommand(1);
    auto* extractor = app.add_subcommand("extractor", "Concept extractor");
    auto* extractor_train = extractor->add_subcommand("train", "Train the two-head extractor");
    extractor->require_subcommand(1);
    auto* qgen = app.add_subcommand("qgen", "Concept-conditioned query generation");
    auto* qgen_generate = qgen->add_subcommand("generate", "Generate queries per document");
    auto* qgen_filter = qgen->add_subcommand("filter", "Round-trip concept-aware filtering");
    auto* qgen_pairs = qgen->add_subcommand("export-pairs", "Write training pairs for kept queries");
    qgen->require_subcommand(1);
    auto* expand = app.add_subcommand("expand", "Offline document expansion");
    auto* expand_snippets = expand->add_subcommand("snippets", "Generate and embed concept-focused snippets");
    expand->require_subcommand(1);
    auto* search = app.add_subcommand("search", "Exact dense search over held-out queries");
    auto* rescore = app.add_subcommand("rescore", "Rescore the base ranking");
    rescore->add_option("--variant", o.variant, "max | average | concept | hyde | hyde+max | none");
    auto* eval = app.add_subcommand("eval", "Evaluate runs against qrels");
    auto* stats = app.add_subcommand("stats", "Generated query statistics");
    auto* bench = app.add_subcommand("bench", "Per-stage latency over the held-out queries");
    bench->add_option("--variant", o.variant, "Rescore variant to time");
    bench->add_option("--repeat", o.repeat, "Passes over the query set")->check(CLI::PositiveNumber);
    auto* run = app.add_subcommand("run", "Full pipeline: index through eval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    set_warning_sink([&err](std::string_view msg) { err << "warning: " << msg << "\n"; });
    struct SinkReset {
        ~SinkReset() { set_warning_sink(nullptr); }
    } reset;

    try {
        std::string base_dir;
        auto raw = raw_config(o, base_dir);
        auto cfg = config_from_json(raw, base_dir);
        if (o.emit_config) {
            out << config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
        if (app.get_subcommands().empty()) {
            err << "error: a command is required\n" << app.help();
            return 2;
        }
        Pipeline p(cfg);
        if (index_build->parsed()) {
            p.index_build();
            out << fmt::format("index build: {} documents -> {}\n", p.corpus().size(),
                               p.artifact("concept_index.jsonl"));
        } else if (index_enrich->parsed()) {
            p.index_enrich();
            out << "index enrich: " << p.artifact("concept_index.jsonl") << "\n";
        } else if (extractor_train->parsed()) {
            p.extractor_train();
            out << "extractor train: " << p.artifact("model.json") << "\n";
        } else if (qgen_generate->parsed()) {
            p.qgen_generate();
            out << "qgen generate: " << p.artifact("queries.jsonl") << "\n";
        } else if (qgen_filter->parsed()) {
            p.qgen_filter();
            out << "qgen filter: " << p.artifact("queries.jsonl") << "\n";
        } else if (qgen_pairs->parsed()) {
            auto n = p.qgen_export_pairs();
            out << fmt::format("qgen export-pairs: {} pairs -> {}\n", n, p.artifact("pairs.jsonl"));
        } else if (expand_snippets->parsed()) {
            p.expand_snippets();
            out << fmt::format("expand snippets: {} LLM calls -> {}\n", p.gateway().log().total(),
                               p.artifact("snippets.jsonl"));
        } else if (search->parsed()) {
            auto runs = p.search();
            out << fmt::format("search: {} queries -> {}\n", runs.size(), p.artifact("run.base.txt"));
        } else if (rescore->parsed()) {
            auto runs = p.rescore(cfg.expand.variant);
            out << fmt::format("rescore ({}): {} queries, {} LLM calls -> {}\n", cfg.expand.variant, runs.size(),
                               p.gateway().log().total(), p.artifact("run.rescored.txt"));
        } else if (eval->parsed()) {
            auto m = p.eval();
            print_metrics(out, m, "base");
            print_metrics(out, m, "rescored");
        } else if (stats->parsed()) {
            auto s = p.stats();
            out << fmt::format("stats: {} queries, mean redundancy {}, mean lexical overlap {:.4f}\n",
                               s["num_queries"].get<std::size_t>(), s["mean_redundancy"].dump(),
                               s["mean_lexical_overlap"].get<double>());
        } else if (bench->parsed()) {
            auto r = p.bench(cfg.expand.variant, o.repeat);
            out << r.to_json().dump(2) << "\n";
        } else if (run->parsed()) {
            p.run_all();
            auto m = json::parse(read_text_file(p.artifact("metrics.json")));
            print_metrics(out, m, "base");
            print_metrics(out, m, "rescored");
        }
        return 0;
    } catch (const ConfigError& e) {
        err << json{{"error", "config"}, {"field", e.field()}, {"message", e.what()}}.dump() << "\n";
        return 2;
    } catch (const InputError& e) {
        err << json{{"error", "input"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const ProviderError& e) {
        err << json{{"error", "provider"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
}

}  // namespace conceptidx
