// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/llm.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>

#include "conceptidx/common.hpp"
#include "http.hpp"

namespace conceptidx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<PromptKind, const char*> kKindNames[] = {
    {PromptKind::topic_select, "topic_select"},     {PromptKind::phrase_select, "phrase_select"},
    {PromptKind::query_plain, "query_plain"},       {PromptKind::query_fewshot, "query_fewshot"},
    {PromptKind::query_pairwise, "query_pairwise"}, {PromptKind::snippet, "snippet"},
    {PromptKind::hyde, "hyde"},
};

// Placeholder demonstrations for the few-shot and pair-wise schemes. They are
// illustrative only; swap in domain examples for real runs.
const std::vector<FewShotExample>& placeholder_examples() {
    static const std::vector<FewShotExample> kExamples = {
        {"Matrix factorization for implicit feedback. We model user preferences from click logs with a "
         "weighted low-rank decomposition and report gains on two benchmarks.",
         "weighted matrix factorization for implicit feedback recommendation",
         "explicit rating prediction with deep autoencoders"},
        {"Graph attention for molecule property prediction. Attention over bonded neighbors improves "
         "regression of solubility and toxicity.",
         "attention-based graph networks for molecular property regression",
         "protein folding with evolutionary sequence alignments"},
    };
    return kExamples;
}

std::string render_examples(const std::vector<FewShotExample>& examples, bool pairwise) {
    std::string out;
    for (const auto& ex : examples) {
        out += "Document: " + ex.document + "\n";
        if (pairwise) {
            out += "RELEVANT: " + ex.query + "\nIRRELEVANT: " + ex.negative_query + "\n\n";
        } else {
            out += "Query: " + ex.query + "\n\n";
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

bool istarts_with(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

}  // namespace

PromptKind parse_prompt_kind(const std::string& name) {
    for (auto [k, n] : kKindNames) {
        if (name == n) return k;
    }
    throw ConfigError("scheme", "unknown prompt kind \"" + name + "\"");
}

std::string to_string(PromptKind kind) {
    for (auto [k, n] : kKindNames) {
        if (k == kind) return n;
    }
    return "unknown";
}

PromptTemplate default_template(PromptKind kind) {
    PromptTemplate t;
    t.kind = kind;
    switch (kind) {
        case PromptKind::topic_select:
        case PromptKind::phrase_select: {
            std::string noun = kind == PromptKind::topic_select ? "topic" : "phrase";
            t.body = fmt::format(
                "You will receive a document along with a set of candidate {0}s. Your task is to select the {0}s "
                "that best align with the core theme of the document. Exclude {0}s that are too broad or less "
                "relevant. You may list up to {{k}} {0}s, using only the {0} names in the candidate set. "
                "Document: {{document}}, Candidate {0} set: {{candidates}}\n"
                "Answer with one {0} per line.",
                noun);
            break;
        }
        case PromptKind::query_plain:
            t.body =
                "Generate a relevant search query that a researcher might issue to find the following scientific "
                "document.\nDocument: {document}\nAnswer with the query only.";
            break;
        case PromptKind::query_fewshot:
            t.fewshot_examples = placeholder_examples();
            t.body =
                "{examples}Generate a relevant search query for the document below.\n"
                "Document: {document}\nQuery:";
            break;
        case PromptKind::query_pairwise:
            t.fewshot_examples = placeholder_examples();
            t.body =
                "{examples}For the document below, write one relevant query and one irrelevant query that is "
                "thematically close but not answered by the document.\nDocument: {document}\n"
                "Answer in exactly two lines:\nRELEVANT: <query>\nIRRELEVANT: <query>";
            break;
        case PromptKind::snippet:
            t.body =
                "Given a document and a query, generate one coherent paragraph (4-6 sentences) that explains how "
                "the document addresses the information need of the query, with emphasis on the concepts "
                "represented by the query's topics. Document: {document}, Query: {query}";
            break;
        case PromptKind::hyde:
            t.body = "Write a short scientific abstract that answers the following query.\nQuery: {query}";
            break;
    }
    return t;
}

std::string render_template(const std::string& body, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(body.size());
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] == '{') {
            auto close = body.find('}', i + 1);
            if (close != std::string::npos) {
                auto name = body.substr(i + 1, close - i - 1);
                bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
                });
                if (ident) {
                    auto it = slots.find(name);
                    if (it == slots.end()) throw InputError("prompt slot {" + name + "} is not filled");
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(body[i++]);
    }
    return out;
}

std::string condition_instruction(const std::vector<std::string>& phrases) {
    return "Generate a relevant query based on the following keywords: " + join(phrases, ", ");
}

json ChatRequest::to_json() const {
    json body;
    body["model"] = model;
    body["messages"] = json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["temperature"] = temperature;
    body["max_tokens"] = max_tokens;
    return body;
}

std::string ChatRequest::prompt_text() const {
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i) out += "\n\n";
        out += messages[i].content;
    }
    return out;
}

std::string prompt_fingerprint(const ChatRequest& request) { return sha256_hex(request.prompt_text()); }

void MockChatBackend::add_fixture(const std::string& fingerprint, std::string response) {
    std::lock_guard lock(mutex_);
    fixtures_[fingerprint] = std::move(response);
}

std::size_t MockChatBackend::fixture_hits() const {
    std::lock_guard lock(mutex_);
    return fixture_hits_;
}

std::string MockChatBackend::complete(const ChatRequest& request, const DispatchHint& hint) {
    auto key = prompt_fingerprint(request);
    {
        std::lock_guard lock(mutex_);
        auto it = fixtures_.find(key);
        if (it != fixtures_.end()) {
            ++fixture_hits_;
            return it->second;
        }
    }
    if (!fixtures_dir_.empty()) {
        auto path = fs::path(fixtures_dir_) / (key + ".txt");
        if (fs::exists(path)) {
            std::lock_guard lock(mutex_);
            ++fixture_hits_;
            return read_text_file(path.string());
        }
    }

    // Echo fallback.
    const auto& e = hint.echo;
    auto first = e.empty() ? std::string() : e.front();
    if (hint.purpose == "topic_select" || hint.purpose == "phrase_select") return join(e, "\n");
    if (hint.purpose == "query_pairwise") {
        return "RELEVANT: " + join(e, ", ") + "\nIRRELEVANT: general survey unrelated to " + first;
    }
    if (hint.purpose == "snippet") {
        // echo = {query, title, abstract}
        auto title = e.size() > 1 ? e[1] : std::string();
        auto abstract = e.size() > 2 ? e[2] : std::string();
        return fmt::format("The work \"{}\" addresses {}. {}", title, first, abstract);
    }
    if (hint.purpose == "hyde") return first;
    return join(e, ", ");
}

HttpChatBackend::HttpChatBackend(std::string endpoint, int timeout_s)
    : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {}

std::string HttpChatBackend::complete(const ChatRequest& request, const DispatchHint&) {
    auto res = detail::http_post_json(endpoint_, "/chat/completions", request.to_json(),
                                      detail::env_or_empty("CONCEPT_LLM_API_KEY"), timeout_s_);
    try {
        const auto& content = res.at("choices").at(0).at("message").at("content");
        return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed chat response: ") + e.what());
    }
}

void CallLog::record(const std::string& purpose, double millis) {
    std::lock_guard lock(mutex_);
    ++counts_[purpose];
    latencies_[purpose].push_back(millis);
}

std::size_t CallLog::count(const std::string& purpose) const {
    std::lock_guard lock(mutex_);
    auto it = counts_.find(purpose);
    return it == counts_.end() ? 0 : it->second;
}

std::size_t CallLog::total() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, c] : counts_) n += c;
    return n;
}

std::map<std::string, std::size_t> CallLog::counts() const {
    std::lock_guard lock(mutex_);
    return counts_;
}

std::vector<double> CallLog::latencies(const std::string& purpose) const {
    std::lock_guard lock(mutex_);
    auto it = latencies_.find(purpose);
    return it == latencies_.end() ? std::vector<double>{} : it->second;
}

std::unique_ptr<ChatBackend> make_chat_backend(const GatewayConfig& cfg) {
    auto endpoint = detail::env_or_empty("CONCEPT_LLM_ENDPOINT");
    if (endpoint.empty()) endpoint = cfg.endpoint;
    if (endpoint == "mock") return std::make_unique<MockChatBackend>(cfg.fixtures_dir);
    return std::make_unique<HttpChatBackend>(endpoint, cfg.timeout_s);
}

LlmGateway::LlmGateway(GatewayConfig cfg) : LlmGateway(cfg, make_chat_backend(cfg)) {}

LlmGateway::LlmGateway(GatewayConfig cfg, std::unique_ptr<ChatBackend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
    if (cfg_.max_inflight == 0) throw ConfigError("llm.max_inflight", "max_inflight must be positive");
    if (cfg_.retries < 0) throw ConfigError("llm.retries", "retries must be non-negative");
    inflight_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(cfg_.max_inflight));
}

template <typename Parse>
auto LlmGateway::dispatch(const ChatRequest& req, const DispatchHint& hint, Parse parse) ->
    typename decltype(parse(std::string{}))::value_type {
    std::string last_error = "empty response";
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        if (attempt > 0 && cfg_.backoff_base_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 1)));
        }
        std::string response;
        bool ok = false;
        inflight_->acquire();
        auto t0 = std::chrono::steady_clock::now();
        try {
            response = backend_->complete(req, hint);
            ok = true;
        } catch (const ProviderError& e) {
            last_error = e.what();
        } catch (...) {
            inflight_->release();
            throw;
        }
        auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        inflight_->release();
        log_.record(hint.purpose, ms);
        if (!ok) continue;
        if (auto parsed = parse(response)) return std::move(*parsed);
        last_error = "unusable response";
    }
    throw ProviderError(fmt::format("{} request failed after {} attempts: {}", hint.purpose, cfg_.retries + 1,
                                    last_error));
}

ChatRequest LlmGateway::selection_request(const Document& doc, const std::vector<std::string>& candidates,
                                          std::size_t k, ConceptKind kind) const {
    auto tmpl = default_template(kind == ConceptKind::topic ? PromptKind::topic_select : PromptKind::phrase_select);
    ChatRequest req;
    req.model = cfg_.model;
    req.temperature = cfg_.temperature_select;
    req.max_tokens = cfg_.max_tokens;
    req.messages.push_back({"user", render_template(tmpl.body, {{"k", std::to_string(k)},
                                                                 {"document", doc.text()},
                                                                 {"candidates", join(candidates, "; ")}})});
    return req;
}

ChatRequest LlmGateway::query_request(const PromptTemplate& tmpl, const Document& doc,
                                      const std::optional<std::vector<std::string>>& condition) const {
    ChatRequest req;
    req.model = cfg_.model;
    req.temperature = cfg_.temperature_generate;
    req.max_tokens = cfg_.max_tokens;
    auto prompt = render_template(
        tmpl.body, {{"document", doc.text()},
                    {"examples", render_examples(tmpl.fewshot_examples, tmpl.kind == PromptKind::query_pairwise)}});
    if (condition) prompt += "\n" + condition_instruction(*condition);
    req.messages.push_back({"user", std::move(prompt)});
    return req;
}

ChatRequest LlmGateway::snippet_request(const Document& doc, const std::string& query) const {
    ChatRequest req;
    req.model = cfg_.model;
    req.temperature = cfg_.temperature_generate;
    req.max_tokens = cfg_.max_tokens;
    req.messages.push_back(
        {"user", render_template(default_template(PromptKind::snippet).body,
                                 {{"document", doc.text()}, {"query", query}})});
    return req;
}

ChatRequest LlmGateway::hyde_request(const std::string& query) const {
    ChatRequest req;
    req.model = cfg_.model;
    req.temperature = cfg_.temperature_generate;
    req.max_tokens = cfg_.max_tokens;
    req.messages.push_back({"user", render_template(default_template(PromptKind::hyde).body, {{"query", query}})});
    return req;
}

std::vector<std::string> parse_selection(const std::string& response) {
    std::vector<std::string> items;
    std::string cur;
    auto flush = [&] {
        auto t = trim(cur);
        cur.clear();
        // Strip list decorations: bullets, "1." / "2)" numbering, quotes.
        std::size_t b = 0;
        while (b < t.size() && (t[b] == '-' || t[b] == '*' || t[b] == '#')) ++b;
        std::size_t d = b;
        while (d < t.size() && std::isdigit(static_cast<unsigned char>(t[d]))) ++d;
        if (d > b && d < t.size() && (t[d] == '.' || t[d] == ')')) b = d + 1;
        t = trim(std::string_view(t).substr(b));
        while (!t.empty() && (t.front() == '"' || t.front() == '\'' || t.front() == '`')) t.erase(t.begin());
        while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '`' || t.back() == '.')) t.pop_back();
        t = trim(t);
        if (!t.empty()) items.push_back(std::move(t));
    };
    for (char c : response) {
        if (c == '\n' || c == ',' || c == ';') {
            flush();
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return items;
}

std::optional<GeneratedText> parse_pairwise(const std::string& response) {
    GeneratedText out;
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (istarts_with(t, "relevant:")) {
            out.text = trim(std::string_view(t).substr(9));
        } else if (istarts_with(t, "irrelevant:")) {
            out.negative = trim(std::string_view(t).substr(11));
        }
    }
    if (out.text.empty()) return std::nullopt;
    return out;
}

std::vector<std::string> LlmGateway::select_concepts(const Document& doc, const std::vector<std::string>& candidates,
                                                     std::size_t k, ConceptKind kind) {
    if (candidates.empty()) throw InputError("select_concepts needs at least one candidate");
    std::unordered_map<std::string, const std::string*> lookup;
    for (const auto& c : candidates) lookup.emplace(to_lower(trim(c)), &c);
    auto req = selection_request(doc, candidates, k, kind);
    DispatchHint hint{kind == ConceptKind::topic ? "topic_select" : "phrase_select", candidates};
    return dispatch(req, hint, [&](const std::string& response) -> std::optional<std::vector<std::string>> {
        std::vector<std::string> out;
        std::unordered_set<std::string> seen;
        for (const auto& item : parse_selection(response)) {
            auto it = lookup.find(to_lower(item));
            if (it == lookup.end()) continue;
            if (!seen.insert(*it->second).second) continue;
            out.push_back(*it->second);
            if (out.size() == k) break;
        }
        if (out.empty()) return std::nullopt;
        return out;
    });
}

GeneratedText LlmGateway::generate_query(const PromptTemplate& tmpl, const Document& doc,
                                         const std::optional<std::vector<std::string>>& condition) {
    auto req = query_request(tmpl, doc, condition);
    DispatchHint hint{to_string(tmpl.kind), condition ? *condition : std::vector<std::string>{doc.title}};
    bool pairwise = tmpl.kind == PromptKind::query_pairwise;
    return dispatch(req, hint, [&](const std::string& response) -> std::optional<GeneratedText> {
        if (pairwise) return parse_pairwise(response);
        auto t = trim(response);
        if (t.empty()) return std::nullopt;
        return GeneratedText{std::move(t), std::nullopt};
    });
}

std::string LlmGateway::generate_snippet(const Document& doc, const std::string& query) {
    auto req = snippet_request(doc, query);
    DispatchHint hint{"snippet", {query, doc.title, doc.abstract}};
    return dispatch(req, hint, [](const std::string& response) -> std::optional<std::string> {
        auto t = trim(response);
        if (t.empty()) return std::nullopt;
        return t;
    });
}

std::vector<std::string> LlmGateway::generate_hypothetical_docs(const std::string& query, std::size_t n) {
    if (n == 0) throw InputError("generate_hypothetical_docs needs n >= 1");
    auto req = hyde_request(query);
    DispatchHint hint{"hyde", {query}};
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(dispatch(req, hint, [](const std::string& response) -> std::optional<std::string> {
            auto t = trim(response);
            if (t.empty()) return std::nullopt;
            return t;
        }));
    }
    return out;
}

}  // namespace conceptidx
