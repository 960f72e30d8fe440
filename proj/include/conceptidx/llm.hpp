// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptidx/corpus.hpp"

namespace conceptidx {

enum class PromptKind { topic_select, phrase_select, query_plain, query_fewshot, query_pairwise, snippet, hyde };

PromptKind parse_prompt_kind(const std::string& name);
std::string to_string(PromptKind kind);

struct FewShotExample {
    std::string document;
    std::string query;
    std::string negative_query;
};

/// Prompt body with `{slot}` placeholders.
struct PromptTemplate {
    PromptKind kind = PromptKind::query_plain;
    std::string body;
    std::vector<FewShotExample> fewshot_examples;
};

PromptTemplate default_template(PromptKind kind);

/// Substitutes `{name}` slots in one pass (inserted text is not rescanned).
/// Throws InputError when the body references a slot missing from `slots`.
std::string render_template(const std::string& body, const std::map<std::string, std::string>& slots);

/// Instruction appended to the base prompt when a query is conditioned.
std::string condition_instruction(const std::vector<std::string>& phrases);

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;

    nlohmann::json to_json() const;
    /// Message contents joined by blank lines; the text fixtures are keyed on.
    std::string prompt_text() const;
};

/// SHA-256 hex of ChatRequest::prompt_text().
std::string prompt_fingerprint(const ChatRequest& request);

/// Side information for offline backends. Never sent over the wire.
struct DispatchHint {
    std::string purpose;
    std::vector<std::string> echo;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& request, const DispatchHint& hint) = 0;
};

/// Offline backend. Looks up responses by prompt fingerprint, first in
/// fixtures registered in memory, then in `<fixtures_dir>/<sha256>.txt`, and
/// otherwise answers with a rule-based echo built from the hint.
class MockChatBackend : public ChatBackend {
public:
    explicit MockChatBackend(std::string fixtures_dir = {}) : fixtures_dir_(std::move(fixtures_dir)) {}

    void add_fixture(const std::string& fingerprint, std::string response);
    std::string complete(const ChatRequest& request, const DispatchHint& hint) override;
    std::size_t fixture_hits() const;

private:
    std::string fixtures_dir_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::string> fixtures_;
    std::size_t fixture_hits_ = 0;
};

/// OpenAI-compatible POST {endpoint}/chat/completions client.
class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(std::string endpoint, int timeout_s);
    std::string complete(const ChatRequest& request, const DispatchHint& hint) override;

private:
    std::string endpoint_;
    int timeout_s_;
};

/// Per-purpose request counts and latencies. Thread-safe.
class CallLog {
public:
    void record(const std::string& purpose, double millis);
    std::size_t count(const std::string& purpose) const;
    std::size_t total() const;
    std::map<std::string, std::size_t> counts() const;
    std::vector<double> latencies(const std::string& purpose) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> counts_;
    std::map<std::string, std::vector<double>> latencies_;
};

struct GatewayConfig {
    std::string endpoint = "mock";  // "mock" or an http(s) base URL
    std::string model = "mock-chat";
    std::string fixtures_dir;
    double temperature_generate = 0.7;
    double temperature_select = 0.0;
    int max_tokens = 512;
    int retries = 3;
    int backoff_base_ms = 500;
    std::size_t max_inflight = 4;
    int timeout_s = 120;
};

std::unique_ptr<ChatBackend> make_chat_backend(const GatewayConfig& cfg);

enum class ConceptKind { topic, phrase };

struct GeneratedText {
    std::string text;
    std::optional<std::string> negative;  // pairwise scheme only
};

/// Every chat interaction of the pipeline goes through here.
class LlmGateway {
public:
    explicit LlmGateway(GatewayConfig cfg);
    LlmGateway(GatewayConfig cfg, std::unique_ptr<ChatBackend> backend);

    const GatewayConfig& config() const noexcept { return cfg_; }
    const CallLog& log() const noexcept { return log_; }
    ChatBackend& backend() noexcept { return *backend_; }

    /// Items of the reply that match a candidate (case-insensitive), in reply
    /// order, deduplicated, truncated to k. Unmatched items are dropped.
    std::vector<std::string> select_concepts(const Document& doc, const std::vector<std::string>& candidates,
                                             std::size_t k, ConceptKind kind);

    GeneratedText generate_query(const PromptTemplate& tmpl, const Document& doc,
                                 const std::optional<std::vector<std::string>>& condition);
    std::string generate_snippet(const Document& doc, const std::string& query);
    std::vector<std::string> generate_hypothetical_docs(const std::string& query, std::size_t n);

    ChatRequest selection_request(const Document& doc, const std::vector<std::string>& candidates, std::size_t k,
                                  ConceptKind kind) const;
    ChatRequest query_request(const PromptTemplate& tmpl, const Document& doc,
                              const std::optional<std::vector<std::string>>& condition) const;
    ChatRequest snippet_request(const Document& doc, const std::string& query) const;
    ChatRequest hyde_request(const std::string& query) const;

private:
    template <typename Parse>
    auto dispatch(const ChatRequest& req, const DispatchHint& hint, Parse parse) ->
        typename decltype(parse(std::string{}))::value_type;

    GatewayConfig cfg_;
    std::unique_ptr<ChatBackend> backend_;
    CallLog log_;
    std::unique_ptr<std::counting_semaphore<>> inflight_;
};

std::vector<std::string> parse_selection(const std::string& response);
std::optional<GeneratedText> parse_pairwise(const std::string& response);

}  // namespace conceptidx
