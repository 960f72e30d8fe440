// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace conceptidx {

struct Document {
    std::string id;
    std::string title;
    std::string abstract;

    /// Canonical text used for embedding and lexical statistics.
    std::string text() const { return title + " " + abstract; }
};

/// Documents in load order, addressed either by ordinal or by id.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Document> docs);

    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document& operator[](std::size_t ordinal) const { return docs_.at(ordinal); }
    const std::vector<Document>& documents() const noexcept { return docs_; }

    std::optional<std::size_t> find(const std::string& id) const;
    std::size_t ordinal(const std::string& id) const;  // throws InputError
    const Document& by_id(const std::string& id) const { return docs_[ordinal(id)]; }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct TaxonomyNode {
    std::string id;
    std::string name;
    std::optional<std::string> parent;
    int level = 0;
};

/// Rooted topic tree. Node positions follow file order; the topic set used by
/// the concept index is every non-root node in that order.
class Taxonomy {
public:
    Taxonomy() = default;
    explicit Taxonomy(std::vector<TaxonomyNode> nodes);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::string& root() const { return nodes_[root_].id; }
    const TaxonomyNode& node(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    const std::vector<std::string>& children(const std::string& id) const;
    const std::vector<TaxonomyNode>& nodes() const noexcept { return nodes_; }

    /// Every node in the subtree rooted at `id`, including `id`, in preorder.
    std::vector<std::string> subtree_nodes(const std::string& id) const;

    /// Non-root node ids in file order; position = topic index.
    const std::vector<std::string>& topic_ids() const noexcept { return topics_; }
    std::optional<std::size_t> topic_index(const std::string& id) const;

private:
    std::vector<TaxonomyNode> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::vector<std::string>> children_;
    std::vector<std::string> topics_;
    std::unordered_map<std::string, std::size_t> topic_index_;
    std::size_t root_ = 0;
};

/// Lowercased, deduplicated phrase list in first-occurrence order.
class PhraseVocab {
public:
    PhraseVocab() = default;
    explicit PhraseVocab(const std::vector<std::string>& raw);

    std::size_t size() const noexcept { return phrases_.size(); }
    const std::string& operator[](std::size_t i) const { return phrases_.at(i); }
    const std::vector<std::string>& phrases() const noexcept { return phrases_; }
    std::optional<std::size_t> find(const std::string& phrase) const;

private:
    std::vector<std::string> phrases_;
    std::unordered_map<std::string, std::size_t> index_;
};

Corpus load_corpus(const std::string& path);
Taxonomy load_taxonomy(const std::string& path);
PhraseVocab load_phrase_vocab(const std::string& path);

}  // namespace conceptidx
