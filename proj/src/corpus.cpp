// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/corpus.hpp"

#include <deque>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "conceptidx/common.hpp"

namespace conceptidx {

using nlohmann::json;

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (docs_[i].id.empty()) {
            throw InputError(fmt::format("document at position {} has an empty id", i));
        }
        if (!index_.emplace(docs_[i].id, i).second) {
            throw InputError(fmt::format("duplicate document id \"{}\"", docs_[i].id));
        }
    }
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Corpus::ordinal(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError(fmt::format("unknown document id \"{}\"", id));
    return it->second;
}

Corpus load_corpus(const std::string& path) {
    auto lines = read_lines(path);
    std::vector<Document> docs;
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const auto& line = lines[ln];
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(fmt::format("{}:{}: malformed JSON ({})", path, ln + 1, e.what()));
        }
        if (!rec.is_object()) {
            throw InputError(fmt::format("{}:{}: expected a JSON object", path, ln + 1));
        }
        Document doc;
        for (const char* key : {"id", "title", "abstract"}) {
            if (!rec.contains(key) || !rec[key].is_string()) {
                throw InputError(fmt::format("{}:{}: missing string field \"{}\"", path, ln + 1, key));
            }
        }
        doc.id = rec["id"].get<std::string>();
        doc.title = rec["title"].get<std::string>();
        doc.abstract = rec["abstract"].get<std::string>();
        if (doc.id.empty()) throw InputError(fmt::format("{}:{}: empty id", path, ln + 1));
        auto [it, inserted] = seen.emplace(doc.id, ln + 1);
        if (!inserted) {
            throw InputError(fmt::format("{}:{}: duplicate document id \"{}\" (first seen on line {})",
                                         path, ln + 1, doc.id, it->second));
        }
        docs.push_back(std::move(doc));
    }
    return Corpus(std::move(docs));
}

Taxonomy::Taxonomy(std::vector<TaxonomyNode> nodes) : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].id.empty()) throw InputError("taxonomy node with empty id");
        if (!index_.emplace(nodes_[i].id, i).second) {
            throw InputError(fmt::format("duplicate taxonomy node id \"{}\"", nodes_[i].id));
        }
    }
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (!n.parent) {
            roots.push_back(i);
            continue;
        }
        if (!index_.count(*n.parent)) {
            throw InputError(fmt::format("node \"{}\" references unknown parent \"{}\"", n.id, *n.parent));
        }
        children_[*n.parent].push_back(n.id);
    }
    // Follow parent pointers; 0 = unvisited, 1 = on current chain, 2 = known to reach a root.
    std::vector<int> state(nodes_.size(), 0);
    for (std::size_t start = 0; start < nodes_.size(); ++start) {
        std::vector<std::size_t> chain;
        std::size_t cur = start;
        while (state[cur] == 0) {
            state[cur] = 1;
            chain.push_back(cur);
            if (!nodes_[cur].parent) break;
            cur = index_.at(*nodes_[cur].parent);
            if (state[cur] == 1) {
                throw InputError(fmt::format("taxonomy cycle involving node \"{}\"", nodes_[cur].id));
            }
        }
        for (auto c : chain) state[c] = 2;
    }
    if (roots.empty()) throw InputError("taxonomy has no root");
    if (roots.size() > 1) {
        throw InputError(fmt::format("taxonomy has {} roots (\"{}\", \"{}\", ...)", roots.size(),
                                     nodes_[roots[0]].id, nodes_[roots[1]].id));
    }
    root_ = roots[0];

    // BFS from the root assigns levels; anything unreached sits on a cycle.
    std::vector<bool> reached(nodes_.size(), false);
    std::deque<std::size_t> queue{root_};
    reached[root_] = true;
    nodes_[root_].level = 0;
    std::size_t count = 0;
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        ++count;
        auto it = children_.find(nodes_[cur].id);
        if (it == children_.end()) continue;
        for (const auto& child : it->second) {
            auto ci = index_.at(child);
            nodes_[ci].level = nodes_[cur].level + 1;
            reached[ci] = true;
            queue.push_back(ci);
        }
    }
    if (count != nodes_.size()) {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!reached[i]) {
                throw InputError(fmt::format("taxonomy cycle involving node \"{}\"", nodes_[i].id));
            }
        }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (i == root_) continue;
        topic_index_.emplace(nodes_[i].id, topics_.size());
        topics_.push_back(nodes_[i].id);
    }
}

const TaxonomyNode& Taxonomy::node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError(fmt::format("unknown taxonomy node \"{}\"", id));
    return nodes_[it->second];
}

const std::vector<std::string>& Taxonomy::children(const std::string& id) const {
    static const std::vector<std::string> kNone;
    if (!index_.count(id)) throw InputError(fmt::format("unknown taxonomy node \"{}\"", id));
    auto it = children_.find(id);
    return it == children_.end() ? kNone : it->second;
}

std::vector<std::string> Taxonomy::subtree_nodes(const std::string& id) const {
    std::vector<std::string> out;
    std::vector<std::string> stack{node(id).id};
    while (!stack.empty()) {
        auto cur = std::move(stack.back());
        stack.pop_back();
        const auto& ch = children(cur);
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
        out.push_back(std::move(cur));
    }
    return out;
}

std::optional<std::size_t> Taxonomy::topic_index(const std::string& id) const {
    auto it = topic_index_.find(id);
    if (it == topic_index_.end()) return std::nullopt;
    return it->second;
}

Taxonomy load_taxonomy(const std::string& path) {
    json arr;
    try {
        arr = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(fmt::format("{}: malformed JSON ({})", path, e.what()));
    }
    if (!arr.is_array()) throw InputError(path + ": expected a JSON array of nodes");
    std::vector<TaxonomyNode> nodes;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& rec = arr[i];
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() || !rec.contains("name") ||
            !rec["name"].is_string()) {
            throw InputError(fmt::format("{}: node #{} needs string fields id and name", path, i));
        }
        TaxonomyNode n;
        n.id = rec["id"].get<std::string>();
        n.name = rec["name"].get<std::string>();
        if (rec.contains("parent") && !rec["parent"].is_null()) {
            if (!rec["parent"].is_string()) {
                throw InputError(fmt::format("{}: node \"{}\" has a non-string parent", path, n.id));
            }
            n.parent = rec["parent"].get<std::string>();
        }
        nodes.push_back(std::move(n));
    }
    return Taxonomy(std::move(nodes));
}

PhraseVocab::PhraseVocab(const std::vector<std::string>& raw) {
    for (const auto& r : raw) {
        auto p = to_lower(trim(r));
        if (p.empty()) continue;
        if (index_.emplace(p, phrases_.size()).second) phrases_.push_back(std::move(p));
    }
}

std::optional<std::size_t> PhraseVocab::find(const std::string& phrase) const {
    auto it = index_.find(to_lower(trim(phrase)));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

PhraseVocab load_phrase_vocab(const std::string& path) {
    PhraseVocab vocab(read_lines(path));
    if (vocab.size() == 0) throw InputError(path + ": phrase vocabulary is empty");
    return vocab;
}

}  // namespace conceptidx
