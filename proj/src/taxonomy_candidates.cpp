// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include "conceptidx/taxonomy_candidates.hpp"

#include <algorithm>
#include <unordered_map>

#include <fmt/format.h>

#include "conceptidx/common.hpp"

namespace conceptidx {

namespace {

std::span<const float> name_row(const EmbeddingMatrix& names, const std::string& node) {
    auto r = names.find(node);
    if (!r) throw InputError(fmt::format("missing name embedding for taxonomy node \"{}\"", node));
    return names.row(*r);
}

// Per-document memo of (sum of cosines, node count) over each subtree, filled
// lazily by post-order recursion so every node's cosine is computed once.
class SubtreeSims {
public:
    SubtreeSims(std::span<const float> doc, const Taxonomy& tax, const EmbeddingMatrix& names)
        : doc_(doc), tax_(tax), names_(names) {}

    double mean(const std::string& node) {
        auto [sum, count] = accumulate(node);
        return sum / static_cast<double>(count);
    }

private:
    std::pair<double, std::size_t> accumulate(const std::string& node) {
        auto it = memo_.find(node);
        if (it != memo_.end()) return it->second;
        double sum = similarity(doc_, name_row(names_, node), Metric::cosine);
        std::size_t count = 1;
        for (const auto& child : tax_.children(node)) {
            auto [s, c] = accumulate(child);
            sum += s;
            count += c;
        }
        return memo_[node] = {sum, count};
    }

    std::span<const float> doc_;
    const Taxonomy& tax_;
    const EmbeddingMatrix& names_;
    std::unordered_map<std::string, std::pair<double, std::size_t>> memo_;
};

}  // namespace

double node_similarity(std::span<const float> doc_embedding, const std::string& node, const Taxonomy& taxonomy,
                       const EmbeddingMatrix& name_embeddings) {
    double sum = 0.0;
    auto members = taxonomy.subtree_nodes(node);
    for (const auto& j : members) sum += similarity(doc_embedding, name_row(name_embeddings, j), Metric::cosine);
    return sum / static_cast<double>(members.size());
}

TraversalResult traverse_candidates(std::span<const float> doc_embedding, const Taxonomy& taxonomy,
                                    const EmbeddingMatrix& name_embeddings) {
    TraversalResult out;
    SubtreeSims sims(doc_embedding, taxonomy, name_embeddings);

    struct Ranked {
        double sim;
        const std::string* id;
    };
    // Depth-first; each stack frame is a node to visit.
    std::vector<std::string> stack{taxonomy.root()};
    while (!stack.empty()) {
        auto node = std::move(stack.back());
        stack.pop_back();
        ++out.visited_count;
        if (node != taxonomy.root()) out.candidates.push_back(node);

        const auto& children = taxonomy.children(node);
        if (children.empty()) continue;
        std::vector<Ranked> ranked;
        ranked.reserve(children.size());
        for (const auto& c : children) {
            double s = sims.mean(c);
            out.per_node_sim[c] = s;
            ranked.push_back({s, &c});
        }
        std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.sim != b.sim) return a.sim > b.sim;
            return *a.id < *b.id;
        });
        auto budget = std::min<std::size_t>(static_cast<std::size_t>(taxonomy.node(node).level) + 2, ranked.size());
        // Push in reverse so the most similar child is visited first.
        for (std::size_t i = budget; i-- > 0;) stack.push_back(*ranked[i].id);
    }
    return out;
}

EmbeddingMatrix embed_taxonomy_names(const Taxonomy& taxonomy, EmbeddingProvider& provider) {
    std::vector<std::string> names;
    names.reserve(taxonomy.size());
    for (const auto& n : taxonomy.nodes()) names.push_back(n.name);
    auto rows = provider.embed_batch(names);
    EmbeddingMatrix out(rows.dim());
    for (std::size_t i = 0; i < taxonomy.size(); ++i) out.add(taxonomy.nodes()[i].id, rows.row(i));
    return out;
}

}  // namespace conceptidx
