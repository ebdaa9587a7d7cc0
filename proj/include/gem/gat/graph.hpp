#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "gem/autodiff/tensor.hpp"
#include "gem/core/error.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/retrieval/embedding.hpp"

namespace gem::gat {

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;

    bool operator==(const Edge&) const = default;
};

// One node per utterance in window order. Temporal edges connect consecutive
// utterances (src -> dst flows i -> i+1; both directions when bidirectional);
// every node carries a self-loop so no neighborhood is empty.
struct DialogueGraph {
    autodiff::Tensor node_features;  // [node_count, F]
    std::vector<Edge> edges;         // sorted by (dst, src)
    std::size_t node_count = 0;
    std::vector<bool> is_user;  // per node speaker flag

    void validate() const {
        std::vector<bool> has_self_loop(node_count, false);
        for (const auto& e : edges) {
            if (e.src >= node_count || e.dst >= node_count)
                throw ContractError("graph: edge endpoint out of range");
            if (e.src == e.dst) has_self_loop[e.src] = true;
        }
        for (std::size_t i = 0; i < node_count; ++i)
            if (!has_self_loop[i])
                throw ContractError("graph: node " + std::to_string(i) + " has no self-loop");
    }

    // Edge list grouped by destination; the segment ids feeding
    // segment_softmax/segment_sum.
    std::vector<std::size_t> sources() const {
        std::vector<std::size_t> out(edges.size());
        for (std::size_t i = 0; i < edges.size(); ++i) out[i] = edges[i].src;
        return out;
    }
    std::vector<std::size_t> destinations() const {
        std::vector<std::size_t> out(edges.size());
        for (std::size_t i = 0; i < edges.size(); ++i) out[i] = edges[i].dst;
        return out;
    }
};

inline std::vector<Edge> temporal_edges(std::size_t node_count, bool bidirectional) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < node_count; ++i) edges.push_back({i, i});
    for (std::size_t i = 0; i + 1 < node_count; ++i) {
        edges.push_back({i, i + 1});
        if (bidirectional) edges.push_back({i + 1, i});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.dst != b.dst) return a.dst < b.dst;
        return a.src < b.src;
    });
    return edges;
}

// Encode each utterance with its speaker tag prepended, one node per turn.
inline DialogueGraph build_graph(const ContextWindow& ctx,
                                 retrieval::EmbeddingProvider& provider,
                                 bool bidirectional = false) {
    if (ctx.turns.empty()) throw ContractError("build_graph: empty context window");
    std::size_t n = ctx.turns.size();
    std::size_t dim = provider.dimension();

    DialogueGraph graph;
    graph.node_count = n;
    graph.node_features = autodiff::Tensor::zeros({n, dim});
    graph.is_user.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Turn& turn = ctx.turns[i];
        graph.is_user[i] = turn.speaker == Speaker::User;
        std::string tagged = std::string(speaker_tag(turn.speaker)) + " " + turn.text;
        std::vector<double> v;
        try {
            v = provider.embed(tagged);
        } catch (const Error& e) {
            throw TransportError("build_graph: embedding turn " + std::to_string(i) +
                                 " failed: " + e.what());
        }
        if (v.size() != dim)
            throw ContractError("build_graph: provider returned dimension " +
                                std::to_string(v.size()));
        for (std::size_t j = 0; j < dim; ++j) graph.node_features.at(i, j) = v[j];
    }
    graph.edges = temporal_edges(n, bidirectional);
    return graph;
}

}  // namespace gem::gat
