#pragma once

/// @file mutation.hpp
/// The five topology mutations and retry-until-valid asexual reproduction.
///
/// Every operator takes its parent by const reference and returns a new graph
/// together with a record of what it touched. An operator that cannot produce a
/// valid graph throws MutationRejected; it never returns an invalid graph.

#include <array>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "topoevo/topology.hpp"

namespace topoevo {

enum class MutationKind { DoubleChannels, AddNode, AddEdge, PruneEdge, InsertNode };

inline constexpr std::array<MutationKind, 5> kAllMutations{MutationKind::DoubleChannels, MutationKind::AddNode,
                                                           MutationKind::AddEdge, MutationKind::PruneEdge,
                                                           MutationKind::InsertNode};
inline constexpr int kDefaultRetryCap = 25;

inline std::string_view to_string(MutationKind k) {
    switch (k) {
    case MutationKind::DoubleChannels: return "double_channels";
    case MutationKind::AddNode: return "add_node";
    case MutationKind::AddEdge: return "add_edge";
    case MutationKind::PruneEdge: return "prune_edge";
    case MutationKind::InsertNode: return "insert_node";
    }
    return "?";
}

inline MutationKind mutation_kind_from_string(std::string_view s) {
    for (auto k : kAllMutations)
        if (to_string(k) == s) return k;
    throw ParseError("unknown mutation kind: " + std::string(s));
}

struct MutationRecord {
    MutationKind kind = MutationKind::DoubleChannels;
    std::vector<NodeId> target_nodes;
    std::vector<EdgeId> target_edges;
    std::vector<NodeId> created_nodes;
    std::vector<EdgeId> created_edges;
    std::vector<NodeId> removed_nodes;
    std::vector<EdgeId> removed_edges;
    int attempts = 1;
    friend bool operator==(const MutationRecord&, const MutationRecord&) = default;
};

struct Mutation {
    TopologyGraph graph;
    MutationRecord record;
};

namespace detail {

template <typename Rng>
std::size_t pick_index(std::size_t n, Rng& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <typename Rng>
NodeId fresh_node_id(const TopologyGraph& g, Rng& rng) {
    NodeId id;
    do id = NodeId::random(rng);
    while (g.find_node(id));
    return id;
}

template <typename Rng>
EdgeId fresh_edge_id(const TopologyGraph& g, Rng& rng) {
    EdgeId id;
    do id = EdgeId::random(rng);
    while (g.find_edge(id));
    return id;
}

/// Shrinks stored sizes so every node's input fits its smallest predecessor output.
inline void reflow_geometry(TopologyGraph& g) {
    for (const auto& id : topological_order(g)) {
        const auto& n = g.node(id);
        if (!n.is_conv()) continue;
        int smallest = n.fmap;
        for (const auto* e : g.in_edges(id)) smallest = std::min(smallest, g.node(e->from).output_size());
        if (smallest < n.fmap) g.node_mut(id).fmap = smallest;
    }
}

inline void finish(TopologyGraph& g) {
    rederive_strides(g);
    if (auto r = validate(g); !r.valid) throw MutationRejected("mutation produced invalid graph: " + r.summary());
}

} // namespace detail

/// Ordered pairs (earlier, later) in the fixed topological order that may be
/// joined by a new edge: not already connected, not leaving the sink, not
/// entering the source, and no upsampling into a conv node.
inline std::vector<std::pair<NodeId, NodeId>> legal_edge_pairs(const TopologyGraph& g) {
    const auto order = topological_order(g);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& u = g.node(order[i]);
        if (u.kind == NodeKind::Sink) continue;
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const auto& v = g.node(order[j]);
            if (v.kind == NodeKind::Source || g.edge_between(u.id, v.id)) continue;
            if (v.kind != NodeKind::Sink && u.output_size() < v.fmap) continue;
            pairs.emplace_back(u.id, v.id);
        }
    }
    return pairs;
}

/// Pairs (from, to) that a new node may be spliced between; existing edges do not matter.
inline std::vector<std::pair<NodeId, NodeId>> legal_node_pairs(const TopologyGraph& g) {
    const auto order = topological_order(g);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& u = g.node(order[i]);
        if (u.kind == NodeKind::Sink) continue;
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const auto& v = g.node(order[j]);
            if (v.kind == NodeKind::Source) continue;
            if (v.kind != NodeKind::Sink && u.output_size() < v.fmap) continue;
            pairs.emplace_back(u.id, v.id);
        }
    }
    return pairs;
}

template <typename Rng>
Mutation double_channels(const TopologyGraph& g, const NodeId& node, Rng& /*rng*/) {
    const auto& n = g.node(node);
    if (!n.is_conv()) throw MutationRejected("double_channels needs a conv node");
    Mutation m{g, {}};
    m.graph.node_mut(node).channels = 2 * n.channels;
    m.record.kind = MutationKind::DoubleChannels;
    m.record.target_nodes = {node};
    return m;
}

template <typename Rng>
Mutation add_node(const TopologyGraph& g, Rng& rng) {
    const auto pairs = legal_node_pairs(g);
    if (pairs.empty()) throw MutationRejected("add_node: no legal pair");
    const auto [from, to] = pairs[detail::pick_index(pairs.size(), rng)];
    const auto& u = g.node(from);
    const auto& w = g.node(to);

    Mutation m{g, {}};
    Node fresh{detail::fresh_node_id(g, rng), NodeKind::Conv, u.channels, Pooling::None, u.output_size()};
    m.graph.add_node(fresh);
    const Edge in{detail::fresh_edge_id(m.graph, rng), from, fresh.id, kDefaultKernel, 1};
    m.graph.add_edge(in);
    const Edge out{detail::fresh_edge_id(m.graph, rng), fresh.id, to,
                   w.kind == NodeKind::Sink ? kFullyConnected : kDefaultKernel, 1};
    m.graph.add_edge(out);
    detail::finish(m.graph);

    m.record.kind = MutationKind::AddNode;
    m.record.target_nodes = {from, to};
    m.record.created_nodes = {fresh.id};
    m.record.created_edges = {in.id, out.id};
    return m;
}

template <typename Rng>
Mutation add_edge(const TopologyGraph& g, Rng& rng) {
    const auto pairs = legal_edge_pairs(g);
    if (pairs.empty()) throw MutationRejected("add_edge: graph is complete");
    const auto [from, to] = pairs[detail::pick_index(pairs.size(), rng)];
    const bool to_sink = g.node(to).kind == NodeKind::Sink;
    const int kernel = to_sink ? kFullyConnected : kKernelChoices[detail::pick_index(kKernelChoices.size(), rng)];

    Mutation m{g, {}};
    const Edge e{detail::fresh_edge_id(g, rng), from, to, kernel, 1};
    m.graph.add_edge(e);
    detail::finish(m.graph);

    m.record.kind = MutationKind::AddEdge;
    m.record.target_nodes = {from, to};
    m.record.created_edges = {e.id};
    return m;
}

struct SweepResult {
    TopologyGraph graph;
    std::vector<NodeId> removed_nodes;
    std::vector<EdgeId> removed_edges;
};

/// Removes exactly the nodes and edges that lie on no source->sink path.
/// Source and sink are always kept.
inline SweepResult orphan_sweep(const TopologyGraph& g) {
    SweepResult r{g, {}, {}};
    detail::Adjacency adj(g);
    const auto src = adj.index.find(g.source());
    const auto snk = adj.index.find(g.sink());
    if (src == adj.index.end() || snk == adj.index.end()) return r;
    const auto fwd = adj.reach(src->second, true);
    const auto bwd = adj.reach(snk->second, false);
    std::unordered_set<NodeId> keep;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const auto& n = g.nodes()[i];
        if (n.kind != NodeKind::Conv || (fwd[i] && bwd[i])) keep.insert(n.id);
        else r.removed_nodes.push_back(n.id);
    }
    for (const auto& e : g.edges()) {
        const bool on_path = keep.count(e.from) && keep.count(e.to) && fwd[adj.index.at(e.from)] && bwd[adj.index.at(e.to)];
        if (!on_path) r.removed_edges.push_back(e.id);
    }
    for (const auto& id : r.removed_edges) r.graph.remove_edge(id);
    r.graph.retain_nodes([&](const NodeId& id) { return keep.count(id) > 0; });
    return r;
}

template <typename Rng>
Mutation prune_edge(const TopologyGraph& g, Rng& rng) {
    if (g.edges().empty()) throw MutationRejected("prune_edge: no edges");
    const auto& victim = g.edges()[detail::pick_index(g.edges().size(), rng)];
    TopologyGraph cut = g;
    cut.remove_edge(victim.id);
    auto swept = orphan_sweep(cut);

    detail::Adjacency adj(swept.graph);
    if (!adj.reach(adj.index.at(swept.graph.source()), true)[adj.index.at(swept.graph.sink())])
        throw MutationRejected("prune_edge: source disconnected from sink");
    if (swept.graph.conv_count() == 0) throw MutationRejected("prune_edge: no convolutional node left");

    Mutation m{std::move(swept.graph), {}};
    detail::finish(m.graph);
    m.record.kind = MutationKind::PruneEdge;
    m.record.target_edges = {victim.id};
    m.record.removed_nodes = std::move(swept.removed_nodes);
    m.record.removed_edges = {victim.id};
    for (const auto& id : swept.removed_edges) m.record.removed_edges.push_back(id);
    return m;
}

/// Splits an edge u->v into u->new->v. The new node copies u's channel count;
/// splitting an edge into the sink turns on max-pooling at u.
template <typename Rng>
Mutation insert_node(const TopologyGraph& g, Rng& rng) {
    if (g.edges().empty()) throw MutationRejected("insert_node: no edges");
    const Edge split = g.edges()[detail::pick_index(g.edges().size(), rng)];
    const auto& u = g.node(split.from);
    const auto& v = g.node(split.to);

    Mutation m{g, {}};
    m.record.kind = MutationKind::InsertNode;
    m.record.target_edges = {split.id};

    bool pooled = false;
    if (v.kind == NodeKind::Sink && u.is_conv() && u.pooling == Pooling::None) {
        if (u.fmap < 2) throw MutationRejected("insert_node: feature map too small to pool");
        m.graph.node_mut(u.id).pooling = Pooling::Max2;
        m.record.target_nodes = {u.id};
        pooled = true;
    }
    const int size = m.graph.node(u.id).output_size();
    Node fresh{detail::fresh_node_id(g, rng), NodeKind::Conv, u.channels, Pooling::None, size};
    m.graph.remove_edge(split.id);
    m.graph.add_node(fresh);
    const Edge first{detail::fresh_edge_id(g, rng), u.id, fresh.id, split.fully_connected() ? kDefaultKernel : split.kernel, 1};
    m.graph.add_edge(first);
    const Edge second{detail::fresh_edge_id(m.graph, rng), fresh.id, v.id, split.kernel, 1};
    m.graph.add_edge(second);
    if (pooled) detail::reflow_geometry(m.graph);
    detail::finish(m.graph);

    m.record.created_nodes = {fresh.id};
    m.record.created_edges = {first.id, second.id};
    m.record.removed_edges = {split.id};
    return m;
}

/// Applies one mutation of the given kind, choosing any target at random.
template <typename Rng>
Mutation apply_mutation(MutationKind kind, const TopologyGraph& g, Rng& rng) {
    switch (kind) {
    case MutationKind::DoubleChannels: {
        std::vector<NodeId> convs;
        for (const auto& n : g.nodes())
            if (n.is_conv()) convs.push_back(n.id);
        if (convs.empty()) throw MutationRejected("double_channels: no conv node");
        return double_channels(g, convs[detail::pick_index(convs.size(), rng)], rng);
    }
    case MutationKind::AddNode: return add_node(g, rng);
    case MutationKind::AddEdge: return add_edge(g, rng);
    case MutationKind::PruneEdge: return prune_edge(g, rng);
    case MutationKind::InsertNode: return insert_node(g, rng);
    }
    throw MutationRejected("unknown mutation kind");
}

/// Draws a mutation kind uniformly, retrying with a fresh draw on rejection.
/// Throws Error once `retry_cap` attempts have all been rejected.
template <typename Rng>
Mutation reproduce(const TopologyGraph& g, Rng& rng, int retry_cap = kDefaultRetryCap) {
    for (int attempt = 1; attempt <= retry_cap; ++attempt) {
        const auto kind = kAllMutations[detail::pick_index(kAllMutations.size(), rng)];
        try {
            auto m = apply_mutation(kind, g, rng);
            m.record.attempts = attempt;
            return m;
        } catch (const MutationRejected&) {
        }
    }
    throw Error("reproduce: retry cap of " + std::to_string(retry_cap) + " exceeded");
}

/// Applies `steps` reproductions in sequence, keeping only graphs accepted by `keep`.
/// Rejected offspring are skipped; the walk continues from the last kept graph.
template <typename Rng, typename Keep>
TopologyGraph random_walk(TopologyGraph g, int steps, Rng& rng, Keep keep) {
    for (int i = 0; i < steps; ++i) {
        auto m = reproduce(g, rng);
        if (keep(m.graph)) g = std::move(m.graph);
    }
    return g;
}

template <typename Rng>
TopologyGraph random_walk(TopologyGraph g, int steps, Rng& rng) {
    return random_walk(std::move(g), steps, rng, [](const TopologyGraph&) { return true; });
}

} // namespace topoevo
