#pragma once

/// @file analysis.hpp
/// Graph properties of evolved topologies: size, density, algebraic
/// connectivity, channel statistics and source-to-sink path lengths.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "topoevo/topology.hpp"

namespace topoevo {

/// Directed density |E| / (n (n - 1)) over all nodes, source and sink included.
inline double density(const TopologyGraph& g) {
    const auto n = static_cast<double>(g.nodes().size());
    if (n < 2) return 0.0;
    return static_cast<double>(g.edges().size()) / (n * (n - 1.0));
}

/// Eigenvalues of a dense symmetric matrix (row-major, n x n) by cyclic Jacobi
/// rotations, ascending. Iterates until the off-diagonal Frobenius norm is <= tol.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n, double tol = 1e-10) {
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += at(i, j) * at(i, j);
        return std::sqrt(s);
    };
    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Laplacian D - A of the undirected skeleton, row-major, nodes in creation order.
inline std::vector<double> skeleton_laplacian(const TopologyGraph& g) {
    detail::Adjacency adj(g);
    const auto n = g.nodes().size();
    std::vector<double> l(n * n, 0.0);
    for (std::size_t u = 0; u < n; ++u)
        for (auto v : adj.succ[u]) {
            if (l[u * n + v] != 0.0) continue;
            l[u * n + v] = l[v * n + u] = -1.0;
            l[u * n + u] += 1.0;
            l[v * n + v] += 1.0;
        }
    return l;
}

/// Second-smallest Laplacian eigenvalue (Fiedler value) of the undirected skeleton.
inline double algebraic_connectivity(const TopologyGraph& g) {
    const auto n = g.nodes().size();
    if (n < 2) return 0.0;
    const auto ev = symmetric_eigenvalues(skeleton_laplacian(g), n);
    return std::max(0.0, ev[1]);
}

/// Maximum number of edges on a directed source->sink path (network depth).
inline int longest_distance(const TopologyGraph& g) {
    detail::Adjacency adj(g);
    const auto order = detail::kahn_order(adj, std::less<std::size_t>{});
    if (!order) throw ValidationError("longest_distance requires an acyclic graph");
    std::vector<int> dist(g.nodes().size(), std::numeric_limits<int>::min());
    dist[adj.index.at(g.source())] = 0;
    for (auto u : *order) {
        if (dist[u] == std::numeric_limits<int>::min()) continue;
        for (auto v : adj.succ[u]) dist[v] = std::max(dist[v], dist[u] + 1);
    }
    const int d = dist[adj.index.at(g.sink())];
    if (d < 0) throw ValidationError("sink unreachable from source");
    return d;
}

/// Minimum number of edges on a directed source->sink path.
inline int shortest_distance(const TopologyGraph& g) {
    detail::Adjacency adj(g);
    std::vector<int> dist(g.nodes().size(), -1);
    std::queue<std::size_t> q;
    const auto s = adj.index.at(g.source());
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : adj.succ[u])
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
    }
    const int d = dist[adj.index.at(g.sink())];
    if (d < 0) throw ValidationError("sink unreachable from source");
    return d;
}

inline double mean_channels(const TopologyGraph& g) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& node : g.nodes())
        if (node.is_conv()) {
            sum += node.channels;
            ++n;
        }
    if (n == 0) throw Error("mean_channels: graph has no convolutional node");
    return sum / static_cast<double>(n);
}

struct GraphStats {
    double nodes = 0;
    double edges = 0;
    double density = 0;
    double connectivity = 0;
    double channels = 0;
    double longest_dist = 0;
    double shortest_dist = 0;
    double generations = 0;
};

inline GraphStats graph_stats(const TopologyGraph& g, double generation = 0) {
    return {static_cast<double>(g.nodes().size()),
            static_cast<double>(g.edges().size()),
            density(g),
            algebraic_connectivity(g),
            mean_channels(g),
            static_cast<double>(longest_distance(g)),
            static_cast<double>(shortest_distance(g)),
            generation};
}

/// A graph with the generation of the individual carrying it.
struct StatsInput {
    const TopologyGraph* graph = nullptr;
    int generation = 0;
};

/// Per-metric arithmetic means.
inline GraphStats population_stats(std::span<const StatsInput> items) {
    if (items.empty()) throw Error("population_stats: empty input");
    GraphStats sum;
    for (const auto& it : items) {
        const auto s = graph_stats(*it.graph, it.generation);
        sum.nodes += s.nodes;
        sum.edges += s.edges;
        sum.density += s.density;
        sum.connectivity += s.connectivity;
        sum.channels += s.channels;
        sum.longest_dist += s.longest_dist;
        sum.shortest_dist += s.shortest_dist;
        sum.generations += s.generations;
    }
    const auto n = static_cast<double>(items.size());
    return {sum.nodes / n, sum.edges / n, sum.density / n, sum.connectivity / n,
            sum.channels / n, sum.longest_dist / n, sum.shortest_dist / n, sum.generations / n};
}

/// Row labels in report order.
inline constexpr std::array<const char*, 8> kStatsRows{"nodes", "edges", "density", "connectivity", "channels",
                                                       "longest dist.", "shortest dist.", "generations"};

inline std::array<double, 8> stats_values(const GraphStats& s) {
    return {s.nodes, s.edges, s.density, s.connectivity, s.channels, s.longest_dist, s.shortest_dist, s.generations};
}

} // namespace topoevo
