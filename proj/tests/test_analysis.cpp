#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace topoevo;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix laplacian_of(const TopologyGraph& g) {
    const auto flat = skeleton_laplacian(g);
    const auto n = g.nodes().size();
    Matrix m(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = flat[i * n + j];
    return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    const auto n = a.size();
    Matrix c(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

/// Characteristic polynomial coefficients c[0..n] of det(xI - A), leading 1,
/// by the Faddeev-LeVerrier recursion.
std::vector<double> char_poly(const Matrix& a) {
    const auto n = a.size();
    std::vector<double> c(n + 1, 0.0);
    c[0] = 1.0;
    Matrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t i = 0; i < n; ++i) m[i][i] += c[k - 1];
        m = multiply(a, m);
        double tr = 0;
        for (std::size_t i = 0; i < n; ++i) tr += m[i][i];
        c[k] = -tr / static_cast<double>(k);
    }
    return c;
}

/// Second-smallest eigenvalue by unshifted QR iteration (Gram-Schmidt).
double qr_second_smallest(Matrix a) {
    const auto n = a.size();
    for (int it = 0; it < 3000; ++it) {
        Matrix q(n, std::vector<double>(n, 0.0)), r(n, std::vector<double>(n, 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> v(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = a[i][j];
            for (std::size_t p = 0; p < j; ++p) {
                double d = 0;
                for (std::size_t i = 0; i < n; ++i) d += q[i][p] * a[i][j];
                r[p][j] = d;
                for (std::size_t i = 0; i < n; ++i) v[i] -= d * q[i][p];
            }
            double norm = 0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            r[j][j] = norm;
            for (std::size_t i = 0; i < n; ++i) q[i][j] = norm > 1e-300 ? v[i] / norm : 0.0;
        }
        a = multiply(r, q);
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = std::max(0.0, a[i][i]);
    std::sort(d.begin(), d.end());
    return d[1];
}

/// Shortest and longest source->sink path lengths by exhaustive path enumeration.
std::pair<int, int> enumerate_paths(const TopologyGraph& g) {
    int lo = 1 << 30, hi = -1;
    std::vector<std::pair<NodeId, int>> stack{{g.source(), 0}};
    while (!stack.empty()) {
        const auto [u, len] = stack.back();
        stack.pop_back();
        if (u == g.sink()) {
            lo = std::min(lo, len);
            hi = std::max(hi, len);
            continue;
        }
        for (const auto* e : g.out_edges(u)) stack.emplace_back(e->to, len + 1);
    }
    return {lo, hi};
}

TopologyGraph small_graph(std::mt19937_64& rng, std::size_t max_nodes, int steps) {
    return random_walk(new_minimal({8, 8, 1}, 2, 2, rng()), steps, rng, [&](const TopologyGraph& h) { return h.nodes().size() <= max_nodes; });
}

} // namespace

TEST(Density, KnownGraphs) {
    const auto g = new_minimal({8, 8, 1}, 2);
    EXPECT_NEAR(density(g), 1.0 / 3.0, 1e-15);
    std::mt19937_64 rng(1);
    EXPECT_NEAR(density(add_edge(g, rng).graph), 0.5, 1e-15);
}

TEST(Connectivity, PathAndTriangle) {
    const auto p3 = new_minimal({8, 8, 1}, 2);
    EXPECT_NEAR(algebraic_connectivity(p3), 1.0, 1e-9);
    std::mt19937_64 rng(2);
    const auto k3 = add_edge(p3, rng).graph;
    EXPECT_NEAR(algebraic_connectivity(k3), 3.0, 1e-9);
}

TEST(Connectivity, SpectrumMatchesCharacteristicPolynomial) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 40; ++i) {
        const auto g = small_graph(rng, 5, 6);
        const auto n = g.nodes().size();
        const auto ev = symmetric_eigenvalues(skeleton_laplacian(g), n);
        // Expand prod (x - ev_i) and compare against the recursion's coefficients.
        std::vector<double> prod{1.0};
        for (double l : ev) {
            std::vector<double> next(prod.size() + 1, 0.0);
            for (std::size_t k = 0; k < prod.size(); ++k) {
                next[k] += prod[k];
                next[k + 1] -= l * prod[k];
            }
            prod = next;
        }
        const auto cp = char_poly(laplacian_of(g));
        for (std::size_t k = 0; k <= n; ++k) EXPECT_NEAR(prod[k], cp[k], 1e-8 * (1 + std::abs(cp[k])));
        EXPECT_NEAR(algebraic_connectivity(g), qr_second_smallest(laplacian_of(g)), 1e-8);
    }
}

TEST(Distances, AgreeWithPathEnumeration) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        const auto g = small_graph(rng, 8, 12);
        const auto [lo, hi] = enumerate_paths(g);
        EXPECT_EQ(shortest_distance(g), lo);
        EXPECT_EQ(longest_distance(g), hi);
    }
}

TEST(Stats, InvariantUnderRelabeling) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto g = testing_support::random_graph(rng, 12);
        const auto a = stats_values(graph_stats(g, 3));
        const auto b = stats_values(graph_stats(testing_support::relabel(g, rng), 3));
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9) << kStatsRows[k];
    }
}

TEST(Stats, MeanChannelsAndPopulationMeans) {
    const auto g = testing_support::Builder({8, 8, 1}, 2).conv("a", 2, 8).conv("b", 6, 8).edge("src", "a").edge("a", "b").edge("b", "sink", 0).build();
    EXPECT_DOUBLE_EQ(mean_channels(g), 4.0);
    const auto m = new_minimal({8, 8, 1}, 2, 8);
    const std::vector<StatsInput> items{{&g, 2}, {&m, 5}};
    const auto s = population_stats(items);
    EXPECT_DOUBLE_EQ(s.nodes, 3.5);
    EXPECT_DOUBLE_EQ(s.edges, 2.5);
    EXPECT_DOUBLE_EQ(s.channels, 6.0);
    EXPECT_DOUBLE_EQ(s.generations, 3.5);
    EXPECT_DOUBLE_EQ(s.longest_dist, 2.5);
    EXPECT_THROW(population_stats({}), Error);
}
