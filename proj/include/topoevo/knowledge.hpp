#pragma once

/// @file knowledge.hpp
/// Inheritable knowledge (trainable tensors passed from parent to offspring)
/// and learnable knowledge (discrete training hyperparameters learned from the
/// population with independent Laplace-smoothed categorical posteriors).

#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topoevo/mutation.hpp"
#include "topoevo/topology.hpp"

namespace topoevo {

// ---------------------------------------------------------------------------
// Weight bundles

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T{}) : shape(std::move(s)), data(element_count(shape), fill) {}

    static std::size_t element_count(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }
    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// All trainable variables of a network, keyed by stable graph identities.
///
/// Conv edges hold kernels of shape (k, k, C_from, C_to), flattened row-major.
/// Sink edges hold (F, classes) with F = C_from * S * S, S the source node's
/// output side, features ordered channel-major (c, y, x). Conv nodes hold a
/// bias per channel; source and sink hold none.
template <typename T>
struct WeightBundle {
    std::unordered_map<EdgeId, Tensor<T>> edges;
    std::unordered_map<NodeId, std::vector<T>> biases;

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : edges) n += t.size();
        for (const auto& [_, b] : biases) n += b.size();
        return n;
    }
    friend bool operator==(const WeightBundle&, const WeightBundle&) = default;

    template <typename U>
    [[nodiscard]] WeightBundle<U> cast() const {
        WeightBundle<U> out;
        for (const auto& [id, t] : edges) {
            auto& o = out.edges[id];
            o.shape = t.shape;
            o.data.assign(t.data.begin(), t.data.end());
        }
        for (const auto& [id, b] : biases) out.biases[id] = std::vector<U>(b.begin(), b.end());
        return out;
    }
};

inline std::vector<int> edge_shape(const TopologyGraph& g, const Edge& e) {
    const auto& from = g.node(e.from);
    if (g.node(e.to).kind == NodeKind::Sink) {
        const int s = from.kind == NodeKind::Source ? g.input_shape().height : from.output_size();
        return {from.channels * s * s, g.num_classes()};
    }
    return {e.kernel, e.kernel, from.channels, g.node(e.to).channels};
}

inline std::size_t fan_in(const std::vector<int>& shape) {
    return shape.size() == 2 ? static_cast<std::size_t>(shape[0])
                             : static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(shape[2]);
}

/// Throws ShapeError unless the bundle's keys and shapes exactly match `g`.
template <typename T>
void check_bundle(const TopologyGraph& g, const WeightBundle<T>& w) {
    std::size_t convs = 0;
    for (const auto& n : g.nodes()) {
        if (!n.is_conv()) continue;
        ++convs;
        auto it = w.biases.find(n.id);
        if (it == w.biases.end() || it->second.size() != static_cast<std::size_t>(n.channels))
            throw ShapeError("bias missing or mis-sized for node " + n.id.to_hex());
    }
    if (w.biases.size() != convs) throw ShapeError("bundle has biases for unknown nodes");
    for (const auto& e : g.edges()) {
        auto it = w.edges.find(e.id);
        if (it == w.edges.end() || it->second.shape != edge_shape(g, e) || it->second.size() != Tensor<T>::element_count(it->second.shape))
            throw ShapeError("kernel missing or mis-shaped for edge " + e.id.to_hex());
    }
    if (w.edges.size() != g.edges().size()) throw ShapeError("bundle has kernels for unknown edges");
}

namespace detail {

template <typename T, typename Rng>
T he_normal(std::size_t fan, Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan, 1))));
    return static_cast<T>(dist(rng));
}

template <typename T, typename Rng>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const auto fan = fan_in(t.shape);
    for (auto& v : t.data) v = he_normal<T>(fan, rng);
    return t;
}

} // namespace detail

/// Fresh weights: zero-mean normal kernels with variance 2/fan_in, zero biases.
/// Edges are visited in graph order, so the result depends only on `g` and `rng`.
template <typename T, typename Rng>
WeightBundle<T> init_weights(const TopologyGraph& g, Rng& rng) {
    WeightBundle<T> w;
    for (const auto& e : g.edges()) w.edges[e.id] = detail::random_tensor<T>(edge_shape(g, e), rng);
    for (const auto& n : g.nodes())
        if (n.is_conv()) w.biases[n.id] = std::vector<T>(static_cast<std::size_t>(n.channels), T{});
    return w;
}

enum class InheritMode {
    Random,      ///< new weights random
    Preserving,  ///< weights feeding pre-existing nodes start at zero
};

/// Builds the child's initial weights from the parent's.
///
/// Tensors of surviving ids are copied verbatim when shapes agree. When a node
/// doubled its channels the parent tensor is copied into the leading slice;
/// entries producing new channels are random, entries reading new channels are
/// random or, in Preserving mode, zero. Tensors of new edges are random, except
/// in Preserving mode where edges into pre-existing nodes start at zero.
/// Surviving ids whose shape changed for any other reason are re-initialized.
template <typename T, typename Rng>
WeightBundle<T> inherit_weights(const WeightBundle<T>& parent, const TopologyGraph& parent_g, const TopologyGraph& child_g,
                                const MutationRecord& record, Rng& rng, InheritMode mode = InheritMode::Random) {
    for (const auto& id : record.created_nodes)
        if (!child_g.find_node(id) || parent_g.find_node(id)) throw Error("record/graph mismatch: created node " + id.to_hex());
    for (const auto& id : record.created_edges)
        if (!child_g.find_edge(id) || parent_g.find_edge(id)) throw Error("record/graph mismatch: created edge " + id.to_hex());
    for (const auto& id : record.removed_nodes)
        if (child_g.find_node(id) || !parent_g.find_node(id)) throw Error("record/graph mismatch: removed node " + id.to_hex());
    for (const auto& id : record.removed_edges)
        if (child_g.find_edge(id) || !parent_g.find_edge(id)) throw Error("record/graph mismatch: removed edge " + id.to_hex());
    const std::unordered_set<EdgeId> created_edges(record.created_edges.begin(), record.created_edges.end());
    for (const auto& e : child_g.edges())
        if (!created_edges.count(e.id) && !parent_g.find_edge(e.id)) throw Error("record/graph mismatch: unexplained edge " + e.id.to_hex());

    const bool preserving = mode == InheritMode::Preserving;
    WeightBundle<T> child;
    for (const auto& e : child_g.edges()) {
        auto shape = edge_shape(child_g, e);
        auto it = parent.edges.find(e.id);
        if (it == parent.edges.end()) {
            const bool into_old_node = parent_g.find_node(e.to) != nullptr;
            child.edges[e.id] = preserving && into_old_node ? Tensor<T>(shape) : detail::random_tensor<T>(shape, rng);
            continue;
        }
        const auto& old = it->second;
        if (old.shape == shape) {
            child.edges[e.id] = old;
            continue;
        }
        const bool grew = record.kind == MutationKind::DoubleChannels && old.shape.size() == shape.size() &&
                          std::equal(old.shape.begin(), old.shape.end(), shape.begin(), [](int a, int b) { return a <= b; });
        if (!grew) {
            child.edges[e.id] = detail::random_tensor<T>(shape, rng);
            continue;
        }
        Tensor<T> t(shape);
        const auto fan = fan_in(shape);
        if (shape.size() == 2) {
            // (F, classes): new features are the trailing rows.
            const auto cols = static_cast<std::size_t>(shape[1]);
            const auto old_rows = static_cast<std::size_t>(old.shape[0]);
            for (std::size_t f = 0; f < static_cast<std::size_t>(shape[0]); ++f)
                for (std::size_t c = 0; c < cols; ++c)
                    t.data[f * cols + c] = f < old_rows ? old.data[f * cols + c] : preserving ? T{} : detail::he_normal<T>(fan, rng);
        } else {
            const auto k = static_cast<std::size_t>(shape[0]);
            const auto cf = static_cast<std::size_t>(shape[2]), ct = static_cast<std::size_t>(shape[3]);
            const auto ocf = static_cast<std::size_t>(old.shape[2]), oct = static_cast<std::size_t>(old.shape[3]);
            for (std::size_t p = 0; p < k * k; ++p)
                for (std::size_t ci = 0; ci < cf; ++ci)
                    for (std::size_t co = 0; co < ct; ++co) {
                        T& dst = t.data[(p * cf + ci) * ct + co];
                        if (ci < ocf && co < oct) dst = old.data[(p * ocf + ci) * oct + co];
                        else if (ci >= ocf && preserving) dst = T{};
                        else dst = detail::he_normal<T>(fan, rng);
                    }
        }
        child.edges[e.id] = std::move(t);
    }
    for (const auto& n : child_g.nodes()) {
        if (!n.is_conv()) continue;
        std::vector<T> b(static_cast<std::size_t>(n.channels), T{});
        if (auto it = parent.biases.find(n.id); it != parent.biases.end())
            std::copy_n(it->second.begin(), std::min(it->second.size(), b.size()), b.begin());
        child.biases[n.id] = std::move(b);
    }
    return child;
}

// ---------------------------------------------------------------------------
// Learnable hyperparameters

struct HyperParam {
    std::string name;
    std::vector<nlohmann::json> values;  // scalar JSON values
};

using HyperparamSpace = std::vector<HyperParam>;

/// Default grids for learning rate, batch size, optimizer and dropout.
inline HyperparamSpace default_hyperparam_space() {
    return {
        {"learning_rate", {0.0005, 0.001, 0.005, 0.01}},
        {"batch_size", {32, 64, 128}},
        {"optimizer", {"sgd_momentum", "adam", "rmsprop"}},
        {"dropout", {0.0, 0.25, 0.5}},
    };
}

/// One value index per parameter, aligned with the space.
struct HyperparamChoice {
    std::vector<std::size_t> index;
    friend bool operator==(const HyperparamChoice&, const HyperparamChoice&) = default;
};

/// Per-parameter categorical distributions, aligned with the space.
struct HyperparamPosterior {
    std::vector<std::vector<double>> probs;
    friend bool operator==(const HyperparamPosterior&, const HyperparamPosterior&) = default;
};

inline constexpr double kPosteriorSmoothing = 1.0;

inline HyperparamPosterior init_posterior(const HyperparamSpace& space) {
    HyperparamPosterior p;
    for (const auto& param : space) {
        if (param.values.empty()) throw Error("hyperparameter '" + param.name + "' has no values");
        const auto n = param.values.size();
        p.probs.emplace_back(n, 1.0 / static_cast<double>(n));
    }
    return p;
}

/// Recomputes each parameter's distribution independently from the value
/// counts among `observed` with additive smoothing `alpha`.
inline HyperparamPosterior update_posterior(const HyperparamSpace& space, std::span<const HyperparamChoice> observed,
                                            double alpha = kPosteriorSmoothing) {
    auto post = init_posterior(space);
    for (std::size_t p = 0; p < space.size(); ++p) {
        std::vector<double> counts(space[p].values.size(), alpha);
        for (const auto& c : observed) counts.at(c.index.at(p)) += 1.0;
        const double total = static_cast<double>(observed.size()) + alpha * static_cast<double>(counts.size());
        for (std::size_t v = 0; v < counts.size(); ++v) post.probs[p][v] = counts[v] / total;
    }
    return post;
}

template <typename Rng>
HyperparamChoice sample_hyperparams(const HyperparamPosterior& posterior, Rng& rng) {
    HyperparamChoice c;
    for (const auto& probs : posterior.probs) {
        std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
        c.index.push_back(dist(rng));
    }
    return c;
}

inline const nlohmann::json& choice_value(const HyperparamSpace& space, const HyperparamChoice& c, std::string_view name) {
    for (std::size_t p = 0; p < space.size(); ++p)
        if (space[p].name == name) return space[p].values.at(c.index.at(p));
    throw Error("hyperparameter not in space: " + std::string(name));
}

inline nlohmann::ordered_json choice_to_json(const HyperparamSpace& space, const HyperparamChoice& c) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t p = 0; p < space.size(); ++p) j[space[p].name] = space[p].values.at(c.index.at(p));
    return j;
}

template <typename Json>
HyperparamChoice choice_from_json(const HyperparamSpace& space, const Json& j) {
    HyperparamChoice c;
    for (const auto& param : space) {
        const auto& v = j.at(param.name);
        auto it = std::find_if(param.values.begin(), param.values.end(), [&](const nlohmann::json& x) { return x == nlohmann::json(v); });
        if (it == param.values.end()) throw ParseError("value not in grid for " + param.name);
        c.index.push_back(static_cast<std::size_t>(it - param.values.begin()));
    }
    return c;
}

template <typename Json>
HyperparamSpace space_from_json(const Json& j) {
    HyperparamSpace space;
    for (auto it = j.begin(); it != j.end(); ++it) {
        HyperParam p{it.key(), {}};
        for (const auto& v : it.value()) p.values.push_back(nlohmann::json(v));
        space.push_back(std::move(p));
    }
    return space;
}

} // namespace topoevo
