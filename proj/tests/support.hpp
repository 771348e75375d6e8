#pragma once

// Helpers shared by the unit tests: a terse graph builder and random inputs.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "topoevo/topoevo.hpp"

namespace testing_support {

using namespace topoevo;

/// Builds graphs by name: "src" and "sink" exist from the start, conv nodes
/// are added with conv(name, channels, fmap, pooled).
class Builder {
  public:
    Builder(InputShape in, int classes) : g_(in, classes) {
        add({next_id<NodeId>(), NodeKind::Source, in.channels, Pooling::None, in.height}, "src");
        add({next_id<NodeId>(), NodeKind::Sink, 0, Pooling::None, 1}, "sink");
    }

    Builder& conv(const std::string& name, int channels, int fmap, bool pooled = false) {
        add({next_id<NodeId>(), NodeKind::Conv, channels, pooled ? Pooling::Max2 : Pooling::None, fmap}, name);
        return *this;
    }

    /// kernel 0 marks a fully-connected edge; stride is derived in build().
    Builder& edge(const std::string& from, const std::string& to, int kernel = 3) {
        g_.add_edge({next_id<EdgeId>(), id(from), id(to), kernel, 1});
        return *this;
    }

    [[nodiscard]] NodeId id(const std::string& name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return g_.nodes()[i].id;
        throw std::out_of_range("no node " + name);
    }

    /// The graph with strides derived from the stored sizes (not validated).
    [[nodiscard]] TopologyGraph build() const {
        auto g = g_;
        for (const auto& e : g_.edges()) {
            try {
                g.edge_mut(e.id).stride = implied_stride(g.node(e.from), g.node(e.to));
            } catch (const ValidationError&) {
                // left at 1 so that validate() can report the malformed edge
            }
        }
        return g;
    }

  private:
    void add(const Node& n, const std::string& name) {
        g_.add_node(n);
        names_.push_back(name);
    }
    template <typename Id>
    Id next_id() {
        return Id{0xabc, ++counter_};
    }

    TopologyGraph g_;
    std::vector<std::string> names_;
    std::uint64_t counter_ = 0;
};

/// source -> a -> sink on a 1x1 single-channel input.
inline TopologyGraph path3() { return Builder({1, 1, 1}, 2).conv("a", 1, 1).edge("src", "a").edge("a", "sink", 0).build(); }

/// A graph after `steps` random reproductions from the minimal graph.
inline TopologyGraph random_graph(std::mt19937_64& rng, int steps, InputShape in = {8, 8, 2}, int classes = 3, int channels = 2) {
    return random_walk(new_minimal(in, classes, channels, rng()), steps, rng);
}

/// The same graph with every node and edge id redrawn.
inline TopologyGraph relabel(const TopologyGraph& g, std::mt19937_64& rng) {
    std::map<NodeId, NodeId> nodes;
    TopologyGraph out(g.input_shape(), g.num_classes());
    for (auto n : g.nodes()) {
        nodes[n.id] = NodeId::random(rng);
        n.id = nodes[n.id];
        out.add_node(n);
    }
    for (auto e : g.edges()) {
        e.id = EdgeId::random(rng);
        e.from = nodes.at(e.from);
        e.to = nodes.at(e.to);
        out.add_edge(e);
    }
    return out;
}

template <typename T>
Batch<T> random_batch(const TopologyGraph& g, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, g.num_classes() - 1);
    const auto& in = g.input_shape();
    Batch<T> b;
    b.images.resize(static_cast<std::size_t>(n) * in.height * in.width * in.channels);
    for (auto& v : b.images) v = static_cast<T>(pixel(rng));
    for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
    return b;
}

/// He-initialized weights with small random biases (zero biases would put
/// many pre-activations exactly on the ReLU kink).
template <typename T>
WeightBundle<T> random_weights(const TopologyGraph& g, std::mt19937_64& rng) {
    auto w = init_weights<T>(g, rng);
    std::normal_distribution<double> bias(0.0, 0.1);
    for (auto& [_, b] : w.biases)
        for (auto& v : b) v = static_cast<T>(bias(rng));
    return w;
}

} // namespace testing_support
