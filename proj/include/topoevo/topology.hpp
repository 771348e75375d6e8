#pragma once

/// @file topology.hpp
/// The DAG genome of a deep CNN: nodes are convolutional layers, edges are
/// weighted propagation paths. A single source carries the input image and a
/// single sink produces class logits; sink in-edges are fully connected.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topoevo/errors.hpp"
#include "topoevo/ids.hpp"
#include "topoevo/sha256.hpp"

namespace topoevo {

enum class NodeKind { Source, Conv, Sink };
enum class Pooling { None, Max2 };

/// Kernel sentinel marking a fully-connected edge into the sink.
inline constexpr int kFullyConnected = 0;
inline constexpr int kDefaultKernel = 3;
inline constexpr int kDefaultInitialChannels = 4;
inline constexpr std::array<int, 5> kKernelChoices{1, 3, 5, 7, 9};

struct InputShape {
    int height = 0;
    int width = 0;
    int channels = 0;
    friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct Node {
    NodeId id;
    NodeKind kind = NodeKind::Conv;
    int channels = 0;  // 0 for the sink
    Pooling pooling = Pooling::None;
    int fmap = 0;      // side length of the node's input feature map

    [[nodiscard]] int output_size() const noexcept { return pooling == Pooling::Max2 ? fmap / 2 : fmap; }
    [[nodiscard]] bool is_conv() const noexcept { return kind == NodeKind::Conv; }
    friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
    EdgeId id;
    NodeId from;
    NodeId to;
    int kernel = kDefaultKernel;
    int stride = 1;  // always 1 on fully-connected edges

    [[nodiscard]] bool fully_connected() const noexcept { return kernel == kFullyConnected; }
    friend bool operator==(const Edge&, const Edge&) = default;
};

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

/// Value type holding the graph. Node and edge vectors keep creation order,
/// which is the final tie-breaker for every traversal.
class TopologyGraph {
  public:
    TopologyGraph() = default;
    TopologyGraph(InputShape input, int num_classes) : input_(input), classes_(num_classes) {}

    [[nodiscard]] const InputShape& input_shape() const noexcept { return input_; }
    [[nodiscard]] int num_classes() const noexcept { return classes_; }
    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<Edge>& edges() const noexcept { return edges_; }

    [[nodiscard]] std::size_t conv_count() const {
        return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_conv(); }));
    }

    [[nodiscard]] const Node* find_node(const NodeId& id) const {
        for (const auto& n : nodes_)
            if (n.id == id) return &n;
        return nullptr;
    }
    [[nodiscard]] const Node& node(const NodeId& id) const {
        if (const auto* n = find_node(id)) return *n;
        throw ValidationError("unknown node " + id.to_hex());
    }
    Node& node_mut(const NodeId& id) { return const_cast<Node&>(std::as_const(*this).node(id)); }

    [[nodiscard]] const Edge* find_edge(const EdgeId& id) const {
        for (const auto& e : edges_)
            if (e.id == id) return &e;
        return nullptr;
    }
    [[nodiscard]] const Edge& edge(const EdgeId& id) const {
        if (const auto* e = find_edge(id)) return *e;
        throw ValidationError("unknown edge " + id.to_hex());
    }
    Edge& edge_mut(const EdgeId& id) { return const_cast<Edge&>(std::as_const(*this).edge(id)); }

    [[nodiscard]] const Edge* edge_between(const NodeId& from, const NodeId& to) const {
        for (const auto& e : edges_)
            if (e.from == from && e.to == to) return &e;
        return nullptr;
    }

    [[nodiscard]] std::vector<const Edge*> in_edges(const NodeId& id) const {
        std::vector<const Edge*> out;
        for (const auto& e : edges_)
            if (e.to == id) out.push_back(&e);
        return out;
    }
    [[nodiscard]] std::vector<const Edge*> out_edges(const NodeId& id) const {
        std::vector<const Edge*> out;
        for (const auto& e : edges_)
            if (e.from == id) out.push_back(&e);
        return out;
    }

    /// Id of the first node of `kind`; nil if absent.
    [[nodiscard]] NodeId first_of(NodeKind kind) const {
        for (const auto& n : nodes_)
            if (n.kind == kind) return n.id;
        return {};
    }
    [[nodiscard]] NodeId source() const { return first_of(NodeKind::Source); }
    [[nodiscard]] NodeId sink() const { return first_of(NodeKind::Sink); }

    // Editing primitives used by construction and mutation code on private copies.
    void add_node(const Node& n) { nodes_.push_back(n); }
    void add_edge(const Edge& e) { edges_.push_back(e); }
    void remove_edge(const EdgeId& id) {
        std::erase_if(edges_, [&](const Edge& e) { return e.id == id; });
    }
    void remove_node(const NodeId& id) {
        std::erase_if(nodes_, [&](const Node& n) { return n.id == id; });
        std::erase_if(edges_, [&](const Edge& e) { return e.from == id || e.to == id; });
    }
    template <typename Keep>
    void retain_nodes(Keep&& keep) {
        std::erase_if(nodes_, [&](const Node& n) { return !keep(n.id); });
        std::erase_if(edges_, [&](const Edge& e) { return !keep(e.from) || !keep(e.to); });
    }

    friend bool operator==(const TopologyGraph&, const TopologyGraph&) = default;

  private:
    InputShape input_{};
    int classes_ = 0;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Traversal helpers

namespace detail {

/// Dense index view of a graph: node positions in creation order and adjacency lists.
struct Adjacency {
    std::unordered_map<NodeId, std::size_t> index;
    std::vector<std::vector<std::size_t>> succ;
    std::vector<std::vector<std::size_t>> pred;

    explicit Adjacency(const TopologyGraph& g) : succ(g.nodes().size()), pred(g.nodes().size()) {
        for (std::size_t i = 0; i < g.nodes().size(); ++i) index.emplace(g.nodes()[i].id, i);
        for (const auto& e : g.edges()) {
            auto f = index.find(e.from);
            auto t = index.find(e.to);
            if (f == index.end() || t == index.end()) continue;
            succ[f->second].push_back(t->second);
            pred[t->second].push_back(f->second);
        }
    }

    [[nodiscard]] std::vector<char> reach(std::size_t start, bool forward) const {
        std::vector<char> seen(succ.size(), 0);
        std::queue<std::size_t> q;
        seen[start] = 1;
        q.push(start);
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            for (auto v : forward ? succ[u] : pred[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    q.push(v);
                }
        }
        return seen;
    }
};

template <typename Less>
std::optional<std::vector<std::size_t>> kahn_order(const Adjacency& adj, Less less) {
    const auto n = adj.succ.size();
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = adj.pred[i].size();
    auto greater = [&](std::size_t a, std::size_t b) { return less(b, a); };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> ready(greater);
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(i);
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        auto u = ready.top();
        ready.pop();
        order.push_back(u);
        for (auto v : adj.succ[u])
            if (--indeg[v] == 0) ready.push(v);
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

} // namespace detail

/// Topological order with ties broken by creation order. Empty if the graph is cyclic.
inline std::vector<NodeId> topological_order(const TopologyGraph& g) {
    detail::Adjacency adj(g);
    auto order = detail::kahn_order(adj, std::less<std::size_t>{});
    std::vector<NodeId> out;
    if (!order) return out;
    out.reserve(order->size());
    for (auto i : *order) out.push_back(g.nodes()[i].id);
    return out;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string rule;
    std::string element;
    friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
    bool valid = true;
    std::vector<Violation> violations;

    void add(std::string rule, std::string element) {
        valid = false;
        violations.push_back({std::move(rule), std::move(element)});
    }
    [[nodiscard]] bool has(std::string_view rule) const {
        return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
    }
    [[nodiscard]] std::string summary() const {
        std::string s;
        for (const auto& v : violations) {
            if (!s.empty()) s += "; ";
            s += v.rule + " (" + v.element + ")";
        }
        return s;
    }
};

inline bool valid_input_shape(const InputShape& s) {
    return s.height > 0 && s.height == s.width && is_power_of_two(s.height) && s.channels >= 1;
}

/// Checks every structural and geometric invariant. Total: never throws.
inline ValidationReport validate(const TopologyGraph& g) {
    ValidationReport r;
    const auto& in = g.input_shape();
    if (!valid_input_shape(in)) r.add("input-shape", std::to_string(in.height) + "x" + std::to_string(in.width) + "x" + std::to_string(in.channels));
    if (g.num_classes() < 2) r.add("classes", std::to_string(g.num_classes()));

    std::size_t sources = 0, sinks = 0;
    std::unordered_set<NodeId> node_ids;
    for (const auto& n : g.nodes()) {
        if (!node_ids.insert(n.id).second) r.add("duplicate-id", n.id.to_hex());
        if (n.kind == NodeKind::Source) {
            ++sources;
            if (n.channels != in.channels) r.add("source-channels", n.id.to_hex());
            if (n.fmap != in.height || n.pooling != Pooling::None) r.add("source-geometry", n.id.to_hex());
        } else if (n.kind == NodeKind::Sink) {
            ++sinks;
            if (n.channels != 0 || n.pooling != Pooling::None) r.add("sink-geometry", n.id.to_hex());
        } else {
            if (n.channels < 1) r.add("channels", n.id.to_hex());
            const bool fmap_ok = n.fmap >= 1 && in.height > 0 && in.height % n.fmap == 0 && is_power_of_two(in.height / n.fmap);
            if (!fmap_ok) r.add("fmap", n.id.to_hex());
            if (n.pooling == Pooling::Max2 && n.fmap < 2) r.add("pooling", n.id.to_hex());
        }
    }
    if (sources != 1) r.add("single-source", std::to_string(sources));
    if (sinks != 1) r.add("single-sink", std::to_string(sinks));

    std::set<std::pair<NodeId, NodeId>> pairs;
    std::unordered_set<EdgeId> edge_ids;
    for (const auto& e : g.edges()) {
        const auto* f = g.find_node(e.from);
        const auto* t = g.find_node(e.to);
        if (!edge_ids.insert(e.id).second) r.add("duplicate-id", e.id.to_hex());
        if (!f || !t) {
            r.add("dangling-edge", e.id.to_hex());
            continue;
        }
        if (!pairs.insert({e.from, e.to}).second) r.add("duplicate-edge", e.id.to_hex());
        if (t->kind == NodeKind::Source) r.add("source-in-edge", e.id.to_hex());
        if (f->kind == NodeKind::Sink) r.add("sink-out-edge", e.id.to_hex());
        if (t->kind == NodeKind::Sink) {
            if (e.kernel != kFullyConnected || e.stride != 1) r.add("sink-edge", e.id.to_hex());
        } else if (f->kind != NodeKind::Sink) {
            if (std::find(kKernelChoices.begin(), kKernelChoices.end(), e.kernel) == kKernelChoices.end())
                r.add("kernel", e.id.to_hex());
            const int out = f->output_size();
            if (t->fmap < 1 || out < t->fmap || out % t->fmap != 0 || e.stride != out / t->fmap)
                r.add("stride", e.id.to_hex());
        }
    }

    if (sources == 1 && sinks == 1) {
        detail::Adjacency adj(g);
        if (!detail::kahn_order(adj, std::less<std::size_t>{})) r.add("acyclic", "cycle");
        const auto s = adj.index.at(g.source());
        const auto t = adj.index.at(g.sink());
        const auto fwd = adj.reach(s, true);
        const auto bwd = adj.reach(t, false);
        if (!fwd[t]) r.add("connected", "source-sink");
        for (std::size_t i = 0; i < g.nodes().size(); ++i)
            if (g.nodes()[i].is_conv() && !(fwd[i] && bwd[i])) r.add("on-path", g.nodes()[i].id.to_hex());
    }
    return r;
}

inline void require_valid(const TopologyGraph& g) {
    if (auto r = validate(g); !r.valid) throw ValidationError("invalid topology: " + r.summary());
}

// ---------------------------------------------------------------------------
// Construction and geometry

/// source -> conv -> sink. The conv node sees the full-resolution input.
inline TopologyGraph new_minimal(InputShape input, int num_classes, int initial_channels = kDefaultInitialChannels,
                                 std::uint64_t id_seed = 0) {
    if (!valid_input_shape(input)) throw ValidationError("input must be square with power-of-two side and >=1 channel");
    if (num_classes < 2) throw ValidationError("need at least two classes");
    if (initial_channels < 1) throw ValidationError("initial channels must be positive");
    std::mt19937_64 rng(id_seed);
    TopologyGraph g(input, num_classes);
    const Node src{NodeId::random(rng), NodeKind::Source, input.channels, Pooling::None, input.height};
    const Node conv{NodeId::random(rng), NodeKind::Conv, initial_channels, Pooling::None, input.height};
    const Node sink{NodeId::random(rng), NodeKind::Sink, 0, Pooling::None, 1};
    g.add_node(src);
    g.add_node(conv);
    g.add_node(sink);
    g.add_edge({EdgeId::random(rng), src.id, conv.id, kDefaultKernel, 1});
    g.add_edge({EdgeId::random(rng), conv.id, sink.id, kFullyConnected, 1});
    return g;
}

/// Stride implied by stored sizes for a conv edge; throws if non-integral.
inline int implied_stride(const Node& from, const Node& to) {
    if (to.kind == NodeKind::Sink) return 1;
    const int out = from.output_size();
    if (to.fmap < 1 || out < to.fmap || out % to.fmap != 0)
        throw ValidationError("non-integral stride " + std::to_string(out) + "/" + std::to_string(to.fmap));
    return out / to.fmap;
}

/// Rewrites every edge stride from the stored feature-map sizes.
inline void rederive_strides(TopologyGraph& g) {
    std::vector<std::pair<EdgeId, int>> updates;
    for (const auto& e : g.edges()) updates.emplace_back(e.id, implied_stride(g.node(e.from), g.node(e.to)));
    for (const auto& [id, s] : updates) g.edge_mut(id).stride = s;
}

struct FeatureMap {
    int size = 0;    // spatial side entering the node
    int output = 0;  // after optional pooling
    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Per-node feature-map sizes, verified against every edge stride.
inline std::map<NodeId, FeatureMap> fmap_sizes(const TopologyGraph& g) {
    std::map<NodeId, FeatureMap> out;
    for (const auto& n : g.nodes()) {
        const int size = n.kind == NodeKind::Source ? g.input_shape().height : n.fmap;
        out[n.id] = {size, n.kind == NodeKind::Source ? size : n.output_size()};
    }
    for (const auto& e : g.edges()) {
        const int s = implied_stride(g.node(e.from), g.node(e.to));
        if (s != e.stride) throw ValidationError("edge " + e.id.to_hex() + " stride disagrees with feature-map sizes");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Canonical hashing

namespace detail {

inline const char* pooling_name(Pooling p) { return p == Pooling::Max2 ? "max2" : "none"; }
inline const char* kind_name(NodeKind k) {
    switch (k) {
    case NodeKind::Source: return "source";
    case NodeKind::Sink: return "sink";
    default: return "conv";
    }
}

} // namespace detail

/// Id-free serialization in canonical node order: topological, ties broken by
/// (channels, pooling, out-degree, in-degree), then creation order.
inline std::string canonical_form(const TopologyGraph& g) {
    detail::Adjacency adj(g);
    const auto& nodes = g.nodes();
    auto key = [&](std::size_t i) {
        return std::make_tuple(nodes[i].channels, static_cast<int>(nodes[i].pooling), adj.succ[i].size(), adj.pred[i].size(), i);
    };
    auto order = detail::kahn_order(adj, [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    if (!order) throw ValidationError("canonical_form requires an acyclic graph");
    std::vector<std::size_t> rank(nodes.size());
    for (std::size_t r = 0; r < order->size(); ++r) rank[(*order)[r]] = r;

    std::ostringstream os;
    const auto& in = g.input_shape();
    os << "in " << in.height << ' ' << in.width << ' ' << in.channels << " classes " << g.num_classes() << '\n';
    for (auto i : *order)
        os << "n " << detail::kind_name(nodes[i].kind) << ' ' << nodes[i].channels << ' ' << detail::pooling_name(nodes[i].pooling) << ' '
           << nodes[i].fmap << '\n';
    std::vector<std::tuple<std::size_t, std::size_t, int, int>> edges;
    for (const auto& e : g.edges())
        edges.emplace_back(rank[adj.index.at(e.from)], rank[adj.index.at(e.to)], e.kernel, e.stride);
    std::sort(edges.begin(), edges.end());
    for (const auto& [f, t, k, s] : edges) os << "e " << f << ' ' << t << ' ' << k << ' ' << s << '\n';
    return os.str();
}

/// 64-hex SHA-256 digest of the canonical form; independent of node/edge ids.
inline std::string canonical_hash(const TopologyGraph& g) { return sha256_hex(canonical_form(g)); }

// ---------------------------------------------------------------------------
// JSON and DOT

inline nlohmann::ordered_json to_json_value(const TopologyGraph& g) {
    nlohmann::ordered_json j;
    const auto& in = g.input_shape();
    j["input"] = {in.height, in.width, in.channels};
    j["classes"] = g.num_classes();
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : g.nodes()) {
        nlohmann::ordered_json o;
        o["id"] = n.id.to_hex();
        o["kind"] = detail::kind_name(n.kind);
        o["channels"] = n.channels;
        o["pooling"] = detail::pooling_name(n.pooling);
        o["fmap"] = n.fmap;
        nodes.push_back(std::move(o));
    }
    j["nodes"] = std::move(nodes);
    auto edges = nlohmann::ordered_json::array();
    for (const auto& e : g.edges()) {
        nlohmann::ordered_json o;
        o["id"] = e.id.to_hex();
        o["from"] = e.from.to_hex();
        o["to"] = e.to.to_hex();
        o["kernel"] = e.kernel;
        o["stride"] = e.stride;
        edges.push_back(std::move(o));
    }
    j["edges"] = std::move(edges);
    return j;
}

inline std::string to_json(const TopologyGraph& g, int indent = -1) { return to_json_value(g).dump(indent); }

/// Parses and validates. Throws ParseError for malformed input and
/// ValidationError for a well-formed but invalid graph.
template <typename Json>
TopologyGraph from_json_value(const Json& j) {
    TopologyGraph g;
    try {
        const auto& in = j.at("input");
        if (!in.is_array() || in.size() != 3) throw ParseError("\"input\" must be [H,W,C]");
        g = TopologyGraph({in.at(0).template get<int>(), in.at(1).template get<int>(), in.at(2).template get<int>()},
                          j.at("classes").template get<int>());
        for (const auto& o : j.at("nodes")) {
            Node n;
            n.id = NodeId::from_hex(o.at("id").template get<std::string>());
            const auto kind = o.at("kind").template get<std::string>();
            if (kind == "source") n.kind = NodeKind::Source;
            else if (kind == "sink") n.kind = NodeKind::Sink;
            else if (kind == "conv") n.kind = NodeKind::Conv;
            else throw ParseError("unknown node kind: " + kind);
            n.channels = o.at("channels").template get<int>();
            const auto pool = o.at("pooling").template get<std::string>();
            if (pool == "max2") n.pooling = Pooling::Max2;
            else if (pool == "none") n.pooling = Pooling::None;
            else throw ParseError("unknown pooling: " + pool);
            n.fmap = o.at("fmap").template get<int>();
            g.add_node(n);
        }
        for (const auto& o : j.at("edges")) {
            Edge e;
            e.id = EdgeId::from_hex(o.at("id").template get<std::string>());
            e.from = NodeId::from_hex(o.at("from").template get<std::string>());
            e.to = NodeId::from_hex(o.at("to").template get<std::string>());
            e.kernel = o.at("kernel").template get<int>();
            e.stride = o.at("stride").template get<int>();
            g.add_edge(e);
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("topology json: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw ParseError(std::string("topology json: ") + ex.what());
    }
    require_valid(g);
    return g;
}

inline TopologyGraph from_json(std::string_view text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& ex) {
        throw ParseError(std::string("topology json: ") + ex.what());
    }
    return from_json_value(j);
}

/// Display names: "input", "output", and n1..nk for conv nodes in topological order.
inline std::unordered_map<NodeId, std::string> display_names(const TopologyGraph& g) {
    std::unordered_map<NodeId, std::string> names;
    int k = 0;
    for (const auto& id : topological_order(g)) {
        const auto& n = g.node(id);
        names[id] = n.kind == NodeKind::Source ? "input" : n.kind == NodeKind::Sink ? "output" : "n" + std::to_string(++k);
    }
    return names;
}

/// Graphviz rendering: node label shows name, pooling flag and channels;
/// edge label shows the kernel size ("fc" for sink edges).
inline std::string to_dot(const TopologyGraph& g) {
    auto names = display_names(g);
    std::ostringstream os;
    os << "digraph topology {\n  rankdir=BT;\n  node [shape=box];\n";
    for (const auto& n : g.nodes()) {
        os << "  \"" << n.id.to_hex() << "\" [label=\"" << names[n.id];
        if (n.pooling == Pooling::Max2) os << " P";
        if (n.kind != NodeKind::Sink) os << " " << n.channels;
        os << "\"];\n";
    }
    for (const auto& e : g.edges()) {
        os << "  \"" << e.from.to_hex() << "\" -> \"" << e.to.to_hex() << "\" [label=\"";
        if (e.fully_connected()) os << "fc";
        else os << e.kernel;
        os << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

} // namespace topoevo
