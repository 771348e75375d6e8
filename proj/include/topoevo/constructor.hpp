#pragma once

/// @file constructor.hpp
/// Hand-designed networks built by stacking a six-node building block, with
/// optional cross-block skip edges, and the EVO-44/91 family presets.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoevo/analysis.hpp"
#include "topoevo/topology.hpp"

namespace topoevo {

struct BlockNode {
    std::string name;
    int channels = 64;
};

struct BlockEdge {
    std::string from;
    std::string to;
    int kernel = kDefaultKernel;
};

/// A reusable subgraph. Blocks are chained output -> input; each skip anchor
/// (a, b) links node a of a lower block to node b of a higher block.
struct BlockSpec {
    std::vector<BlockNode> nodes;
    std::vector<BlockEdge> edges;
    std::string input = "n1";
    std::string output = "n8";
    std::vector<std::pair<std::string, std::string>> skips;
};

enum class SkipMode { None, Adjacent, Dense };

inline const char* to_string(SkipMode m) {
    switch (m) {
    case SkipMode::None: return "none";
    case SkipMode::Adjacent: return "adjacent";
    case SkipMode::Dense: return "dense";
    }
    return "?";
}

inline SkipMode skip_mode_from_string(std::string_view s) {
    if (s == "none") return SkipMode::None;
    if (s == "adjacent") return SkipMode::Adjacent;
    if (s == "dense") return SkipMode::Dense;
    throw ParseError("unknown skip mode: " + std::string(s) + " (expected none, adjacent or dense)");
}

struct StackPlan {
    BlockSpec block;
    int count = 7;
    SkipMode skip = SkipMode::None;
    std::set<int> pooling_blocks;  // 1-based block numbers whose output node pools
    InputShape input{32, 32, 3};
    int num_classes = 10;
};

/// Chain n1 -> n2 -> n4 -> n6 -> n7 -> n8 (kernel 3) plus n1 -> n7 (kernel 1),
/// 64 channels everywhere, skip anchors (n7, n8) and (n1, n6).
inline BlockSpec default_block() {
    BlockSpec b;
    for (const char* n : {"n1", "n2", "n4", "n6", "n7", "n8"}) b.nodes.push_back({n, 64});
    b.edges = {{"n1", "n2", 3}, {"n2", "n4", 3}, {"n4", "n6", 3}, {"n6", "n7", 3}, {"n7", "n8", 3}, {"n1", "n7", 1}};
    b.skips = {{"n7", "n8"}, {"n1", "n6"}};
    return b;
}

inline BlockSpec with_channels(BlockSpec b, int channels) {
    for (auto& n : b.nodes) n.channels = channels;
    return b;
}

inline void check_block(const BlockSpec& b) {
    auto fail = [](const std::string& m) { throw ValidationError("invalid block: " + m); };
    std::map<std::string, std::size_t> index;
    for (const auto& n : b.nodes) {
        if (n.channels < 1) fail("node " + n.name + " has no channels");
        if (!index.emplace(n.name, index.size()).second) fail("duplicate node " + n.name);
    }
    auto has = [&](const std::string& n) { return index.count(n) > 0; };
    if (!has(b.input) || !has(b.output)) fail("input or output node missing");
    std::vector<std::vector<std::size_t>> succ(index.size());
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : b.edges) {
        if (!has(e.from) || !has(e.to)) fail("edge " + e.from + "->" + e.to + " names an unknown node");
        if (std::find(kKernelChoices.begin(), kKernelChoices.end(), e.kernel) == kKernelChoices.end()) fail("bad kernel on " + e.from + "->" + e.to);
        if (!seen.emplace(e.from, e.to).second) fail("duplicate edge " + e.from + "->" + e.to);
        succ[index[e.from]].push_back(index[e.to]);
    }
    for (const auto& [a, c] : b.skips)
        if (!has(a) || !has(c)) fail("skip anchor " + a + "->" + c + " names an unknown node");
    // Acyclic and output reachable from input (iterative DFS colouring).
    std::vector<int> colour(index.size(), 0);
    for (std::size_t root = 0; root < index.size(); ++root) {
        if (colour[root]) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        colour[root] = 1;
        while (!stack.empty()) {
            auto& [u, i] = stack.back();
            if (i < succ[u].size()) {
                const auto v = succ[u][i++];
                if (colour[v] == 1) fail("block contains a cycle");
                if (colour[v] == 0) {
                    colour[v] = 1;
                    stack.emplace_back(v, 0);
                }
            } else {
                colour[u] = 2;
                stack.pop_back();
            }
        }
    }
    std::vector<bool> reach(index.size(), false);
    std::vector<std::size_t> todo{index[b.input]};
    reach[todo.front()] = true;
    while (!todo.empty()) {
        const auto u = todo.back();
        todo.pop_back();
        for (auto v : succ[u])
            if (!reach[v]) reach[v] = true, todo.push_back(v);
    }
    if (!reach[index[b.output]]) fail("output not reachable from input");
}

template <typename Json>
BlockSpec block_from_json(const Json& j) {
    try {
        BlockSpec b;
        for (const auto& n : j.at("nodes")) b.nodes.push_back({n.at("name").template get<std::string>(), n.value("channels", 64)});
        for (const auto& e : j.at("edges"))
            b.edges.push_back({e.at("from").template get<std::string>(), e.at("to").template get<std::string>(), e.value("kernel", kDefaultKernel)});
        b.input = j.value("input", std::string("n1"));
        b.output = j.value("output", std::string("n8"));
        if (j.contains("skips"))
            for (const auto& s : j.at("skips")) b.skips.emplace_back(s.at(0).template get<std::string>(), s.at(1).template get<std::string>());
        check_block(b);
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("block: ") + e.what());
    }
}

inline nlohmann::ordered_json block_to_json(const BlockSpec& b) {
    using J = nlohmann::ordered_json;
    J j{{"nodes", J::array()}, {"edges", J::array()}, {"input", b.input}, {"output", b.output}, {"skips", J::array()}};
    for (const auto& n : b.nodes) j["nodes"].push_back({{"name", n.name}, {"channels", n.channels}});
    for (const auto& e : b.edges) j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"kernel", e.kernel}});
    for (const auto& [a, c] : b.skips) j["skips"].push_back({a, c});
    return j;
}

/// Skip edges the plan adds: 2 (count - 1) in adjacent mode, count (count - 1) in dense mode.
inline std::size_t skip_edge_count(const StackPlan& p) {
    const auto n = static_cast<std::size_t>(p.count), a = p.block.skips.size();
    switch (p.skip) {
    case SkipMode::None: return 0;
    case SkipMode::Adjacent: return a * (n - 1);
    case SkipMode::Dense: return a * n * (n - 1) / 2;
    }
    return 0;
}

/// Stacks `count` copies of the block between the source and a fully connected
/// sink. Node ids are drawn from a fixed stream, so equal plans give equal graphs.
inline TopologyGraph stack(const StackPlan& plan) {
    check_block(plan.block);
    if (plan.count < 1) throw ValidationError("block count must be positive");
    for (int b : plan.pooling_blocks)
        if (b < 1 || b >= plan.count) throw ValidationError("pooling block " + std::to_string(b) + " outside 1.." + std::to_string(plan.count - 1));
    if (!valid_input_shape(plan.input)) throw ValidationError("input must be square with power-of-two side");
    if (plan.input.height >> plan.pooling_blocks.size() < 1) throw ValidationError("too much pooling for the input size");

    std::mt19937_64 rng(0x5eed);
    TopologyGraph g(plan.input, plan.num_classes);
    const Node src{NodeId::random(rng), NodeKind::Source, plan.input.channels, Pooling::None, plan.input.height};
    g.add_node(src);

    const auto& blk = plan.block;
    // ids[b][name] for block b (0-based).
    std::vector<std::map<std::string, NodeId>> ids(static_cast<std::size_t>(plan.count));
    int size = plan.input.height;
    for (int b = 0; b < plan.count; ++b) {
        const bool pools = plan.pooling_blocks.count(b + 1) > 0;
        for (const auto& n : blk.nodes) {
            Node node{NodeId::random(rng), NodeKind::Conv, n.channels, pools && n.name == blk.output ? Pooling::Max2 : Pooling::None, size};
            ids[static_cast<std::size_t>(b)][n.name] = node.id;
            g.add_node(node);
        }
        if (pools) size /= 2;
    }
    const Node sink{NodeId::random(rng), NodeKind::Sink, 0, Pooling::None, 1};
    g.add_node(sink);

    auto connect = [&](const NodeId& from, const NodeId& to, int kernel) {
        g.add_edge({EdgeId::random(rng), from, to, kernel, 1});
    };
    connect(src.id, ids[0].at(blk.input), kDefaultKernel);
    for (int b = 0; b < plan.count; ++b) {
        const auto& here = ids[static_cast<std::size_t>(b)];
        for (const auto& e : blk.edges) connect(here.at(e.from), here.at(e.to), e.kernel);
        if (b + 1 < plan.count) connect(here.at(blk.output), ids[static_cast<std::size_t>(b + 1)].at(blk.input), kDefaultKernel);
    }
    if (plan.skip != SkipMode::None)
        for (int lo = 0; lo < plan.count; ++lo)
            for (int hi = lo + 1; hi < plan.count; ++hi) {
                if (plan.skip == SkipMode::Adjacent && hi != lo + 1) continue;
                for (const auto& [a, c] : blk.skips)
                    connect(ids[static_cast<std::size_t>(lo)].at(a), ids[static_cast<std::size_t>(hi)].at(c), kDefaultKernel);
            }
    connect(ids.back().at(blk.output), sink.id, kFullyConnected);

    rederive_strides(g);
    require_valid(g);
    return g;
}

inline const std::vector<std::string>& evo_family_names() {
    static const std::vector<std::string> names{"EVO-44", "EVO-44a", "EVO-44b", "EVO-91", "EVO-91a", "EVO-91b"};
    return names;
}

inline StackPlan evo_plan(std::string_view name, BlockSpec block = default_block()) {
    const auto& names = evo_family_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string valid;
        for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
        throw ValidationError("unknown family '" + std::string(name) + "'; valid names: " + valid);
    }
    StackPlan p;
    p.block = std::move(block);
    const bool small = name.substr(0, 6) == "EVO-44";
    p.count = small ? 7 : 15;
    p.pooling_blocks = small ? std::set<int>{2, 4, 6} : std::set<int>{4, 8, 12};
    p.skip = name.back() == 'a' ? SkipMode::Adjacent : name.back() == 'b' ? SkipMode::Dense : SkipMode::None;
    return p;
}

inline TopologyGraph evo_family(std::string_view name) { return stack(evo_plan(name)); }

/// Distances published for the family, for side-by-side reporting only.
struct PublishedDistances {
    int shortest;
    int depth;
};

inline PublishedDistances published_distances(std::string_view name) {
    if (name == "EVO-44") return {23, 44};
    if (name == "EVO-44a") return {13, 44};
    if (name == "EVO-44b") return {5, 44};
    if (name == "EVO-91") return {47, 91};
    if (name == "EVO-91a") return {25, 91};
    if (name == "EVO-91b") return {5, 91};
    throw ValidationError("no published distances for " + std::string(name));
}

} // namespace topoevo
