#include <gtest/gtest.h>

#include <map>
#include <queue>
#include <set>

#include "support.hpp"

using namespace topoevo;
using testing_support::Builder;

TEST(Topology, MinimalGraphShape) {
    const auto g = new_minimal({16, 16, 1}, 4);
    EXPECT_TRUE(validate(g).valid) << validate(g).summary();
    EXPECT_EQ(g.nodes().size(), 3u);
    EXPECT_EQ(g.edges().size(), 2u);
    EXPECT_EQ(g.conv_count(), 1u);
    const auto& conv = g.nodes()[1];
    EXPECT_EQ(conv.channels, kDefaultInitialChannels);
    EXPECT_EQ(conv.fmap, 16);
    for (const auto& e : g.edges()) {
        EXPECT_EQ(e.stride, 1);
        EXPECT_EQ(e.to == g.sink(), e.fully_connected());
    }
}

TEST(Topology, MinimalGraphIdsFollowSeed) {
    EXPECT_EQ(new_minimal({8, 8, 1}, 2, 4, 5), new_minimal({8, 8, 1}, 2, 4, 5));
    EXPECT_NE(new_minimal({8, 8, 1}, 2, 4, 5).nodes()[0].id, new_minimal({8, 8, 1}, 2, 4, 6).nodes()[0].id);
}

TEST(Topology, RejectsBadInputShapes) {
    EXPECT_THROW(new_minimal({12, 12, 1}, 2), ValidationError);
    EXPECT_THROW(new_minimal({8, 4, 1}, 2), ValidationError);
    EXPECT_THROW(new_minimal({8, 8, 1}, 1), ValidationError);
}

TEST(Validate, Cycle) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8).conv("b", 2, 8).edge("src", "a").edge("a", "b").edge("b", "a").edge("b", "sink", 0).build();
    const auto r = validate(g);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(r.has("acyclic")) << r.summary();
}

TEST(Validate, NodeOffEverySourceSinkPath) {
    // c has an input but no route to the sink.
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8).conv("c", 2, 8).edge("src", "a").edge("a", "sink", 0).edge("a", "c").build();
    const auto r = validate(g);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(r.has("on-path")) << r.summary();
}

TEST(Validate, SinkEdgesMustBeFullyConnected) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8).edge("src", "a").edge("a", "sink", 3).build();
    EXPECT_TRUE(validate(g).has("sink-edge"));
    auto h = Builder({8, 8, 1}, 2).conv("a", 2, 8).edge("src", "a", 0).edge("a", "sink", 0).build();
    EXPECT_FALSE(validate(h).valid);
}

TEST(Validate, KernelOutsideChoices) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8).edge("src", "a", 4).edge("a", "sink", 0).build();
    EXPECT_TRUE(validate(g).has("kernel"));
}

TEST(Validate, DuplicateEdgeAndSinkOutEdge) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8).edge("src", "a").edge("src", "a", 5).edge("a", "sink", 0).build();
    EXPECT_TRUE(validate(g).has("duplicate-edge"));
    auto h = Builder({8, 8, 1}, 2).conv("a", 2, 8).edge("src", "a").edge("a", "sink", 0).edge("sink", "a", 0).build();
    EXPECT_FALSE(validate(h).valid);
}

TEST(Validate, StrideMustMatchSizes) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8, true).conv("b", 2, 4).edge("src", "a").edge("a", "b").edge("b", "sink", 0).build();
    EXPECT_TRUE(validate(g).valid) << validate(g).summary();
    auto bad = g;
    for (const auto& e : g.edges())
        if (e.to == g.nodes()[3].id) bad.edge_mut(e.id).stride = 2;
    EXPECT_TRUE(validate(bad).has("stride"));
}

TEST(Validate, DanglingEdge) {
    auto g = new_minimal({8, 8, 1}, 2);
    g.add_edge({EdgeId{1, 2}, g.source(), NodeId{9, 9}, 3, 1});
    EXPECT_TRUE(validate(g).has("dangling-edge"));
}

TEST(Validate, StridedDownsamplingIsLegal) {
    // a -> b skips a pooling stage with stride 2.
    auto g = Builder({8, 8, 1}, 2)
                 .conv("a", 2, 8, true)
                 .conv("b", 2, 4, true)
                 .conv("c", 2, 2)
                 .edge("src", "a")
                 .edge("a", "b")
                 .edge("b", "c")
                 .edge("a", "c")
                 .edge("c", "sink", 0)
                 .build();
    EXPECT_TRUE(validate(g).valid) << validate(g).summary();
    EXPECT_EQ(g.edge_between(g.nodes()[2].id, g.nodes()[4].id)->stride, 2);
}

TEST(Json, RoundTripIsExact) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        const auto g = testing_support::random_graph(rng, 12);
        EXPECT_EQ(from_json(to_json(g)), g);
        EXPECT_EQ(to_json(from_json(to_json(g))), to_json(g));
    }
}

TEST(Json, MalformedAndInvalidInput) {
    EXPECT_THROW(from_json("{not json"), ParseError);
    EXPECT_THROW(from_json("{}"), ParseError);
    auto j = nlohmann::json::parse(to_json(new_minimal({8, 8, 1}, 2)));
    j["edges"][1]["kernel"] = 3;  // conv kernel on the sink edge
    EXPECT_THROW(from_json(j.dump()), ValidationError);
}

TEST(Hash, InvariantUnderIdRelabeling) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 30; ++i) {
        const auto g = testing_support::random_graph(rng, 10);
        EXPECT_EQ(canonical_hash(g), canonical_hash(testing_support::relabel(g, rng)));
    }
}

TEST(Hash, DistinguishesStructure) {
    const auto a = new_minimal({8, 8, 1}, 2);
    std::mt19937_64 rng(1);
    const auto b = double_channels(a, a.nodes()[1].id, rng).graph;
    EXPECT_NE(canonical_hash(a), canonical_hash(b));
    EXPECT_EQ(canonical_hash(a).size(), 64u);
}

TEST(Order, TopologicalOrderRespectsEveryEdge) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const auto g = testing_support::random_graph(rng, 15);
        const auto order = topological_order(g);
        ASSERT_EQ(order.size(), g.nodes().size());
        std::map<NodeId, std::size_t> pos;
        for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
        for (const auto& e : g.edges()) EXPECT_LT(pos.at(e.from), pos.at(e.to));
        EXPECT_EQ(order.front(), g.source());
        EXPECT_EQ(order.back(), g.sink());
    }
}

TEST(Geometry, PoolingHalvesOutput) {
    auto g = Builder({8, 8, 1}, 2).conv("a", 2, 8, true).conv("b", 2, 4).edge("src", "a").edge("a", "b").edge("b", "sink", 0).build();
    const auto f = fmap_sizes(g);
    EXPECT_EQ(f.at(g.nodes()[2].id), (FeatureMap{8, 4}));
    EXPECT_EQ(f.at(g.nodes()[3].id), (FeatureMap{4, 4}));
}

TEST(Dot, LabelsNodesAndEdges) {
    const auto dot = to_dot(new_minimal({8, 8, 1}, 2));
    EXPECT_NE(dot.find("digraph"), std::string::npos);
    EXPECT_NE(dot.find("fc"), std::string::npos);
    EXPECT_NE(dot.find("->"), std::string::npos);
}
