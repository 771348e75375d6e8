// Builds the six stacked-block presets and a narrow variant of one of them,
// prints their distances, and trains the narrow one briefly on synthetic data.

#include <iostream>
#include <random>

#include "topoevo/topoevo.hpp"

int main() {
    using namespace topoevo;
    for (const auto& name : evo_family_names()) {
        const auto g = evo_family(name);
        std::cout << name << ": " << g.nodes().size() << " nodes, " << g.edges().size() << " edges, shortest "
                  << shortest_distance(g) << ", depth " << longest_distance(g) << ", params " << param_count(g) << '\n';
    }

    auto plan = evo_plan("EVO-44b");
    plan.block = with_channels(plan.block, 4);
    plan.input = {16, 16, 1};
    plan.num_classes = 4;
    const auto g = stack(plan);

    const auto data = split_dataset(generate_synthetic({4, 16, 600, 1, 0.3, 7}), 0.25);
    std::mt19937_64 rng(7);
    auto [w, stats] = train<float>(g, init_weights<float>(g, rng), data, {0.001, 32, OptimizerKind::Adam, 0.0}, {}, rng);
    std::cout << "\nnarrow EVO-44b on synthetic data, one epoch: train " << stats.train_acc << ", validation " << stats.val_acc << '\n';
}
