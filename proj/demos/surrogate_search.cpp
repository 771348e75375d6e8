// Short evolution with the closed-form surrogate fitness, then the graph
// statistics of the final population next to those of the seed.

#include <iomanip>
#include <iostream>

#include "topoevo/topoevo.hpp"

int main() {
    using namespace topoevo;
    RunConfig cfg;
    cfg.backend = Backend::Surrogate;
    cfg.capacity = 50;
    cfg.lambda = 0.2;
    cfg.max_concurrent = 1;
    cfg.max_evals = 400;
    cfg.seed = 3;

    const auto result = run_evolution(cfg);
    const auto members = result.store->members();
    const auto log = result.store->log();

    std::vector<StatsInput> pop;
    for (const auto& m : members) pop.push_back({&m.individual->topology, m.individual->generation});
    const auto seed = graph_stats(log.front().individual->topology);
    const auto evolved = population_stats(pop);

    std::cout << std::fixed << std::setprecision(3);
    std::cout << std::left << std::setw(16) << "" << std::right << std::setw(10) << "seed" << std::setw(10) << "evolved" << '\n';
    const auto a = stats_values(seed), b = stats_values(evolved);
    for (std::size_t r = 0; r < kStatsRows.size(); ++r)
        std::cout << std::left << std::setw(16) << kStatsRows[r] << std::right << std::setw(10) << a[r] << std::setw(10) << b[r] << '\n';
    std::cout << "\nbest score " << members.front().score() << " after " << log.size() << " evaluations\n\n";
    std::cout << to_dot(members.front().individual->topology);
}
