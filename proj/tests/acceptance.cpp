// Runs the ten acceptance checks and prints one PASS/FAIL line for each.
// Exit status is non-zero if any check fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "topoevo/topoevo.hpp"

using namespace topoevo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// 1. Mutation closure

Outcome mutation_closure() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::vector<TopologyGraph> parents;
    for (int i = 0; i < 200; ++i)
        parents.push_back(random_walk(new_minimal({16, 16, 1}, 4, 4, rng()), i % 40, rng, [](const TopologyGraph& g) { return g.conv_count() <= 30; }));
    int valid = 0, terminal_loss = 0;
    constexpr int kCalls = 10000;
    for (int i = 0; i < kCalls; ++i) {
        auto& p = parents[static_cast<std::size_t>(i) % parents.size()];
        auto m = reproduce(p, rng);
        if (validate(m.graph).valid) ++valid;
        if (m.graph.source() != p.source() || m.graph.sink() != p.sink()) ++terminal_loss;
        if (m.graph.conv_count() <= 30) p = std::move(m.graph);
    }
    const double secs = seconds_since(t0);
    return {valid == kCalls && terminal_loss == 0 && secs < 60.0,
            std::to_string(valid) + "/" + std::to_string(kCalls) + " valid, " + std::to_string(terminal_loss) + " source/sink deletions, " +
                fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Selection pmf

Outcome selection_pmf() {
    const auto p = rank_pmf(1.0, 3);
    const std::vector<int> ranked{0, 1, 2};
    const SelectionPolicy policy{1.0, 3, SelectionMode::Boltzmann};
    std::mt19937_64 rng(202);
    std::vector<double> counts(3, 0.0);
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) ++counts[static_cast<std::size_t>(sample_parent<int>(ranked, policy, rng))];
    double chi2 = 0;
    for (std::size_t k = 0; k < 3; ++k) chi2 += std::pow(counts[k] - kDraws * p[k], 2) / (kDraws * p[k]);
    const double p_value = std::exp(-chi2 / 2.0);  // chi-square survival function, 2 dof
    double worst_sum = 0;
    for (std::size_t n = 1; n <= 1000; ++n)
        for (double lambda : {0.001, 0.01, 0.1, 1.0}) {
            const auto q = rank_pmf(lambda, n);
            worst_sum = std::max(worst_sum, std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0));
        }
    const bool values = std::abs(p[0] - 0.6652) < 5e-5 && std::abs(p[1] - 0.2447) < 5e-5 && std::abs(p[2] - 0.0900) < 5e-5;
    return {values && p_value > 0.01 && worst_sum <= 1e-12,
            "pmf [" + fmt(p[0]) + ", " + fmt(p[1]) + ", " + fmt(p[2]) + "], chi2 p = " + fmt(p_value, 3) + ", max |sum - 1| = " + fmt(worst_sum, 3)};
}

// ---------------------------------------------------------------------------
// 3. Inheritance identity

Outcome inheritance_identity() {
    std::mt19937_64 rng(303);
    double worst = 0;
    int cases = 0;
    for (auto kind : {MutationKind::AddEdge, MutationKind::AddNode, MutationKind::DoubleChannels}) {
        int done = 0;
        while (done < 50) {
            const auto g = random_walk(new_minimal({8, 8, 2}, 3, 2, rng()), 6, rng);
            Mutation m;
            try {
                m = apply_mutation(kind, g, rng);
            } catch (const MutationRejected&) {
                continue;
            }
            auto w = init_weights<double>(g, rng);
            std::normal_distribution<double> bias(0.0, 0.1);
            for (auto& [_, b] : w.biases)
                for (auto& v : b) v = bias(rng);
            Batch<double> batch;
            std::uniform_real_distribution<double> px(0.0, 1.0);
            batch.images.resize(4 * 8 * 8 * 2);
            for (auto& v : batch.images) v = px(rng);
            batch.labels = {0, 1, 2, 0};
            const auto child = inherit_weights(w, g, m.graph, m.record, rng, InheritMode::Preserving);
            const auto a = forward(g, w, batch), b = forward(m.graph, child, batch);
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
            ++done;
            ++cases;
        }
    }
    return {worst <= 1e-6, std::to_string(cases) + " parent/child pairs, max |logit diff| = " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 4. Gradient correctness

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(404);
    double worst = 0;
    std::size_t checked = 0, skipped = 0;
    int graphs = 0;
    while (graphs < 20) {
        const auto g = random_walk(new_minimal({8, 8, 2}, 3, 2, rng()), 3 + graphs % 8, rng,
                                   [](const TopologyGraph& h) { return h.conv_count() <= 6 && param_count(h) <= 4000; });
        auto w = init_weights<double>(g, rng);
        std::normal_distribution<double> bias(0.0, 0.1);
        for (auto& [_, b] : w.biases)
            for (auto& v : b) v = bias(rng);
        Batch<double> batch;
        std::uniform_real_distribution<double> px(0.0, 1.0);
        batch.images.resize(3 * 8 * 8 * 2);
        for (auto& v : batch.images) v = px(rng);
        batch.labels = {0, 1, 2};
        const auto r = gradient_check(g, w, batch);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
        ++graphs;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 300.0,
            std::to_string(graphs) + " graphs, " + std::to_string(checked) + " coordinates (" + std::to_string(skipped) +
                " at kinks skipped), max rel. error " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 5. Hyperparameter posterior

Outcome posterior_update() {
    const auto space = default_hyperparam_space();
    const auto init = init_posterior(space);
    bool uniform = true;
    for (std::size_t p = 0; p < space.size(); ++p)
        for (double v : init.probs[p]) uniform = uniform && v == 1.0 / static_cast<double>(space[p].values.size());
    std::size_t adam = 0, opt = 0;
    for (std::size_t p = 0; p < space.size(); ++p)
        if (space[p].name == "optimizer") {
            opt = p;
            for (std::size_t v = 0; v < space[p].values.size(); ++v)
                if (space[p].values[v] == "adam") adam = v;
        }
    std::vector<HyperparamChoice> obs(10, HyperparamChoice{std::vector<std::size_t>(space.size(), 0)});
    for (auto& c : obs) c.index[opt] = adam;
    const double mass = update_posterior(space, obs).probs[opt][adam];
    const double err = std::abs(mass - 11.0 / 13.0);
    return {uniform && err <= 1e-12, std::string("uniform init ") + (uniform ? "exact" : "NOT exact") + ", adam mass " + fmt(mass, 12) +
                                         " (|err| = " + fmt(err, 3) + ")"};
}

// ---------------------------------------------------------------------------
// 6 and 7. Toy evolution

RunConfig toy_config(std::uint64_t seed, SelectionMode mode) {
    RunConfig c;
    c.backend = Backend::Micro;
    c.selection = mode;
    c.capacity = 100;
    c.lambda = 0.1;
    c.max_concurrent = 1;
    c.max_evals = 1000;
    c.window = 100000;
    c.seed = seed;
    c.data = {4, 16, 384, 1, 0.6, 1};
    c.val_fraction = 1.0 / 3.0;
    c.budget = {1000, 20000, 1};
    return c;
}

struct ToyRun {
    double seed_score = 0;
    double best_score = 0;
    GraphStats top;   // final top-100 by fitness
    GraphStats last;  // last 100 evaluated
    double secs = 0;
};

ToyRun toy_run(std::uint64_t seed, SelectionMode mode) {
    const auto t0 = Clock::now();
    const auto r = run_evolution(toy_config(seed, mode));
    ToyRun out;
    const auto log = r.store->log();
    out.seed_score = log.front().individual->score();
    const auto best = best_k(*r.store, 100);
    out.best_score = best.front().score();
    std::vector<StatsInput> top, last;
    for (const auto& m : best) top.push_back({&m.individual->topology, m.individual->generation});
    const auto lk = last_k(log, 100);
    for (const auto& ind : lk) last.push_back({&ind->topology, ind->generation});
    out.top = population_stats(top);
    out.last = population_stats(last);
    out.secs = seconds_since(t0);
    return out;
}

std::vector<ToyRun> boltzmann_runs;

Outcome toy_evolution() {
    const auto t0 = Clock::now();
    std::vector<double> gains;
    std::string per;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        boltzmann_runs.push_back(toy_run(s, SelectionMode::Boltzmann));
        const auto& r = boltzmann_runs.back();
        gains.push_back(r.best_score - r.seed_score);
        per += (per.empty() ? "" : ", ") + fmt(r.seed_score, 3) + "->" + fmt(r.best_score, 3);
        std::cerr << "  toy run seed " << s << ": seed " << r.seed_score << " best " << r.best_score << " (" << fmt(r.secs, 3) << " s)\n";
    }
    std::vector<double> sorted = gains;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[2];
    const double secs = seconds_since(t0);
    return {median >= 0.15 && secs <= 1800.0, "median gain " + fmt(median, 3) + " over 5 seeds [" + per + "], " + fmt(secs, 4) + " s"};
}

Outcome selection_direction() {
    int wins = 0;
    std::string per;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        if (boltzmann_runs.size() < s) boltzmann_runs.push_back(toy_run(s, SelectionMode::Boltzmann));
        const auto& b = boltzmann_runs[s - 1];
        const auto rnd = toy_run(s, SelectionMode::Random);
        const bool win = b.top.nodes > rnd.last.nodes && b.top.edges > rnd.last.edges && b.top.generations > rnd.last.generations;
        wins += win;
        per += (per.empty() ? "" : "; ") + std::string("nodes ") + fmt(b.top.nodes, 3) + "/" + fmt(rnd.last.nodes, 3) + " edges " +
               fmt(b.top.edges, 3) + "/" + fmt(rnd.last.edges, 3) + " gen " + fmt(b.top.generations, 3) + "/" + fmt(rnd.last.generations, 3);
        std::cerr << "  pair " << s << (win ? " holds" : " fails") << " (random run " << fmt(rnd.secs, 3) << " s)\n";
    }
    return {wins >= 4, std::to_string(wins) + "/5 pairs with boltzmann > random on nodes, edges and generations [" + per + "]"};
}

// ---------------------------------------------------------------------------
// 8. Analysis oracles

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

Outcome analysis_oracles() {
    const auto p3 = new_minimal({8, 8, 1}, 2);
    std::mt19937_64 rng(808);
    const auto k3 = add_edge(p3, rng).graph;
    const double a_p3 = algebraic_connectivity(p3), a_k3 = algebraic_connectivity(k3);
    int graphs = 0, agree = 0;
    for (int i = 0; i < 300; ++i) {
        const auto g = random_walk(new_minimal({8, 8, 1}, 2, 2, rng()), 1 + i % 15, rng, [](const TopologyGraph& h) { return h.nodes().size() <= 8; });
        const auto [lo, hi] = enumerate_paths(g);
        ++graphs;
        agree += shortest_distance(g) == lo && longest_distance(g) == hi;
    }
    const bool ok = std::abs(a_p3 - 1.0) <= 1e-9 && std::abs(a_k3 - 3.0) <= 1e-9 && agree == graphs;
    return {ok, "P3 " + fmt(a_p3, 12) + ", K3 " + fmt(a_k3, 12) + ", distances agree on " + std::to_string(agree) + "/" + std::to_string(graphs) +
                    " graphs of at most 8 nodes"};
}

// ---------------------------------------------------------------------------
// 9. Constructor

struct Command {
    int code = -1;
    std::string out;
};

Command run_cli(const std::string& args, const fs::path& scratch) {
    const auto out = scratch / "cli_stdout.txt";
    const std::string cmd = std::string(TOPOEVO_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    std::ifstream is(out);
    std::ostringstream ss;
    ss << is.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

Outcome constructor_family(const fs::path& scratch) {
    bool all_valid = true;
    std::map<std::string, int> shortest;
    for (const auto& name : evo_family_names()) {
        const auto g = evo_family(name);
        all_valid = all_valid && validate(g).valid;
        shortest[name] = shortest_distance(g);
    }
    const bool order44 = shortest["EVO-44"] > shortest["EVO-44a"] && shortest["EVO-44a"] > shortest["EVO-44b"];
    const bool order91 = shortest["EVO-91"] > shortest["EVO-91a"] && shortest["EVO-91a"] > shortest["EVO-91b"];
    std::set<int> dense;
    for (int count = 2; count <= 15; ++count) {
        StackPlan p;
        p.block = default_block();
        p.count = count;
        p.skip = SkipMode::Dense;
        dense.insert(shortest_distance(stack(p)));
    }
    const auto check = run_cli("construct --check", scratch);
    const bool reported = check.code == 0 && check.out.find("published") != std::string::npos && check.out.find("EVO-91b") != std::string::npos;
    std::string dist;
    for (const auto& name : evo_family_names()) dist += (dist.empty() ? "" : " ") + name + "=" + std::to_string(shortest[name]);
    return {all_valid && order44 && order91 && dense.size() == 1 && reported,
            std::string(all_valid ? "six graphs valid" : "INVALID graph") + ", shortest " + dist + ", dense constant " +
                (dense.size() == 1 ? "yes" : "no") + ", construct --check " + (reported ? "reports" : "FAILED")};
}

// ---------------------------------------------------------------------------
// 10. Determinism and persistence

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome determinism(const fs::path& scratch) {
    const std::string args = " --workers 1 --max-evals 25 --capacity 10 --lambda 0.5 --max-steps 20 --quiet --seed 11";
    const auto a = run_cli("evolve --out " + (scratch / "run_a").string() + args, scratch);
    const auto b = run_cli("evolve --out " + (scratch / "run_b").string() + args, scratch);
    const auto log_a = slurp(scratch / "run_a" / "population.jsonl");
    const bool cli_same = a.code == 0 && b.code == 0 && !log_a.empty() && log_a == slurp(scratch / "run_b" / "population.jsonl");

    RunConfig c;
    c.max_concurrent = 1;
    c.capacity = 10;
    c.lambda = 0.5;
    c.max_evals = 20;
    c.seed = 12;
    c.data = {3, 8, 90, 1, 0.3, 2};
    c.budget = {30, 5000, 1};
    const auto r = run_evolution(c);
    const auto text = snapshot(*r.store);
    const auto back = restore(text);
    bool same_members = true;
    const auto ma = r.store->members(), mb = back.members();
    same_members = ma.size() == mb.size();
    for (std::size_t i = 0; same_members && i < ma.size(); ++i)
        same_members = *ma[i].individual == *mb[i].individual && ma[i].weights && mb[i].weights && *ma[i].weights == *mb[i].weights;
    const bool round_trip = snapshot(back) == text && log_lines(back) == log_lines(*r.store) && same_members;
    return {cli_same && round_trip, std::string("evolve log ") + (cli_same ? "byte-identical" : "DIFFERS") + " across runs (" +
                                        std::to_string(log_a.size()) + " bytes), snapshot round trip " + (round_trip ? "exact" : "NOT exact")};
}

} // namespace

int main() {
    const auto scratch = fs::temp_directory_path() / ("topoevo_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(scratch);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"mutation closure", mutation_closure},
        {"selection pmf", selection_pmf},
        {"inheritance identity", inheritance_identity},
        {"gradient correctness", gradient_correctness},
        {"posterior update", posterior_update},
        {"toy evolution improves fitness", toy_evolution},
        {"selection direction (boltzmann vs random)", selection_direction},
        {"analysis oracles", analysis_oracles},
        {"constructor family", [&] { return constructor_family(scratch); }},
        {"determinism and persistence", [&] { return determinism(scratch); }},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << index << ". " << name << ": " << o.detail << std::endl;
    }
    fs::remove_all(scratch);
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
