// Command-line front end: evolve, analyze, construct, train, gradcheck, gendata.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topoevo/topoevo.hpp"

namespace fs = std::filesystem;
using namespace topoevo;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitBudget = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os || !(os << text)) throw Error("cannot write " + path.string());
}

TopologyGraph load_topology(const std::string& path) { return from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// evolve

struct EvolveArgs {
    std::string config, backend, selection, inherit, dataset, resume, out = "evolve-out";
    double lambda = 0, epsilon = 0;
    std::size_t capacity = 0, max_evals = 0, max_params = 0, max_steps = 0, window = 0;
    int workers = 0;
    bool quiet = false;
};

RunConfig resolve_config(const EvolveArgs& a, CLI::App& cmd, const CLI::Option* seed_opt, std::uint64_t seed) {
    RunConfig c;
    if (!a.config.empty()) {
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(read_file(a.config));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("config " + a.config + ": " + e.what());
        }
        try {
            c = config_from_json(j, c);
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
    }
    auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
    try {
        if (given("--backend")) c.backend = backend_from_string(a.backend);
        if (given("--selection")) c.selection = selection_from_string(a.selection);
        if (given("--inherit")) c.inherit = inherit_mode_from_string(a.inherit);
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    }
    if (given("--lambda")) c.lambda = a.lambda;
    if (given("--capacity")) c.capacity = a.capacity;
    if (given("--workers")) c.max_concurrent = a.workers;
    if (given("--max-evals")) c.max_evals = a.max_evals;
    if (given("--max-params")) c.budget.max_params = a.max_params;
    if (given("--max-steps")) c.budget.max_steps = a.max_steps;
    if (given("--window")) c.window = a.window;
    if (given("--epsilon")) c.epsilon = a.epsilon;
    if (given("--dataset")) c.dataset_path = a.dataset;
    if (seed_opt->count() > 0) c.seed = seed;
    try {
        check_config(c);
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    return c;
}

int run_evolve(const EvolveArgs& a, CLI::App& cmd, const CLI::Option* seed_opt, std::uint64_t seed) {
    const RunConfig cfg = resolve_config(a, cmd, seed_opt, seed);
    const auto resolved = config_to_json(cfg).dump(2);
    std::cout << resolved << '\n';

    std::shared_ptr<PopulationStore> store;
    if (!a.resume.empty()) store = std::make_shared<PopulationStore>(restore(read_file(a.resume), cfg.space));
    fs::create_directories(a.out);

    const auto t0 = std::chrono::steady_clock::now();
    std::mutex print_mu;
    auto progress = [&](const LogEntry& e) {
        if (a.quiet) return;
        const auto& ind = *e.individual;
        if (ind.eval_seq % 25 != 0) return;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(print_mu);
        std::cerr << "eval " << ind.eval_seq << "  gen " << ind.generation << "  " << to_string(ind.status);
        if (ind.fitness) std::cerr << "  score " << std::fixed << std::setprecision(4) << ind.score() << std::defaultfloat;
        std::cerr << "  " << std::setprecision(1) << std::fixed << secs << "s" << std::defaultfloat << std::setprecision(6) << '\n';
    };
    const auto result = run_evolution(cfg, store, progress);

    const auto& s = *result.store;
    write_file(fs::path(a.out) / "config.json", resolved + "\n");
    write_file(fs::path(a.out) / "population.jsonl", log_lines(s, cfg.space));
    write_file(fs::path(a.out) / "snapshot.json", snapshot(s, cfg.space));
    const auto members = s.members();
    const auto& best = *members.front().individual;
    write_file(fs::path(a.out) / "best.json", to_json(best.topology, 2) + "\n");
    write_file(fs::path(a.out) / "best.dot", to_dot(best.topology));

    const auto log = s.log();
    const auto discarded = std::count_if(log.begin(), log.end(), [](const LogEntry& e) { return e.individual->status == Status::Discarded; });
    const auto admitted = std::count_if(log.begin(), log.end(), [](const LogEntry& e) { return e.admitted; });
    std::cout << "evaluations: " << log.size() << " (admitted " << admitted << ", discarded " << discarded << ")\n"
              << "stopped by:  " << to_string(result.stop) << '\n'
              << "seed score:  " << log.front().individual->score() << '\n'
              << "best score:  " << best.score() << " (id " << best.id << ", generation " << best.generation << ", "
              << best.topology.nodes().size() << " nodes, " << best.topology.edges().size() << " edges)\n"
              << "written to:  " << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::vector<std::string> paths;
    std::string format = "text";
    std::vector<std::string> select{"best"};
    std::size_t k = 100;
};

struct Column {
    std::string label;
    GraphStats stats;
    std::size_t graphs = 0;
};

Column analyze_input(const std::string& path, const std::string& selector, std::size_t k) {
    std::string file = path;
    if (fs::is_directory(path)) file = (fs::path(path) / "population.jsonl").string();
    const auto text = read_file(file);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("nodes")) {
        const auto g = from_json_value(j);
        return {fs::path(path).filename().string(), graph_stats(g), 1};
    }
    std::istringstream is(text);
    const auto entries = read_log(is);
    std::vector<const Individual*> evaluated;
    for (const auto& [ind, admitted] : entries)
        if (ind.status == Status::Evaluated) evaluated.push_back(&ind);
    if (evaluated.empty()) throw ValidationError(path + ": no evaluated individuals");
    std::vector<const Individual*> chosen;
    if (selector == "best") {
        std::stable_sort(evaluated.begin(), evaluated.end(), [](const Individual* a, const Individual* b) {
            if (a->score() != b->score()) return a->score() > b->score();
            return a->eval_seq < b->eval_seq;
        });
        chosen.assign(evaluated.begin(), evaluated.begin() + static_cast<std::ptrdiff_t>(std::min(k, evaluated.size())));
    } else if (selector == "last") {
        chosen.assign(evaluated.end() - static_cast<std::ptrdiff_t>(std::min(k, evaluated.size())), evaluated.end());
    } else {
        throw UsageError("selector must be best or last, got " + selector);
    }
    std::vector<StatsInput> in;
    for (const auto* ind : chosen) in.push_back({&ind->topology, ind->generation});
    return {fs::path(path).filename().string() + " (" + selector + " " + std::to_string(chosen.size()) + ")", population_stats(in),
            chosen.size()};
}

int run_analyze(const AnalyzeArgs& a) {
    if (a.paths.empty()) throw UsageError("analyze needs at least one input");
    if (a.select.size() != 1 && a.select.size() != a.paths.size()) throw UsageError("--select takes one value or one per input");
    std::vector<Column> cols;
    for (std::size_t i = 0; i < a.paths.size(); ++i) cols.push_back(analyze_input(a.paths[i], a.select[a.select.size() == 1 ? 0 : i], a.k));

    auto fmt = [](double v) {
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(4) << v;
        return ss.str();
    };
    if (a.format == "csv") {
        std::cout << "metric";
        for (const auto& c : cols) std::cout << ",\"" << c.label << '"';
        std::cout << '\n';
        for (std::size_t r = 0; r < kStatsRows.size(); ++r) {
            std::cout << kStatsRows[r];
            for (const auto& c : cols) std::cout << ',' << fmt(stats_values(c.stats)[r]);
            std::cout << '\n';
        }
        return 0;
    }
    if (a.format != "text") throw UsageError("--format must be text or csv");
    std::size_t width = 16;
    for (const auto& c : cols) width = std::max(width, c.label.size() + 2);
    std::cout << std::left << std::setw(16) << "";
    for (const auto& c : cols) std::cout << std::right << std::setw(static_cast<int>(width)) << c.label;
    std::cout << '\n';
    for (std::size_t r = 0; r < kStatsRows.size(); ++r) {
        std::cout << std::left << std::setw(16) << kStatsRows[r];
        for (const auto& c : cols) std::cout << std::right << std::setw(static_cast<int>(width)) << fmt(stats_values(c.stats)[r]);
        std::cout << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// construct

struct ConstructArgs {
    std::string family, block, skip = "none", out;
    std::vector<int> pool{2, 4, 6};
    int count = 7, channels = 0, input_size = 32, input_channels = 3, classes = 10;
    bool dot = false, check = false;
};

int run_check(const std::string& highlight) {
    std::cout << std::left << std::setw(10) << "network" << std::right << std::setw(10) << "shortest" << std::setw(11) << "published"
              << std::setw(8) << "depth" << std::setw(11) << "published" << '\n';
    std::map<std::string, int> shortest;
    for (const auto& name : evo_family_names()) {
        const auto g = evo_family(name);
        const auto pub = published_distances(name);
        shortest[name] = shortest_distance(g);
        std::cout << std::left << std::setw(10) << name << std::right << std::setw(10) << shortest[name] << std::setw(11) << pub.shortest
                  << std::setw(8) << longest_distance(g) << std::setw(11) << pub.depth << (name == highlight ? "  <" : "") << '\n';
    }
    std::cout << "(distances in edges by breadth-first search and longest-path DP; published values listed for comparison only)\n";
    bool ok = true;
    for (const std::string fam : {"EVO-44", "EVO-91"}) {
        const int n = shortest[fam], a = shortest[fam + "a"], b = shortest[fam + "b"];
        const bool holds = n > a && a > b;
        const auto pub_n = published_distances(fam).shortest, pub_a = published_distances(fam + "a").shortest,
                   pub_b = published_distances(fam + "b").shortest;
        std::cout << fam << " shortest none > adjacent > dense: " << n << " > " << a << " > " << b << (holds ? "  holds" : "  VIOLATED")
                  << "  (published " << pub_n << " > " << pub_a << " > " << pub_b << ")\n";
        ok = ok && holds;
    }
    const bool dense_equal = shortest["EVO-44b"] == shortest["EVO-91b"];
    std::cout << "EVO-44b and EVO-91b shortest equal: " << (dense_equal ? "yes" : "no") << '\n';
    std::set<int> dense;
    for (int count = 2; count <= 15; ++count) {
        StackPlan p;
        p.block = default_block();
        p.count = count;
        p.skip = SkipMode::Dense;
        dense.insert(shortest_distance(stack(p)));
    }
    std::cout << "dense shortest constant over 2..15 blocks: " << (dense.size() == 1 ? "yes (" + std::to_string(*dense.begin()) + ")" : "no")
              << '\n';
    return ok && dense_equal && dense.size() == 1 ? 0 : kExitFailure;
}

int run_construct(const ConstructArgs& a, CLI::App& cmd) {
    if (a.check) return run_check(a.family);
    StackPlan plan;
    if (!a.family.empty()) {
        if (cmd.get_option("--block")->count() || cmd.get_option("--count")->count() || cmd.get_option("--skip")->count() ||
            cmd.get_option("--pool")->count())
            throw UsageError("--family cannot be combined with --block, --count, --skip or --pool");
        plan = evo_plan(a.family);
    } else {
        if (!a.block.empty()) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(a.block));
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("block " + a.block + ": " + e.what());
            }
            plan.block = block_from_json(j);
        } else {
            plan.block = default_block();
        }
        plan.count = a.count;
        try {
            plan.skip = skip_mode_from_string(a.skip);
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
        plan.pooling_blocks = std::set<int>(a.pool.begin(), a.pool.end());
        // The default pooling positions are trimmed to fit a shorter stack.
        if (!cmd.get_option("--pool")->count()) std::erase_if(plan.pooling_blocks, [&](int b) { return b >= a.count; });
    }
    if (a.channels > 0) plan.block = with_channels(plan.block, a.channels);
    plan.input = {a.input_size, a.input_size, a.input_channels};
    plan.num_classes = a.classes;
    const auto g = stack(plan);
    if (!a.out.empty()) {
        write_file(a.out + ".json", to_json(g, 2) + "\n");
        write_file(a.out + ".dot", to_dot(g));
        std::cerr << "wrote " << a.out << ".json and " << a.out << ".dot (" << g.nodes().size() << " nodes, " << g.edges().size()
                  << " edges, shortest " << shortest_distance(g) << ", depth " << longest_distance(g) << ")\n";
    } else {
        std::cout << (a.dot ? to_dot(g) : to_json(g, 2) + "\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string topology, dataset, optimizer = "adam";
    double lr = 0.001, dropout = 0.0, val_fraction = 0.25, noise = 0.15;
    int batch = 32, epochs = 1, n = 2000;
    std::size_t max_steps = 1000, max_params = 200000;
};

int run_train(const TrainArgs& a, std::uint64_t seed) {
    const auto g = load_topology(a.topology);
    Dataset ds;
    if (a.dataset.empty()) {
        const auto& in = g.input_shape();
        ds = generate_synthetic({g.num_classes(), in.height, a.n, in.channels, a.noise, seed});
    } else {
        ds = read_dataset(a.dataset);
    }
    const auto data = split_dataset(ds, a.val_fraction);
    TrainingHyperparams hp;
    hp.learning_rate = a.lr;
    hp.batch_size = a.batch;
    hp.dropout = a.dropout;
    try {
        hp.optimizer = optimizer_from_string(a.optimizer);
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    }
    const TrainBudget budget{a.max_steps, a.max_params, a.epochs};
    std::mt19937_64 rng(seed);
    auto w = init_weights<float>(g, rng);
    const auto [trained, stats] = train<float>(g, std::move(w), data, hp, budget, rng);
    nlohmann::ordered_json j{{"params", param_count(g)},
                             {"steps_run", stats.steps_run},
                             {"final_train_loss", stats.final_train_loss},
                             {"train_acc", stats.train_acc},
                             {"val_acc", stats.val_acc},
                             {"score", Fitness{stats.train_acc, stats.val_acc}.score()},
                             {"wall_fraction_used", stats.wall_fraction_used}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
    std::string topology;
    int graphs = 20, batch = 3, max_conv = 6;
    double tol = 1e-4;
};

Batch<double> random_batch(const TopologyGraph& g, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, g.num_classes() - 1);
    const auto& in = g.input_shape();
    Batch<double> b;
    b.images.resize(static_cast<std::size_t>(n) * in.height * in.width * in.channels);
    for (auto& v : b.images) v = pixel(rng);
    for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
    return b;
}

WeightBundle<double> random_weights(const TopologyGraph& g, std::mt19937_64& rng) {
    auto w = init_weights<double>(g, rng);
    std::normal_distribution<double> bias(0.0, 0.1);
    for (auto& [_, b] : w.biases)
        for (auto& v : b) v = bias(rng);
    return w;
}

int run_gradcheck(const GradcheckArgs& a, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TopologyGraph> graphs;
    if (!a.topology.empty()) {
        graphs.push_back(load_topology(a.topology));
    } else {
        const auto keep = [&](const TopologyGraph& g) { return static_cast<int>(g.conv_count()) <= a.max_conv && param_count(g) <= 4000; };
        for (int i = 0; i < a.graphs; ++i)
            graphs.push_back(random_walk(new_minimal({8, 8, 2}, 3, 2, rng()), 2 + i % 8, rng, keep));
    }
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    std::cout << std::left << std::setw(6) << "graph" << std::right << std::setw(7) << "nodes" << std::setw(7) << "edges" << std::setw(8)
              << "params" << std::setw(9) << "checked" << std::setw(9) << "skipped" << std::setw(14) << "max rel err" << '\n';
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const auto& g = graphs[i];
        const auto r = gradient_check(g, random_weights(g, rng), random_batch(g, a.batch, rng));
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
        std::cout << std::left << std::setw(6) << i << std::right << std::setw(7) << g.nodes().size() << std::setw(7) << g.edges().size()
                  << std::setw(8) << param_count(g) << std::setw(9) << r.checked << std::setw(9) << r.skipped << std::setw(14)
                  << std::scientific << std::setprecision(2) << r.max_rel_error << std::defaultfloat << '\n';
    }
    std::cout << "max relative error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat << " over " << graphs.size()
              << " graphs, " << checked << " coordinates (" << skipped << " skipped at kinks); tolerance " << a.tol << ": "
              << (worst <= a.tol ? "PASS" : "FAIL") << '\n';
    return worst <= a.tol ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------
// gendata

struct GendataArgs {
    SyntheticOptions opt;
    std::string out;
};

int run_gendata(GendataArgs a, std::uint64_t seed) {
    a.opt.seed = seed;
    const auto ds = generate_synthetic(a.opt);
    write_dataset(a.out, ds);
    std::cout << "wrote " << ds.size() << " images of " << ds.height << "x" << ds.width << "x" << ds.channels << ", " << ds.classes
              << " classes to " << a.out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolutionary search over convolutional network topologies"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 1;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed shared by every subcommand")->capture_default_str();

    EvolveArgs ev;
    auto* evolve = app.add_subcommand("evolve", "Run an evolution and write log, snapshot and best topology");
    evolve->add_option("--config", ev.config, "JSON run configuration; flags override its keys")->check(CLI::ExistingFile);
    evolve->add_option("--backend", ev.backend, "Fitness backend: micro (train a small CNN) or surrogate (closed form)");
    evolve->add_option("--selection", ev.selection, "Parent selection: boltzmann (rank-weighted) or random (uniform)");
    evolve->add_option("--lambda", ev.lambda, "Rank-selection temperature");
    evolve->add_option("--capacity", ev.capacity, "Population size");
    evolve->add_option("--workers", ev.workers, "Concurrent evaluations; 1 gives a reproducible log");
    evolve->add_option("--max-evals", ev.max_evals, "Hard cap on evaluations, seed included");
    evolve->add_option("--max-params", ev.max_params, "Parameter budget; larger offspring are discarded");
    evolve->add_option("--max-steps", ev.max_steps, "Optimizer step cap per individual");
    evolve->add_option("--window", ev.window, "Stop after this many evaluations without improvement");
    evolve->add_option("--epsilon", ev.epsilon, "Minimum best-score gain that counts as improvement");
    evolve->add_option("--inherit", ev.inherit, "Initialization of new weights: random or preserving (zero)");
    evolve->add_option("--dataset", ev.dataset, "Dataset file instead of the synthetic generator")->check(CLI::ExistingFile);
    evolve->add_option("--resume", ev.resume, "Continue from a snapshot")->check(CLI::ExistingFile);
    evolve->add_option("--out", ev.out, "Output directory")->capture_default_str();
    evolve->add_flag("--quiet", ev.quiet, "No progress lines on stderr");

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Graph statistics of topology files or population logs, one column per input");
    analyze->add_option("paths", an.paths, "Topology JSON files, population logs, or evolve output directories")->required();
    analyze->add_option("--format", an.format, "text or csv")->capture_default_str();
    analyze->add_option("--select", an.select, "For logs: best (top-K by score) or last (last K evaluated); one value or one per input")
        ->delimiter(',');
    analyze->add_option("-k,--top", an.k, "K for the selectors")->capture_default_str();

    ConstructArgs co;
    auto* construct = app.add_subcommand("construct", "Build a network by stacking a building block");
    construct->add_option("--family", co.family, "Preset: EVO-44, EVO-44a, EVO-44b, EVO-91, EVO-91a, EVO-91b");
    construct->add_option("--block", co.block, "Block JSON (default: built-in six-node block)")->check(CLI::ExistingFile);
    construct->add_option("--count", co.count, "Number of blocks")->capture_default_str();
    construct->add_option("--skip", co.skip, "Cross-block skips: none, adjacent or dense")->capture_default_str();
    construct->add_option("--pool", co.pool, "1-based blocks whose output node max-pools")->delimiter(',')->capture_default_str();
    construct->add_option("--channels", co.channels, "Override every block node's channel count");
    construct->add_option("--input-size", co.input_size, "Input side length")->capture_default_str();
    construct->add_option("--input-channels", co.input_channels, "Input channels")->capture_default_str();
    construct->add_option("--classes", co.classes, "Number of classes")->capture_default_str();
    construct->add_option("--out", co.out, "Write PREFIX.json and PREFIX.dot instead of printing");
    construct->add_flag("--dot", co.dot, "Print Graphviz DOT instead of JSON");
    construct->add_flag("--check", co.check, "Compare computed distances of the six presets with published ones");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a topology for a budgeted epoch and report accuracies");
    train_cmd->add_option("--topology", tr.topology, "Topology JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--dataset", tr.dataset, "Dataset file (default: synthetic data matching the topology)")->check(CLI::ExistingFile);
    train_cmd->add_option("--n", tr.n, "Synthetic sample count")->capture_default_str();
    train_cmd->add_option("--noise", tr.noise, "Synthetic noise level")->capture_default_str();
    train_cmd->add_option("--val-fraction", tr.val_fraction, "Validation share (tail of the data)")->capture_default_str();
    train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
    train_cmd->add_option("--optimizer", tr.optimizer, "sgd_momentum, adam or rmsprop")->capture_default_str();
    train_cmd->add_option("--dropout", tr.dropout, "Dropout rate on fully-connected inputs")->capture_default_str();
    train_cmd->add_option("--epochs", tr.epochs, "Passes over the training split")->capture_default_str();
    train_cmd->add_option("--max-steps", tr.max_steps, "Optimizer step cap")->capture_default_str();
    train_cmd->add_option("--max-params", tr.max_params, "Parameter budget")->capture_default_str();

    GradcheckArgs gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare backprop gradients with central finite differences");
    gradcheck->add_option("--topology", gc.topology, "Check this topology instead of random ones")->check(CLI::ExistingFile);
    gradcheck->add_option("--graphs", gc.graphs, "Number of random graphs")->capture_default_str();
    gradcheck->add_option("--max-conv", gc.max_conv, "Largest conv node count of random graphs")->capture_default_str();
    gradcheck->add_option("--batch", gc.batch, "Images per check")->capture_default_str();
    gradcheck->add_option("--tol", gc.tol, "Pass threshold on max relative error")->capture_default_str();

    GendataArgs gd;
    auto* gendata = app.add_subcommand("gendata", "Write a synthetic image-classification dataset");
    gendata->add_option("--classes", gd.opt.classes, "Classes")->capture_default_str();
    gendata->add_option("--size", gd.opt.size, "Image side length")->capture_default_str();
    gendata->add_option("--n", gd.opt.count, "Number of images")->capture_default_str();
    gendata->add_option("--channels", gd.opt.channels, "Image channels")->capture_default_str();
    gendata->add_option("--noise", gd.opt.noise, "Gaussian pixel noise")->capture_default_str();
    gendata->add_option("--out", gd.out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*evolve) return run_evolve(ev, *evolve, seed_opt, seed);
        if (*analyze) return run_analyze(an);
        if (*construct) return run_construct(co, *construct);
        if (*train_cmd) return run_train(tr, seed);
        if (*gradcheck) return run_gradcheck(gc, seed);
        if (*gendata) return run_gendata(gd, seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const BudgetExceeded& e) {
        std::cerr << "discarded: " << e.what() << '\n';
        return kExitBudget;
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitValidation;
    } catch (const CorruptionError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
