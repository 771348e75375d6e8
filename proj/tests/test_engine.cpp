#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "topoevo/topoevo.hpp"

using namespace topoevo;

namespace {

RunConfig surrogate_config(std::size_t evals, std::uint64_t seed = 3) {
    RunConfig c;
    c.backend = Backend::Surrogate;
    c.capacity = 50;
    c.lambda = 0.2;
    c.max_concurrent = 1;
    c.max_evals = evals;
    c.window = 100000;
    c.seed = seed;
    c.data = {4, 16, 64, 1, 0.2, 1};
    c.budget.max_params = 50000;
    return c;
}

RunConfig micro_config(std::size_t evals, std::uint64_t seed = 5) {
    RunConfig c;
    c.backend = Backend::Micro;
    c.capacity = 10;
    c.lambda = 0.5;
    c.max_concurrent = 1;
    c.max_evals = evals;
    c.window = 100000;
    c.seed = seed;
    c.data = {3, 8, 60, 1, 0.2, 2};
    c.val_fraction = 0.25;
    c.budget = {20, 4000, 1};
    return c;
}

} // namespace

TEST(Engine, SeedThenFirstChild) {
    auto cfg = surrogate_config(2);
    PopulationStore store(cfg.capacity);
    const auto seed = seed_population(store, cfg, nullptr);
    EXPECT_EQ(seed.individual->id, 0u);
    EXPECT_EQ(seed.individual->generation, 0);
    EXPECT_FALSE(seed.individual->parent_id);
    EXPECT_NEAR(seed.individual->score(), 0.3471, 5e-5);
    const auto child = worker_step(store, cfg, nullptr, 1);
    EXPECT_EQ(child.individual->generation, 1);
    EXPECT_EQ(child.individual->parent_id, std::optional<std::uint64_t>(0));
    EXPECT_EQ(child.individual->eval_seq, 1u);
    ASSERT_TRUE(child.individual->mutation);
    EXPECT_TRUE(validate(child.individual->topology).valid);
    EXPECT_EQ(child.individual->topology_hash, canonical_hash(child.individual->topology));
}

TEST(Engine, OverBudgetChildrenAreLoggedButNotAdmitted) {
    auto cfg = surrogate_config(150);
    cfg.budget.max_params = 5000;  // the 16x16 seed needs 4136
    const auto r = run_evolution(cfg);
    std::size_t discarded = 0;
    for (const auto& e : r.store->log()) {
        if (e.individual->status != Status::Discarded) continue;
        ++discarded;
        EXPECT_FALSE(e.admitted);
        EXPECT_FALSE(e.individual->note.empty());
        EXPECT_FALSE(e.individual->fitness);
    }
    EXPECT_GT(discarded, 0u);
    for (const auto& m : r.store->members()) {
        EXPECT_EQ(m.individual->status, Status::Evaluated);
        EXPECT_LE(param_count(m.individual->topology), cfg.budget.max_params);
    }
}

TEST(Engine, SingleWorkerRunsAreDeterministic) {
    const auto a = run_evolution(surrogate_config(300));
    const auto b = run_evolution(surrogate_config(300));
    EXPECT_EQ(log_lines(*a.store), log_lines(*b.store));
    const auto c = run_evolution(surrogate_config(300, 4));
    EXPECT_NE(log_lines(*a.store), log_lines(*c.store));
    const auto m1 = run_evolution(micro_config(12));
    const auto m2 = run_evolution(micro_config(12));
    EXPECT_EQ(log_lines(*m1.store), log_lines(*m2.store));
}

TEST(Engine, SurrogateSearchImproves) {
    const auto r = run_evolution(surrogate_config(2000));
    const auto log = r.store->log();
    ASSERT_EQ(log.size(), 2000u);
    EXPECT_GT(r.store->best_score(), log.front().individual->score() + 0.15);
    EXPECT_EQ(r.stop, StopReason::EvaluationCap);
}

TEST(Engine, StopsOnStagnation) {
    auto cfg = surrogate_config(5000);
    cfg.epsilon = 10.0;  // nothing after the seed can count as an improvement
    cfg.window = 40;
    const auto r = run_evolution(cfg);
    EXPECT_EQ(r.stop, StopReason::Stagnation);
    EXPECT_LE(r.store->log_size(), cfg.window + 1);
}

TEST(Engine, LineageAndCapacity) {
    auto cfg = surrogate_config(600);
    cfg.capacity = 20;
    const auto r = run_evolution(cfg);
    std::map<std::uint64_t, int> gen;
    std::uint64_t expected = 0;
    for (const auto& e : r.store->log()) {
        const auto& ind = *e.individual;
        EXPECT_EQ(ind.id, expected);
        EXPECT_EQ(ind.eval_seq, expected);
        ++expected;
        if (ind.parent_id) {
            ASSERT_TRUE(gen.count(*ind.parent_id)) << "parent must precede child";
            EXPECT_EQ(ind.generation, gen.at(*ind.parent_id) + 1);
        }
        gen[ind.id] = ind.generation;
    }
    const auto members = r.store->members();
    EXPECT_EQ(members.size(), cfg.capacity);
    for (std::size_t i = 1; i < members.size(); ++i) EXPECT_GE(members[i - 1].score(), members[i].score());
}

TEST(Engine, ParallelWorkersFillTheBudget) {
    auto cfg = surrogate_config(400);
    cfg.max_concurrent = 4;
    const auto r = run_evolution(cfg);
    const auto log = r.store->log();
    ASSERT_EQ(log.size(), 400u);
    std::set<std::uint64_t> ids;
    for (const auto& e : log) ids.insert(e.individual->id);
    EXPECT_EQ(ids.size(), 400u);
    EXPECT_EQ(*ids.rbegin(), 399u);
}

TEST(Snapshot, RoundTripIsExact) {
    const auto r = run_evolution(micro_config(15));
    const auto text = snapshot(*r.store);
    const auto back = restore(text);
    EXPECT_EQ(snapshot(back), text);
    EXPECT_EQ(log_lines(back), log_lines(*r.store));
    const auto a = r.store->members(), b = back.members();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(*a[i].individual, *b[i].individual);
        ASSERT_TRUE(a[i].weights && b[i].weights);
        EXPECT_EQ(*a[i].weights, *b[i].weights);
    }
}

TEST(Snapshot, DetectsCorruption) {
    const auto text = snapshot(*run_evolution(surrogate_config(30)).store);
    auto tampered = text;
    const auto pos = tampered.find("\\\"gen\\\":1");
    ASSERT_NE(pos, std::string::npos);
    tampered[pos + 8] = '2';
    EXPECT_THROW(restore(tampered), CorruptionError);
    EXPECT_THROW(restore(text.substr(0, text.size() / 2)), CorruptionError);
    EXPECT_THROW(restore("{\"format\":\"other\"}"), CorruptionError);
}

TEST(Snapshot, ResumedRunMatchesUninterruptedRun) {
    const auto full = run_evolution(surrogate_config(500));
    const auto half = run_evolution(surrogate_config(250));
    auto resumed_store = std::make_shared<PopulationStore>(restore(snapshot(*half.store)));
    EXPECT_EQ(resumed_store->next_seq(), 250u);
    const auto resumed = run_evolution(surrogate_config(500), resumed_store);
    EXPECT_EQ(log_lines(*resumed.store), log_lines(*full.store));

    const auto mfull = run_evolution(micro_config(14));
    const auto mhalf = run_evolution(micro_config(7));
    auto mstore = std::make_shared<PopulationStore>(restore(snapshot(*mhalf.store)));
    EXPECT_EQ(log_lines(*run_evolution(micro_config(14), mstore).store), log_lines(*mfull.store));
}

TEST(Log, LinesParseBackToIndividuals) {
    const auto r = run_evolution(micro_config(10));
    std::istringstream is(log_lines(*r.store));
    const auto parsed = read_log(is);
    const auto log = r.store->log();
    ASSERT_EQ(parsed.size(), log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        EXPECT_EQ(parsed[i].first, *log[i].individual);
        EXPECT_EQ(parsed[i].second, log[i].admitted);
    }
    std::istringstream bad("{\"id\": 1}\n");
    EXPECT_THROW(read_log(bad), ParseError);
}

TEST(Selectors, BestAndLastK) {
    const auto r = run_evolution(surrogate_config(200));
    const auto best = best_k(*r.store, 10);
    ASSERT_EQ(best.size(), 10u);
    EXPECT_GE(best.front().score(), r.store->best_score());
    const auto log = r.store->log();
    const auto last = last_k(log, 25);
    ASSERT_EQ(last.size(), 25u);
    for (const auto& ind : last) EXPECT_EQ(ind->status, Status::Evaluated);
    for (auto it = log.rbegin(); it != log.rend(); ++it)
        if (it->individual->status == Status::Evaluated) {
            EXPECT_EQ(last.back()->id, it->individual->id);
            break;
        }
    for (std::size_t i = 1; i < last.size(); ++i) EXPECT_LT(last[i - 1]->id, last[i]->id);
}

TEST(Config, JsonRoundTripAndValidation) {
    auto c = micro_config(77, 9);
    c.selection = SelectionMode::Random;
    c.inherit = InheritMode::Preserving;
    const auto j = config_to_json(c);
    const auto back = config_from_json(nlohmann::ordered_json::parse(j.dump()));
    EXPECT_EQ(config_to_json(back).dump(), j.dump());
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"capacty": 3})")), ParseError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"data": {"colour": 1}})")), ParseError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"selection": "tournament"})")), ParseError);
    auto bad = c;
    bad.lambda = 0;
    EXPECT_THROW(check_config(bad), ValidationError);
    bad = c;
    bad.data.size = 12;
    EXPECT_THROW(check_config(bad), ValidationError);
}
