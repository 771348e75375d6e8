#pragma once

/// @file engine.hpp
/// Population store, individual lifecycle, worker pool, stagnation stopping,
/// the JSON-lines population log and checksummed snapshots.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "topoevo/analysis.hpp"
#include "topoevo/dataset.hpp"
#include "topoevo/knowledge.hpp"
#include "topoevo/mutation.hpp"
#include "topoevo/selection.hpp"
#include "topoevo/sha256.hpp"
#include "topoevo/topology.hpp"
#include "topoevo/train.hpp"

namespace topoevo {

enum class Status { Pending, Evaluated, Discarded };
enum class Backend { Micro, Surrogate };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::Pending: return "pending";
    case Status::Evaluated: return "evaluated";
    case Status::Discarded: return "discarded";
    }
    return "?";
}

inline Status status_from_string(std::string_view s) {
    if (s == "pending") return Status::Pending;
    if (s == "evaluated") return Status::Evaluated;
    if (s == "discarded") return Status::Discarded;
    throw ParseError("unknown status: " + std::string(s));
}

inline const char* to_string(Backend b) { return b == Backend::Micro ? "micro" : "surrogate"; }
inline Backend backend_from_string(std::string_view s) {
    if (s == "micro") return Backend::Micro;
    if (s == "surrogate") return Backend::Surrogate;
    throw ParseError("unknown backend: " + std::string(s));
}

inline const char* to_string(SelectionMode m) { return m == SelectionMode::Boltzmann ? "boltzmann" : "random"; }
inline SelectionMode selection_from_string(std::string_view s) {
    if (s == "boltzmann") return SelectionMode::Boltzmann;
    if (s == "random") return SelectionMode::Random;
    throw ParseError("unknown selection mode: " + std::string(s));
}

inline const char* to_string(InheritMode m) { return m == InheritMode::Random ? "random" : "preserving"; }
inline InheritMode inherit_mode_from_string(std::string_view s) {
    if (s == "random") return InheritMode::Random;
    if (s == "preserving") return InheritMode::Preserving;
    throw ParseError("unknown inheritance mode: " + std::string(s));
}

struct Individual {
    std::uint64_t id = 0;
    std::optional<std::uint64_t> parent_id;
    int generation = 0;
    TopologyGraph topology;
    std::string topology_hash;
    HyperparamChoice hyperparams;
    std::optional<Fitness> fitness;
    std::optional<MutationRecord> mutation;  // empty for the seed
    Status status = Status::Pending;
    std::uint64_t eval_seq = 0;
    std::string note;  // why a discarded individual was discarded

    [[nodiscard]] double score() const noexcept {
        return fitness ? fitness->score() : -std::numeric_limits<double>::infinity();
    }
    friend bool operator==(const Individual&, const Individual&) = default;
};

struct RunConfig {
    std::size_t capacity = 1000;
    int max_concurrent = 8;
    double lambda = 0.01;
    SelectionMode selection = SelectionMode::Boltzmann;
    Backend backend = Backend::Micro;
    InheritMode inherit = InheritMode::Random;
    TrainBudget budget;
    std::uint64_t seed = 1;
    double epsilon = 1e-3;
    std::size_t window = 500;
    std::size_t max_evals = 2000;
    int initial_channels = kDefaultInitialChannels;
    int retry_cap = kDefaultRetryCap;
    HyperparamSpace space = default_hyperparam_space();
    SyntheticOptions data;
    std::string dataset_path;  // overrides the synthetic generator when set
    double val_fraction = 0.25;
};

inline void check_config(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw ValidationError("invalid run configuration: " + m); };
    if (c.capacity < 1) fail("capacity must be positive");
    if (c.max_concurrent < 1) fail("max_concurrent must be positive");
    if (!(c.lambda > 0.0)) fail("lambda must be positive");
    if (c.budget.max_steps < 1 || c.budget.max_params < 1 || c.budget.epochs < 1) fail("budgets must be positive");
    if (!(c.epsilon > 0.0)) fail("epsilon must be positive");
    if (c.window < 1) fail("window must be positive");
    if (c.max_evals < 1) fail("max_evals must be positive");
    if (c.initial_channels < 1) fail("initial_channels must be positive");
    if (c.retry_cap < 1) fail("retry_cap must be positive");
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) fail("val_fraction must be in (0, 1)");
    if (c.space.empty()) fail("hyperparameter space is empty");
    for (const auto& p : c.space)
        if (p.values.empty()) fail("hyperparameter '" + p.name + "' has no values");
    if (c.dataset_path.empty()) {
        if (c.data.classes < 2 || c.data.count < 2 || c.data.channels < 1 || !is_power_of_two(c.data.size)) fail("invalid synthetic data options");
    }
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
    nlohmann::ordered_json space = nlohmann::ordered_json::object();
    for (const auto& p : c.space) {
        auto& arr = space[p.name] = nlohmann::ordered_json::array();
        for (const auto& v : p.values) arr.push_back(nlohmann::ordered_json::parse(v.dump()));
    }
    return {
        {"capacity", c.capacity},
        {"workers", c.max_concurrent},
        {"lambda", c.lambda},
        {"selection", to_string(c.selection)},
        {"backend", to_string(c.backend)},
        {"inherit", to_string(c.inherit)},
        {"max_steps", c.budget.max_steps},
        {"max_params", c.budget.max_params},
        {"epochs", c.budget.epochs},
        {"seed", c.seed},
        {"epsilon", c.epsilon},
        {"window", c.window},
        {"max_evals", c.max_evals},
        {"initial_channels", c.initial_channels},
        {"retry_cap", c.retry_cap},
        {"hyperparams", space},
        {"data",
         {{"classes", c.data.classes},
          {"size", c.data.size},
          {"count", c.data.count},
          {"channels", c.data.channels},
          {"noise", c.data.noise},
          {"seed", c.data.seed},
          {"path", c.dataset_path},
          {"val_fraction", c.val_fraction}}},
    };
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
template <typename Json>
RunConfig config_from_json(const Json& j, RunConfig c = {}) {
    if (!j.is_object()) throw ParseError("run configuration must be a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = it.value();
            if (k == "capacity") c.capacity = v.template get<std::size_t>();
            else if (k == "workers") c.max_concurrent = v.template get<int>();
            else if (k == "lambda") c.lambda = v.template get<double>();
            else if (k == "selection") c.selection = selection_from_string(v.template get<std::string>());
            else if (k == "backend") c.backend = backend_from_string(v.template get<std::string>());
            else if (k == "inherit") c.inherit = inherit_mode_from_string(v.template get<std::string>());
            else if (k == "max_steps") c.budget.max_steps = v.template get<std::size_t>();
            else if (k == "max_params") c.budget.max_params = v.template get<std::size_t>();
            else if (k == "epochs") c.budget.epochs = v.template get<int>();
            else if (k == "seed") c.seed = v.template get<std::uint64_t>();
            else if (k == "epsilon") c.epsilon = v.template get<double>();
            else if (k == "window") c.window = v.template get<std::size_t>();
            else if (k == "max_evals") c.max_evals = v.template get<std::size_t>();
            else if (k == "initial_channels") c.initial_channels = v.template get<int>();
            else if (k == "retry_cap") c.retry_cap = v.template get<int>();
            else if (k == "hyperparams") c.space = space_from_json(v);
            else if (k == "data") {
                for (auto d = v.begin(); d != v.end(); ++d) {
                    const auto& dk = d.key();
                    const auto& dv = d.value();
                    if (dk == "classes") c.data.classes = dv.template get<int>();
                    else if (dk == "size") c.data.size = dv.template get<int>();
                    else if (dk == "count") c.data.count = dv.template get<int>();
                    else if (dk == "channels") c.data.channels = dv.template get<int>();
                    else if (dk == "noise") c.data.noise = dv.template get<double>();
                    else if (dk == "seed") c.data.seed = dv.template get<std::uint64_t>();
                    else if (dk == "path") c.dataset_path = dv.template get<std::string>();
                    else if (dk == "val_fraction") c.val_fraction = dv.template get<double>();
                    else throw ParseError("unknown data key: " + dk);
                }
            } else {
                throw ParseError("unknown configuration key: " + k);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("run configuration: ") + e.what());
    }
    return c;
}

/// Training and validation splits described by the configuration.
inline DataSplits load_data(const RunConfig& c) {
    const Dataset ds = c.dataset_path.empty() ? generate_synthetic(c.data) : read_dataset(c.dataset_path);
    return split_dataset(ds, c.val_fraction);
}

inline InputShape config_input_shape(const RunConfig& c, const DataSplits* data) {
    if (data) return data->train.shape();
    return {c.data.size, c.data.size, c.data.channels};
}

// ---------------------------------------------------------------------------
// Serialization of individuals

namespace detail {

template <typename Id>
nlohmann::ordered_json id_list(const std::vector<Id>& ids) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& id : ids) a.push_back(id.to_hex());
    return a;
}

template <typename Id, typename Json>
std::vector<Id> id_list_from(const Json& j) {
    std::vector<Id> out;
    for (const auto& s : j) out.push_back(Id::from_hex(s.template get<std::string>()));
    return out;
}

} // namespace detail

inline nlohmann::ordered_json mutation_to_json(const MutationRecord& r) {
    return {
        {"kind", std::string(to_string(r.kind))},
        {"attempts", r.attempts},
        {"target_nodes", detail::id_list(r.target_nodes)},
        {"target_edges", detail::id_list(r.target_edges)},
        {"created_nodes", detail::id_list(r.created_nodes)},
        {"created_edges", detail::id_list(r.created_edges)},
        {"removed_nodes", detail::id_list(r.removed_nodes)},
        {"removed_edges", detail::id_list(r.removed_edges)},
    };
}

template <typename Json>
MutationRecord mutation_from_json(const Json& j) {
    MutationRecord r;
    r.kind = mutation_kind_from_string(j.at("kind").template get<std::string>());
    r.attempts = j.at("attempts").template get<int>();
    r.target_nodes = detail::id_list_from<NodeId>(j.at("target_nodes"));
    r.target_edges = detail::id_list_from<EdgeId>(j.at("target_edges"));
    r.created_nodes = detail::id_list_from<NodeId>(j.at("created_nodes"));
    r.created_edges = detail::id_list_from<EdgeId>(j.at("created_edges"));
    r.removed_nodes = detail::id_list_from<NodeId>(j.at("removed_nodes"));
    r.removed_edges = detail::id_list_from<EdgeId>(j.at("removed_edges"));
    return r;
}

/// One population-log object. Key order is fixed so logs compare byte-for-byte.
inline nlohmann::ordered_json to_log_json(const Individual& ind, const HyperparamSpace& space, bool admitted) {
    using J = nlohmann::ordered_json;
    J j;
    j["id"] = ind.id;
    j["parent"] = ind.parent_id ? J(*ind.parent_id) : J(nullptr);
    j["gen"] = ind.generation;
    j["hash"] = ind.topology_hash;
    j["score"] = ind.fitness ? J(ind.fitness->score()) : J(nullptr);
    j["train_acc"] = ind.fitness ? J(ind.fitness->train_acc) : J(nullptr);
    j["val_acc"] = ind.fitness ? J(ind.fitness->val_acc) : J(nullptr);
    j["hyperparams"] = choice_to_json(space, ind.hyperparams);
    j["mutation"] = ind.mutation ? mutation_to_json(*ind.mutation) : J(nullptr);
    j["status"] = to_string(ind.status);
    j["seq"] = ind.eval_seq;
    j["admitted"] = admitted;
    if (!ind.note.empty()) j["note"] = ind.note;
    j["topology"] = to_json_value(ind.topology);
    return j;
}

template <typename Json>
Individual individual_from_log_json(const Json& j, const HyperparamSpace& space) {
    try {
        Individual ind;
        ind.id = j.at("id").template get<std::uint64_t>();
        if (!j.at("parent").is_null()) ind.parent_id = j.at("parent").template get<std::uint64_t>();
        ind.generation = j.at("gen").template get<int>();
        ind.topology_hash = j.at("hash").template get<std::string>();
        if (!j.at("train_acc").is_null())
            ind.fitness = Fitness{j.at("train_acc").template get<double>(), j.at("val_acc").template get<double>()};
        ind.hyperparams = choice_from_json(space, j.at("hyperparams"));
        if (!j.at("mutation").is_null()) ind.mutation = mutation_from_json(j.at("mutation"));
        ind.status = status_from_string(j.at("status").template get<std::string>());
        ind.eval_seq = j.at("seq").template get<std::uint64_t>();
        if (j.contains("note")) ind.note = j.at("note").template get<std::string>();
        ind.topology = from_json_value(j.at("topology"));
        return ind;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("log entry: ") + e.what());
    }
}

/// Reads a JSON-lines population log; the `admitted` flag of each line is
/// returned alongside the individual.
inline std::vector<std::pair<Individual, bool>> read_log(std::istream& is, const HyperparamSpace& space = default_hyperparam_space()) {
    std::vector<std::pair<Individual, bool>> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("log line: ") + e.what());
        }
        out.emplace_back(individual_from_log_json(j, space), j.value("admitted", false));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Population store

/// A stored individual with its trained weights (absent for the surrogate backend).
struct Member {
    std::shared_ptr<const Individual> individual;
    std::shared_ptr<const WeightBundle<float>> weights;
    std::uint64_t eval_seq = 0;

    [[nodiscard]] double score() const noexcept { return individual->score(); }
};

struct LogEntry {
    std::shared_ptr<const Individual> individual;
    bool admitted = false;
};

/// Elite members plus the append-only evaluation log, guarded by one mutex.
class PopulationStore {
  public:
    explicit PopulationStore(std::size_t capacity) : elites_(capacity) {}

    PopulationStore(PopulationStore&& o) : elites_(o.capacity()) {
        std::lock_guard lock(o.mu_);
        elites_ = std::move(o.elites_);
        log_ = std::move(o.log_);
        next_seq_ = o.next_seq_;
        best_ = o.best_;
        since_improvement_ = o.since_improvement_;
    }

    [[nodiscard]] std::size_t capacity() const { return elites_.capacity(); }

    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mu_);
        return elites_.size();
    }

    [[nodiscard]] std::vector<Member> members() const {
        std::lock_guard lock(mu_);
        auto r = elites_.ranked();
        return {r.begin(), r.end()};
    }

    [[nodiscard]] std::vector<LogEntry> log() const {
        std::lock_guard lock(mu_);
        return log_;
    }

    [[nodiscard]] std::size_t log_size() const {
        std::lock_guard lock(mu_);
        return log_.size();
    }

    [[nodiscard]] std::uint64_t next_seq() const {
        std::lock_guard lock(mu_);
        return next_seq_;
    }

    [[nodiscard]] double best_score() const {
        std::lock_guard lock(mu_);
        return best_;
    }

    [[nodiscard]] std::size_t since_improvement() const {
        std::lock_guard lock(mu_);
        return since_improvement_;
    }

    template <typename Rng>
    Member sample_parent(const SelectionPolicy& policy, Rng& rng) const {
        std::lock_guard lock(mu_);
        return topoevo::sample_parent(elites_.ranked(), policy, rng);
    }

    /// Hyperparameter posterior recomputed from the current members.
    [[nodiscard]] HyperparamPosterior posterior(const HyperparamSpace& space) const {
        std::vector<HyperparamChoice> seen;
        {
            std::lock_guard lock(mu_);
            for (const auto& m : elites_.ranked()) seen.push_back(m.individual->hyperparams);
        }
        return update_posterior(space, seen);
    }

    /// Assigns the next evaluation sequence number, offers evaluated individuals
    /// to the elite set, appends to the log and updates the stagnation counter.
    /// Returns the stored individual and whether it was admitted.
    LogEntry record(Individual ind, std::shared_ptr<const WeightBundle<float>> weights, double epsilon) {
        std::lock_guard lock(mu_);
        ind.eval_seq = next_seq_++;
        auto shared = std::make_shared<const Individual>(std::move(ind));
        bool admitted = false;
        if (shared->status == Status::Evaluated) admitted = elites_.admit(Member{shared, std::move(weights), shared->eval_seq});
        if (shared->status == Status::Evaluated && shared->score() >= best_ + epsilon) {
            best_ = shared->score();
            since_improvement_ = 0;
        } else {
            ++since_improvement_;
        }
        log_.push_back({shared, admitted});
        return log_.back();
    }

    friend nlohmann::ordered_json snapshot_payload(const PopulationStore& s, const HyperparamSpace& space);
    friend PopulationStore restore_payload(const nlohmann::json& payload, const HyperparamSpace& space);

  private:
    mutable std::mutex mu_;
    EliteStore<Member> elites_;
    std::vector<LogEntry> log_;
    std::uint64_t next_seq_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t since_improvement_ = 0;
};

/// The K best members, best first.
inline std::vector<Member> best_k(const PopulationStore& store, std::size_t k) {
    auto m = store.members();
    if (m.size() > k) m.resize(k);
    return m;
}

/// The last K evaluated (trained, not discarded) log entries, oldest first.
inline std::vector<std::shared_ptr<const Individual>> last_k(std::span<const LogEntry> log, std::size_t k) {
    std::vector<std::shared_ptr<const Individual>> out;
    for (auto it = log.rbegin(); it != log.rend() && out.size() < k; ++it)
        if (it->individual->status == Status::Evaluated) out.push_back(it->individual);
    std::reverse(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Snapshots

namespace detail {

inline std::string floats_to_hex(std::span<const float> v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(v.size() * 8);
    for (float f : v) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int shift = 28; shift >= 0; shift -= 4) s.push_back(digits[(bits >> shift) & 0xF]);
    }
    return s;
}

inline std::vector<float> floats_from_hex(std::string_view s) {
    if (s.size() % 8 != 0) throw CorruptionError("snapshot: malformed tensor encoding");
    std::vector<float> v(s.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint32_t bits = 0;
        for (std::size_t d = 0; d < 8; ++d) {
            const char c = s[i * 8 + d];
            int x = c >= '0' && c <= '9' ? c - '0' : c >= 'a' && c <= 'f' ? c - 'a' + 10 : -1;
            if (x < 0) throw CorruptionError("snapshot: malformed tensor encoding");
            bits = (bits << 4) | static_cast<std::uint32_t>(x);
        }
        v[i] = std::bit_cast<float>(bits);
    }
    return v;
}

inline nlohmann::ordered_json weights_to_json(const WeightBundle<float>& w) {
    std::vector<std::pair<std::string, const Tensor<float>*>> edges;
    for (const auto& [id, t] : w.edges) edges.emplace_back(id.to_hex(), &t);
    std::sort(edges.begin(), edges.end());
    std::vector<std::pair<std::string, const std::vector<float>*>> biases;
    for (const auto& [id, b] : w.biases) biases.emplace_back(id.to_hex(), &b);
    std::sort(biases.begin(), biases.end());
    nlohmann::ordered_json j{{"edges", nlohmann::ordered_json::object()}, {"biases", nlohmann::ordered_json::object()}};
    for (const auto& [id, t] : edges) j["edges"][id] = {{"shape", t->shape}, {"data", floats_to_hex(t->data)}};
    for (const auto& [id, b] : biases) j["biases"][id] = floats_to_hex(*b);
    return j;
}

template <typename Json>
WeightBundle<float> weights_from_json(const Json& j) {
    WeightBundle<float> w;
    for (auto it = j.at("edges").begin(); it != j.at("edges").end(); ++it) {
        Tensor<float> t;
        t.shape = it.value().at("shape").template get<std::vector<int>>();
        t.data = floats_from_hex(it.value().at("data").template get<std::string>());
        if (t.data.size() != Tensor<float>::element_count(t.shape)) throw CorruptionError("snapshot: tensor size mismatch");
        w.edges[EdgeId::from_hex(it.key())] = std::move(t);
    }
    for (auto it = j.at("biases").begin(); it != j.at("biases").end(); ++it)
        w.biases[NodeId::from_hex(it.key())] = floats_from_hex(it.value().template get<std::string>());
    return w;
}

} // namespace detail

inline constexpr int kSnapshotVersion = 1;

inline nlohmann::ordered_json snapshot_payload(const PopulationStore& s, const HyperparamSpace& space) {
    std::lock_guard lock(s.mu_);
    using J = nlohmann::ordered_json;
    J log = J::array();
    for (const auto& e : s.log_) log.push_back(to_log_json(*e.individual, space, e.admitted));
    J members = J::array();
    std::vector<HyperparamChoice> seen;
    for (const auto& m : s.elites_.ranked()) {
        members.push_back({{"seq", m.eval_seq}, {"weights", m.weights ? detail::weights_to_json(*m.weights) : J(nullptr)}});
        seen.push_back(m.individual->hyperparams);
    }
    return {
        {"capacity", s.elites_.capacity()},
        {"next_seq", s.next_seq_},
        {"best", std::isfinite(s.best_) ? J(s.best_) : J(nullptr)},
        {"since_improvement", s.since_improvement_},
        {"posterior", update_posterior(space, seen).probs},
        {"members", members},
        {"log", log},
    };
}

inline PopulationStore restore_payload(const nlohmann::json& p, const HyperparamSpace& space) {
    try {
        PopulationStore s(p.at("capacity").get<std::size_t>());
        s.next_seq_ = p.at("next_seq").get<std::uint64_t>();
        if (!p.at("best").is_null()) s.best_ = p.at("best").get<double>();
        s.since_improvement_ = p.at("since_improvement").get<std::size_t>();
        std::unordered_map<std::uint64_t, std::shared_ptr<const Individual>> by_seq;
        for (const auto& line : p.at("log")) {
            auto ind = std::make_shared<const Individual>(individual_from_log_json(line, space));
            by_seq[ind->eval_seq] = ind;
            s.log_.push_back({ind, line.at("admitted").get<bool>()});
        }
        std::vector<Member> members;
        for (const auto& m : p.at("members")) {
            const auto seq = m.at("seq").get<std::uint64_t>();
            auto it = by_seq.find(seq);
            if (it == by_seq.end()) throw CorruptionError("snapshot: member not in log");
            std::shared_ptr<const WeightBundle<float>> w;
            if (!m.at("weights").is_null()) w = std::make_shared<const WeightBundle<float>>(detail::weights_from_json(m.at("weights")));
            members.push_back({it->second, std::move(w), seq});
        }
        for (auto& m : members) s.elites_.admit(std::move(m));
        if (s.elites_.size() != p.at("members").size()) throw CorruptionError("snapshot: member set inconsistent");
        const auto expected = update_posterior(space, [&] {
            std::vector<HyperparamChoice> seen;
            for (const auto& m : s.elites_.ranked()) seen.push_back(m.individual->hyperparams);
            return seen;
        }());
        if (p.at("posterior").get<std::vector<std::vector<double>>>() != expected.probs)
            throw CorruptionError("snapshot: stored posterior disagrees with members");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("snapshot: ") + e.what());
    }
}

/// Versioned JSON document whose payload is protected by a SHA-256 checksum.
inline std::string snapshot(const PopulationStore& s, const HyperparamSpace& space = default_hyperparam_space()) {
    const auto payload = snapshot_payload(s, space).dump();
    nlohmann::ordered_json doc{{"format", "topoevo-snapshot"}, {"version", kSnapshotVersion}, {"checksum", sha256_hex(payload)}};
    // The payload is embedded as text so the checksum covers exact bytes.
    doc["payload"] = payload;
    return doc.dump();
}

inline PopulationStore restore(std::string_view text, const HyperparamSpace& space = default_hyperparam_space()) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("snapshot is not JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "topoevo-snapshot") throw CorruptionError("not a topoevo snapshot");
    if (doc.value("version", 0) != kSnapshotVersion) throw CorruptionError("unsupported snapshot version");
    if (!doc.contains("payload") || !doc["payload"].is_string() || !doc.contains("checksum")) throw CorruptionError("snapshot: missing fields");
    const auto payload = doc["payload"].get<std::string>();
    if (sha256_hex(payload) != doc["checksum"].get<std::string>()) throw CorruptionError("snapshot checksum mismatch");
    return restore_payload(nlohmann::json::parse(payload), space);
}

// ---------------------------------------------------------------------------
// Lifecycle

/// Random stream of job `job`; independent of which worker runs it.
inline std::mt19937_64 job_rng(std::uint64_t seed, std::uint64_t job) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(job),
                      static_cast<std::uint32_t>(job >> 32)};
    return std::mt19937_64(seq);
}

namespace detail {

struct Evaluation {
    std::optional<Fitness> fitness;
    std::shared_ptr<const WeightBundle<float>> weights;
    std::string note;
};

template <typename Rng>
Evaluation evaluate(const RunConfig& cfg, const DataSplits* data, const TopologyGraph& g, WeightBundle<float> init,
                    const HyperparamChoice& choice, Rng& rng) {
    if (const auto n = param_count(g); n > cfg.budget.max_params)
        return {std::nullopt, nullptr, "parameter count " + std::to_string(n) + " exceeds budget"};
    if (cfg.backend == Backend::Surrogate) return {surrogate_fitness(g), nullptr, {}};
    try {
        auto [w, stats] = train<float>(g, std::move(init), *data, resolve_hyperparams(cfg.space, choice), cfg.budget, rng);
        return {Fitness{stats.train_acc, stats.val_acc}, std::make_shared<const WeightBundle<float>>(std::move(w)), {}};
    } catch (const BudgetExceeded& e) {
        return {std::nullopt, nullptr, e.what()};
    } catch (const Error& e) {
        return {std::nullopt, nullptr, std::string("backend failure: ") + e.what()};
    }
}

} // namespace detail

/// Trains and records the generation-0 individual with the minimal topology.
inline LogEntry seed_population(PopulationStore& store, const RunConfig& cfg, const DataSplits* data) {
    auto rng = job_rng(cfg.seed, 0);
    Individual ind;
    ind.id = 0;
    ind.topology = new_minimal(config_input_shape(cfg, data), data ? data->train.classes : cfg.data.classes, cfg.initial_channels, cfg.seed);
    ind.topology_hash = canonical_hash(ind.topology);
    ind.hyperparams = sample_hyperparams(init_posterior(cfg.space), rng);
    WeightBundle<float> w;
    if (cfg.backend == Backend::Micro) w = init_weights<float>(ind.topology, rng);
    auto ev = detail::evaluate(cfg, data, ind.topology, std::move(w), ind.hyperparams, rng);
    ind.fitness = ev.fitness;
    ind.status = ev.fitness ? Status::Evaluated : Status::Discarded;
    ind.note = ev.note;
    if (ind.status == Status::Discarded) throw ValidationError("seed individual could not be evaluated: " + ev.note);
    return store.record(std::move(ind), ev.weights, cfg.epsilon);
}

/// One full lifecycle: select a parent, mutate, sample hyperparameters,
/// inherit weights, train and evaluate, then offer to the store and log.
inline LogEntry worker_step(PopulationStore& store, const RunConfig& cfg, const DataSplits* data, std::uint64_t job) {
    auto rng = job_rng(cfg.seed, job);
    const SelectionPolicy policy{cfg.lambda, cfg.capacity, cfg.selection};
    const Member parent = store.sample_parent(policy, rng);
    const Individual& p = *parent.individual;

    Individual ind;
    ind.id = job;
    ind.parent_id = p.id;
    ind.generation = p.generation + 1;
    ind.hyperparams = sample_hyperparams(store.posterior(cfg.space), rng);

    Mutation m;
    try {
        m = reproduce(p.topology, rng, cfg.retry_cap);
    } catch (const Error& e) {
        ind.topology = p.topology;
        ind.topology_hash = p.topology_hash;
        ind.status = Status::Discarded;
        ind.note = e.what();
        return store.record(std::move(ind), nullptr, cfg.epsilon);
    }
    ind.topology = std::move(m.graph);
    ind.topology_hash = canonical_hash(ind.topology);
    ind.mutation = m.record;

    WeightBundle<float> init;
    if (cfg.backend == Backend::Micro && param_count(ind.topology) <= cfg.budget.max_params) {
        if (!parent.weights) throw Error("parent has no weights for the micro backend");
        init = inherit_weights(*parent.weights, p.topology, ind.topology, m.record, rng, cfg.inherit);
    }
    auto ev = detail::evaluate(cfg, data, ind.topology, std::move(init), ind.hyperparams, rng);
    ind.fitness = ev.fitness;
    ind.status = ev.fitness ? Status::Evaluated : Status::Discarded;
    ind.note = std::move(ev.note);
    return store.record(std::move(ind), std::move(ev.weights), cfg.epsilon);
}

enum class StopReason { EvaluationCap, Stagnation };

inline const char* to_string(StopReason r) { return r == StopReason::EvaluationCap ? "evaluation cap" : "stagnation"; }

struct RunResult {
    std::shared_ptr<PopulationStore> store;
    StopReason stop = StopReason::EvaluationCap;
};

/// Called after every recorded evaluation; must be thread-safe when workers > 1.
using ProgressFn = std::function<void(const LogEntry&)>;

/// Runs workers until the log holds `max_evals` entries or the best score has
/// not improved by `epsilon` for `window` consecutive evaluations. Pass a
/// restored store to continue an earlier run.
inline RunResult run_evolution(const RunConfig& cfg, std::shared_ptr<PopulationStore> store = nullptr, const ProgressFn& progress = {}) {
    check_config(cfg);
    std::optional<DataSplits> data;
    if (cfg.backend == Backend::Micro) data = load_data(cfg);
    const DataSplits* dp = data ? &*data : nullptr;
    if (!store) store = std::make_shared<PopulationStore>(cfg.capacity);
    if (store->log_size() == 0) {
        auto e = seed_population(*store, cfg, dp);
        if (progress) progress(e);
    }

    std::atomic<std::uint64_t> next_job{store->next_seq()};
    std::atomic<bool> stagnated{false};
    auto stop = [&] { return stagnated.load() || store->since_improvement() >= cfg.window; };
    auto worker = [&] {
        for (;;) {
            if (stop()) {
                stagnated = true;
                return;
            }
            const auto job = next_job.fetch_add(1);
            if (job >= cfg.max_evals) return;
            auto e = worker_step(*store, cfg, dp, job);
            if (progress) progress(e);
        }
    };
    const int n = cfg.max_concurrent;
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    return {store, stop() ? StopReason::Stagnation : StopReason::EvaluationCap};
}

/// Population log as JSON lines, in evaluation order.
inline std::string log_lines(const PopulationStore& store, const HyperparamSpace& space = default_hyperparam_space()) {
    std::string out;
    for (const auto& e : store.log()) {
        out += to_log_json(*e.individual, space, e.admitted).dump();
        out += '\n';
    }
    return out;
}

} // namespace topoevo
