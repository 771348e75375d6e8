#pragma once

/// @file train.hpp
/// Budgeted one-epoch training, accuracy-based fitness, and a deterministic
/// surrogate fitness used when real training is not wanted.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "topoevo/analysis.hpp"
#include "topoevo/dataset.hpp"
#include "topoevo/knowledge.hpp"
#include "topoevo/nn.hpp"
#include "topoevo/selection.hpp"

namespace topoevo {

enum class OptimizerKind { SgdMomentum, Adam, RmsProp };

struct TrainingHyperparams {
    double learning_rate = 0.001;
    int batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double dropout = 0.0;
};

inline OptimizerKind optimizer_from_string(std::string_view s) {
    if (s == "sgd_momentum") return OptimizerKind::SgdMomentum;
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "rmsprop") return OptimizerKind::RmsProp;
    throw ParseError("unknown optimizer: " + std::string(s));
}

/// Reads the four training parameters out of a choice; missing ones keep defaults.
inline TrainingHyperparams resolve_hyperparams(const HyperparamSpace& space, const HyperparamChoice& c) {
    TrainingHyperparams h;
    for (std::size_t p = 0; p < space.size(); ++p) {
        const auto& v = space[p].values.at(c.index.at(p));
        if (space[p].name == "learning_rate") h.learning_rate = v.get<double>();
        else if (space[p].name == "batch_size") h.batch_size = v.get<int>();
        else if (space[p].name == "optimizer") h.optimizer = optimizer_from_string(v.get<std::string>());
        else if (space[p].name == "dropout") h.dropout = v.get<double>();
    }
    return h;
}

/// Step cap stands in for a wall-clock limit, parameter cap for a memory limit.
struct TrainBudget {
    std::size_t max_steps = 1000;
    std::size_t max_params = 200000;
    int epochs = 1;
};

struct TrainStats {
    std::size_t steps_run = 0;
    double final_train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double wall_fraction_used = 0.0;
};

namespace detail {

/// Flat views over a bundle's tensors in graph order.
template <typename T>
std::vector<std::span<T>> param_spans(const TopologyGraph& g, WeightBundle<T>& w) {
    std::vector<std::span<T>> out;
    for (const auto& e : g.edges()) out.emplace_back(w.edges.at(e.id).data);
    for (const auto& n : g.nodes())
        if (n.is_conv()) out.emplace_back(w.biases.at(n.id));
    return out;
}

template <typename T>
class Optimizer {
  public:
    Optimizer(OptimizerKind kind, double lr, std::span<const std::span<T>> params) : kind_(kind), lr_(lr) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), T{});
            if (kind == OptimizerKind::Adam) v_.emplace_back(p.size(), T{});
        }
    }

    void step(std::span<const std::span<T>> params, std::span<const std::span<T>> grads) {
        ++t_;
        const T lr = static_cast<T>(lr_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i];
            auto g = grads[i];
            auto& m = m_[i];
            switch (kind_) {
            case OptimizerKind::SgdMomentum:
                for (std::size_t k = 0; k < p.size(); ++k) {
                    m[k] = static_cast<T>(0.9) * m[k] + g[k];
                    p[k] -= lr * m[k];
                }
                break;
            case OptimizerKind::RmsProp:
                for (std::size_t k = 0; k < p.size(); ++k) {
                    m[k] = static_cast<T>(0.9) * m[k] + static_cast<T>(0.1) * g[k] * g[k];
                    p[k] -= lr * g[k] / (std::sqrt(m[k]) + static_cast<T>(1e-7));
                }
                break;
            case OptimizerKind::Adam: {
                auto& v = v_[i];
                const T c1 = static_cast<T>(1.0 - std::pow(0.9, static_cast<double>(t_)));
                const T c2 = static_cast<T>(1.0 - std::pow(0.999, static_cast<double>(t_)));
                for (std::size_t k = 0; k < p.size(); ++k) {
                    m[k] = static_cast<T>(0.9) * m[k] + static_cast<T>(0.1) * g[k];
                    v[k] = static_cast<T>(0.999) * v[k] + static_cast<T>(0.001) * g[k] * g[k];
                    p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + static_cast<T>(1e-8));
                }
                break;
            }
            }
        }
    }

  private:
    OptimizerKind kind_;
    double lr_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

template <typename T>
std::span<const T> image_as(const Dataset& ds, std::size_t i, std::vector<T>& scratch) {
    auto img = ds.image(i);
    if constexpr (std::is_same_v<T, float>) {
        return img;
    } else {
        scratch.assign(img.begin(), img.end());
        return scratch;
    }
}

template <typename T>
bool predicts(std::span<const T> logits, int label) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (!std::isfinite(static_cast<double>(logits[c]))) return false;
        if (logits[c] > logits[best]) best = c;
    }
    return static_cast<int>(best) == label;
}

} // namespace detail

template <typename T>
double accuracy(Evaluator<T>& ev, const Dataset& ds) {
    if (ds.size() == 0) throw Error("accuracy: empty split");
    std::vector<T> scratch;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (detail::predicts<T>(ev.forward(detail::image_as<T>(ds, i, scratch)), ds.labels[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

template <typename T>
double accuracy(const TopologyGraph& g, const WeightBundle<T>& w, const Dataset& ds) {
    Evaluator<T> ev(g);
    ev.bind(w);
    return accuracy(ev, ds);
}

/// Train accuracy on the training split, validation accuracy on the held-out split.
template <typename T>
Fitness evaluate_fitness(const TopologyGraph& g, const WeightBundle<T>& w, const DataSplits& data) {
    Evaluator<T> ev(g);
    ev.bind(w);
    return {accuracy(ev, data.train), accuracy(ev, data.validation)};
}

/// Minibatch training for at most `budget.epochs` passes over the training split,
/// stopping early after `budget.max_steps` updates. Throws BudgetExceeded when
/// the topology has more than `budget.max_params` parameters.
template <typename T, typename Rng>
std::pair<WeightBundle<T>, TrainStats> train(const TopologyGraph& g, WeightBundle<T> weights, const DataSplits& data,
                                             const TrainingHyperparams& hp, const TrainBudget& budget, Rng& rng) {
    if (const auto n = param_count(g); n > budget.max_params)
        throw BudgetExceeded("parameter count " + std::to_string(n) + " exceeds budget " + std::to_string(budget.max_params));
    if (data.train.size() == 0 || data.validation.size() == 0) throw Error("train: empty split");
    if (hp.batch_size < 1) throw Error("train: batch size must be positive");
    if (data.train.shape() != g.input_shape() || data.train.classes != g.num_classes()) throw ShapeError("dataset does not match topology");

    auto grads = zeros_like(weights);
    Evaluator<T> ev(g);
    ev.bind(weights, &grads);
    auto params = detail::param_spans(g, weights);
    auto gparams = detail::param_spans(g, grads);
    detail::Optimizer<T> opt(hp.optimizer, hp.learning_rate, params);

    const std::size_t n = data.train.size();
    const auto bs = static_cast<std::size_t>(hp.batch_size);
    const std::size_t per_epoch = (n + bs - 1) / bs;
    const std::size_t planned = per_epoch * static_cast<std::size_t>(std::max(budget.epochs, 0));
    const std::size_t steps = std::min(planned, budget.max_steps);

    TrainStats stats;
    std::vector<std::size_t> order(n);
    std::vector<T> scratch, dlogits(static_cast<std::size_t>(g.num_classes()));
    for (std::size_t step = 0; step < steps; ++step) {
        const std::size_t within = step % per_epoch;
        if (within == 0) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
        }
        const std::size_t begin = within * bs, end = std::min(n, begin + bs);
        const T inv_b = T{1} / static_cast<T>(end - begin);
        for (auto& s : gparams) std::fill(s.begin(), s.end(), T{});
        double batch_loss = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto idx = order[i];
            auto logits = ev.forward(detail::image_as<T>(data.train, idx, scratch), hp.dropout, &rng);
            batch_loss += static_cast<double>(softmax_xent<T>(logits, data.train.labels[idx], dlogits));
            for (auto& d : dlogits) d *= inv_b;
            ev.backward(dlogits);
        }
        opt.step(params, gparams);
        stats.final_train_loss = batch_loss / static_cast<double>(end - begin);
        ++stats.steps_run;
    }
    stats.wall_fraction_used = budget.max_steps == 0 ? 1.0 : static_cast<double>(stats.steps_run) / static_cast<double>(budget.max_steps);
    ev.bind(weights);
    stats.train_acc = accuracy(ev, data.train);
    stats.val_acc = accuracy(ev, data.validation);
    return {std::move(weights), stats};
}

/// Deterministic stand-in for trained accuracy:
///   raw   = 0.5 * conv_nodes + 0.25 * edges + 0.5 * log2(mean_channels) - 0.3 * max(0, shortest - 6)
///   score = softplus(raw) / (softplus(raw) + 4)
/// Both accuracies equal the score. The minimal graph with 4 channels scores 0.3471.
inline Fitness surrogate_fitness(const TopologyGraph& g) {
    const double raw = 0.5 * static_cast<double>(g.conv_count()) + 0.25 * static_cast<double>(g.edges().size()) +
                       0.5 * std::log2(mean_channels(g)) - 0.3 * std::max(0, shortest_distance(g) - 6);
    const double sp = raw > 30 ? raw : std::log1p(std::exp(raw));
    const double score = sp / (sp + 4.0);
    return {score, score};
}

} // namespace topoevo
