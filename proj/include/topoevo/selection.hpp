#pragma once

/// @file selection.hpp
/// Rank-proportional parent selection with a truncated geometric (Boltzmann)
/// distribution over ranks, plus bounded elite admission.
///
/// Rank 0 is the best individual. The pmf is
///
///     p(k) = (1 - e^-lambda) e^(-lambda k) / (1 - e^(-lambda N)),   k = 0..N-1
///
/// which sums to one over the N ranks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "topoevo/errors.hpp"

namespace topoevo {

enum class SelectionMode { Boltzmann, Random };

struct SelectionPolicy {
    double lambda = 0.01;
    std::size_t capacity = 1000;
    SelectionMode mode = SelectionMode::Boltzmann;
};

/// Training and validation accuracy; the score is always derived, never stored.
struct Fitness {
    double train_acc = 0.0;
    double val_acc = 0.0;

    [[nodiscard]] double score() const noexcept { return 0.5 * (train_acc + val_acc); }
    friend bool operator==(const Fitness&, const Fitness&) = default;
};

/// Probability of each rank among `n` ranks, rank 0 first.
inline std::vector<double> rank_pmf(double lambda, std::size_t n) {
    if (n == 0) return {};
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    std::vector<double> p(n);
    // Computed relative to rank 0 and normalized by the explicit sum; this matches
    // the closed form and stays finite for large lambda * n.
    for (std::size_t k = 0; k < n; ++k) p[k] = std::exp(-lambda * static_cast<double>(k));
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= total;
    return p;
}

inline std::vector<double> rank_pmf(const SelectionPolicy& policy) { return rank_pmf(policy.lambda, policy.capacity); }

/// Closed-form normalizer-based pmf; used to cross-check rank_pmf.
inline double rank_pmf_closed_form(double lambda, std::size_t n, std::size_t k) {
    return -std::expm1(-lambda) * std::exp(-lambda * static_cast<double>(k)) / -std::expm1(-lambda * static_cast<double>(n));
}

/// Draws a rank in [0, n). Populations smaller than the capacity use the
/// first n ranks, renormalized.
template <typename Rng>
std::size_t sample_rank(std::size_t n, const SelectionPolicy& policy, Rng& rng) {
    if (n == 0) throw Error("cannot select from an empty population");
    if (policy.mode == SelectionMode::Random || n == 1)
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto p = rank_pmf(policy.lambda, std::min(n, policy.capacity));
    std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
    return dist(rng);
}

/// Picks a member of `ranked`, which must be ordered best first.
template <typename T, typename Rng>
const T& sample_parent(std::span<const T> ranked, const SelectionPolicy& policy, Rng& rng) {
    return ranked[sample_rank(ranked.size(), policy, rng)];
}

/// Bounded elite set ordered by descending score, ties broken by the earlier
/// evaluation sequence number. `T` must expose `score()` and `eval_seq`.
template <typename T>
class EliteStore {
  public:
    explicit EliteStore(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("capacity must be at least 1");
    }

    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
    [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
    [[nodiscard]] std::span<const T> ranked() const noexcept { return members_; }
    [[nodiscard]] const T& best() const { return members_.front(); }
    [[nodiscard]] const T& worst() const { return members_.back(); }

    /// Enters `item` if there is room or it beats the current worst, evicting the worst.
    bool admit(T item) {
        if (members_.size() >= capacity_ && !(item.score() > members_.back().score())) return false;
        auto pos = std::upper_bound(members_.begin(), members_.end(), item, before);
        members_.insert(pos, std::move(item));
        if (members_.size() > capacity_) members_.pop_back();
        return true;
    }

    static bool before(const T& a, const T& b) {
        if (a.score() != b.score()) return a.score() > b.score();
        return a.eval_seq < b.eval_seq;
    }

  private:
    std::size_t capacity_;
    std::vector<T> members_;
};

} // namespace topoevo
