#pragma once

/// @file gradcheck.hpp
/// Compares analytic gradients against central finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "topoevo/nn.hpp"

namespace topoevo {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates whose perturbation crosses a ReLU or pooling kink
};

/// Relative error with a floor so that near-zero gradients compare absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

/// Mean loss over the batch and the concatenated activation pattern.
inline double loss_with_pattern(Evaluator<double>& ev, const Batch<double>& batch, std::vector<std::size_t>& pattern) {
    pattern.clear();
    const auto per = ev.image_size();
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto logits = ev.forward(std::span<const double>(batch.images).subspan(i * per, per));
        total += softmax_xent<double>(logits, batch.labels[i]);
        ev.append_activation_pattern(pattern);
    }
    return total / static_cast<double>(batch.size());
}

} // namespace detail

/// Checks every parameter (or every `stride`-th one) of `w`. Coordinates whose
/// perturbation changes a ReLU state or a pooling choice anywhere in the batch
/// are skipped, since the loss is not differentiable across that interval.
inline GradCheckResult gradient_check(const TopologyGraph& g, WeightBundle<double> w, const Batch<double>& batch, double eps = 1e-5,
                                      std::size_t stride = 1) {
    const auto grads = loss_and_gradient(g, w, batch).second;
    Evaluator<double> ev(g);
    ev.bind(w);  // tensors are perturbed in place below; pointers stay valid
    std::vector<std::size_t> base, plus, minus;
    detail::loss_with_pattern(ev, batch, base);
    GradCheckResult r;
    auto probe = [&](double& x, double analytic) {
        const double keep = x;
        x = keep + eps;
        const double lp = detail::loss_with_pattern(ev, batch, plus);
        x = keep - eps;
        const double lm = detail::loss_with_pattern(ev, batch, minus);
        x = keep;
        if (plus != base || minus != base) {
            ++r.skipped;
            return;
        }
        r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, (lp - lm) / (2 * eps)));
        ++r.checked;
    };
    std::size_t i = 0;
    for (const auto& e : g.edges()) {
        auto& t = w.edges.at(e.id);
        const auto& gt = grads.edges.at(e.id);
        for (std::size_t k = 0; k < t.data.size(); ++k, ++i)
            if (i % stride == 0) probe(t.data[k], gt.data[k]);
    }
    for (const auto& n : g.nodes()) {
        if (!n.is_conv()) continue;
        auto& b = w.biases.at(n.id);
        const auto& gb = grads.biases.at(n.id);
        for (std::size_t k = 0; k < b.size(); ++k, ++i)
            if (i % stride == 0) probe(b[k], gb[k]);
    }
    return r;
}

} // namespace topoevo
