#pragma once

/// @file nn.hpp
/// Evaluates a topology as a CNN and differentiates it.
///
/// Each conv node sums same-padded strided convolutions over its in-edges,
/// adds a per-channel bias, applies ReLU and optionally a 2x2/stride-2 max-pool.
/// The sink sums fully-connected products over its in-edges. Images are held
/// channel-major (C, H, W) internally.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "topoevo/knowledge.hpp"
#include "topoevo/topology.hpp"

namespace topoevo {

namespace detail {

/// Range of output positions x whose input tap x*stride + offset lies in [0, in_size).
inline std::pair<int, int> valid_range(int out_size, int in_size, int stride, int offset) {
    int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    int hi = (in_size - 1 - offset) < 0 ? -1 : (in_size - 1 - offset) / stride;
    return {std::max(lo, 0), std::min(hi, out_size - 1)};
}

/// Dot product with eight independent partial sums so the loop vectorizes.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    T tail{};
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

} // namespace detail

/// Compiled forward/backward evaluator for one topology.
template <typename T>
class Evaluator {
  public:
    explicit Evaluator(const TopologyGraph& g) : graph_(g) {
        require_valid(g);
        (void)fmap_sizes(g);  // rejects contradictory geometry
        const auto order = topological_order(g);
        std::unordered_map<NodeId, std::size_t> pos;
        for (const auto& id : order) {
            const auto& n = g.node(id);
            NodeOp op;
            op.id = id;
            op.kind = n.kind;
            op.channels = n.kind == NodeKind::Sink ? g.num_classes() : n.channels;
            op.size = n.kind == NodeKind::Source ? g.input_shape().height : n.fmap;
            op.pool = n.pooling == Pooling::Max2;
            op.out_size = n.kind == NodeKind::Source ? op.size : n.output_size();
            pos[id] = nodes_.size();
            nodes_.push_back(std::move(op));
        }
        for (const auto& e : g.edges()) {
            EdgeOp op;
            op.id = e.id;
            op.from = pos.at(e.from);
            op.to = pos.at(e.to);
            op.fc = e.fully_connected();
            op.kernel = e.kernel;
            op.stride = e.stride;
            op.cin = nodes_[op.from].channels;
            op.cout = nodes_[op.to].channels;
            op.in_size = nodes_[op.from].out_size;
            op.out_size = nodes_[op.to].size;
            op.features = static_cast<std::size_t>(op.cin) * op.in_size * op.in_size;
            nodes_[op.to].in_edges.push_back(edges_.size());
            edges_.push_back(op);
        }
        for (auto& n : nodes_) {
            const auto in_elems = static_cast<std::size_t>(n.channels) * n.size * n.size;
            const auto out_elems = static_cast<std::size_t>(n.channels) * n.out_size * n.out_size;
            if (n.kind == NodeKind::Sink) {
                n.pre.assign(static_cast<std::size_t>(n.channels), T{});
                n.gout.assign(static_cast<std::size_t>(n.channels), T{});
                continue;
            }
            n.out.assign(out_elems, T{});
            n.gout.assign(out_elems, T{});
            if (n.kind == NodeKind::Conv) {
                n.pre.assign(in_elems, T{});
                if (n.pool) {
                    n.act.assign(in_elems, T{});
                    n.argmax.assign(out_elems, 0);
                }
            }
        }
    }

    [[nodiscard]] const TopologyGraph& graph() const noexcept { return graph_; }
    [[nodiscard]] int num_classes() const noexcept { return graph_.num_classes(); }
    [[nodiscard]] std::size_t image_size() const noexcept {
        const auto& in = graph_.input_shape();
        return static_cast<std::size_t>(in.height) * in.width * in.channels;
    }

    /// Resolves tensor pointers; `grads` may be null for inference only.
    void bind(const WeightBundle<T>& w, WeightBundle<T>* grads = nullptr) {
        check_bundle(graph_, w);
        if (grads) check_bundle(graph_, *grads);
        for (auto& e : edges_) {
            e.w = w.edges.at(e.id).data.data();
            e.gw = grads ? grads->edges.at(e.id).data.data() : nullptr;
        }
        for (auto& n : nodes_) {
            if (n.kind != NodeKind::Conv) continue;
            n.b = w.biases.at(n.id).data();
            n.gb = grads ? grads->biases.at(n.id).data() : nullptr;
        }
    }

    /// Forward pass on one image given in (H, W, C) order. When `dropout_rng` is
    /// set and `dropout` > 0, inverted dropout masks are drawn for every
    /// fully-connected input and kept for the following backward pass.
    template <typename Rng = std::mt19937_64>
    std::span<const T> forward(std::span<const T> image_hwc, double dropout = 0.0, Rng* dropout_rng = nullptr) {
        if (image_hwc.size() != image_size()) throw ShapeError("image size does not match input shape");
        const auto& in = graph_.input_shape();
        auto& src = nodes_.front();
        const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
        for (std::size_t p = 0; p < hw; ++p)
            for (int c = 0; c < in.channels; ++c) src.out[c * hw + p] = image_hwc[p * in.channels + c];

        use_dropout_ = dropout > 0.0 && dropout_rng != nullptr;
        if (use_dropout_) {
            const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout));
            std::bernoulli_distribution keep(1.0 - dropout);
            for (auto& e : edges_) {
                if (!e.fc) continue;
                e.mask.resize(e.features);
                for (auto& m : e.mask) m = keep(*dropout_rng) ? keep_scale : T{};
            }
        }

        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            auto& n = nodes_[i];
            if (n.kind == NodeKind::Sink) {
                std::fill(n.pre.begin(), n.pre.end(), T{});
                for (auto ei : n.in_edges) fc_forward(edges_[ei], n.pre);
                continue;
            }
            const std::size_t plane = static_cast<std::size_t>(n.size) * n.size;
            for (int c = 0; c < n.channels; ++c) std::fill_n(n.pre.begin() + c * plane, plane, n.b[c]);
            for (auto ei : n.in_edges) conv_forward(edges_[ei], nodes_[edges_[ei].from].out, n.pre);
            auto& act = n.pool ? n.act : n.out;
            for (std::size_t k = 0; k < n.pre.size(); ++k) act[k] = n.pre[k] > T{} ? n.pre[k] : T{};
            if (n.pool) max_pool(n);
        }
        return nodes_.back().pre;
    }

    /// Accumulates parameter gradients for d(loss)/d(logits) = `dlogits` of the
    /// image seen by the latest forward call.
    void backward(std::span<const T> dlogits) {
        for (auto& n : nodes_) std::fill(n.gout.begin(), n.gout.end(), T{});
        auto& sink = nodes_.back();
        std::copy(dlogits.begin(), dlogits.end(), sink.gout.begin());
        for (std::size_t i = nodes_.size(); i-- > 1;) {
            auto& n = nodes_[i];
            if (n.kind == NodeKind::Sink) {
                for (auto ei : n.in_edges) fc_backward(edges_[ei], n.gout);
                continue;
            }
            // gout is w.r.t. the node output; route it back to the pre-activation.
            auto& gpre = n.gpre;
            gpre.assign(n.pre.size(), T{});
            if (n.pool) {
                for (std::size_t k = 0; k < n.gout.size(); ++k) gpre[n.argmax[k]] += n.gout[k];
            } else {
                std::copy(n.gout.begin(), n.gout.end(), gpre.begin());
            }
            for (std::size_t k = 0; k < gpre.size(); ++k)
                if (!(n.pre[k] > T{})) gpre[k] = T{};
            const std::size_t plane = static_cast<std::size_t>(n.size) * n.size;
            if (n.gb)
                for (int c = 0; c < n.channels; ++c) {
                    T s{};
                    for (std::size_t k = 0; k < plane; ++k) s += gpre[c * plane + k];
                    n.gb[c] += s;
                }
            for (auto ei : n.in_edges) conv_backward(edges_[ei], gpre);
        }
    }

    /// Output of a node after activation and pooling, from the latest forward call.
    [[nodiscard]] std::span<const T> node_output(const NodeId& id) const {
        for (const auto& n : nodes_)
            if (n.id == id) return n.kind == NodeKind::Sink ? std::span<const T>(n.pre) : std::span<const T>(n.out);
        throw Error("unknown node " + id.to_hex());
    }

    /// Appends the ReLU on/off state of every conv pre-activation and every
    /// pooling argmax from the latest forward call; equal patterns mean the
    /// network is locally linear between the two inputs.
    void append_activation_pattern(std::vector<std::size_t>& out) const {
        for (const auto& n : nodes_) {
            if (n.kind != NodeKind::Conv) continue;
            for (T v : n.pre) out.push_back(v > T{} ? 1 : 0);
            out.insert(out.end(), n.argmax.begin(), n.argmax.end());
        }
    }

  private:
    struct EdgeOp {
        EdgeId id;
        std::size_t from = 0, to = 0;
        bool fc = false;
        int kernel = 0, stride = 1, cin = 0, cout = 0, in_size = 0, out_size = 0;
        std::size_t features = 0;
        const T* w = nullptr;
        T* gw = nullptr;
        std::vector<T> mask;
    };
    struct NodeOp {
        NodeId id;
        NodeKind kind = NodeKind::Conv;
        int channels = 0, size = 0, out_size = 0;
        bool pool = false;
        std::vector<std::size_t> in_edges;
        const T* b = nullptr;
        T* gb = nullptr;
        std::vector<T> pre, act, out, gout, gpre;
        std::vector<std::size_t> argmax;
    };

    /// Gathers the receptive fields of `e` into cols_: row r = (dy * k + dx) * cin + ci,
    /// one column per output pixel, zero where the tap falls into padding.
    void im2col(const EdgeOp& e, const T* in) {
        const int k = e.kernel, pad = k / 2, s = e.stride, si = e.in_size, so = e.out_size;
        const std::size_t iplane = static_cast<std::size_t>(si) * si, oplane = static_cast<std::size_t>(so) * so;
        cols_.assign(static_cast<std::size_t>(k) * k * e.cin * oplane, T{});
        for (int dy = 0; dy < k; ++dy) {
            const auto [y0, y1] = detail::valid_range(so, si, s, dy - pad);
            for (int dx = 0; dx < k; ++dx) {
                const auto [x0, x1] = detail::valid_range(so, si, s, dx - pad);
                const int shift = dx - pad;
                for (int ci = 0; ci < e.cin; ++ci) {
                    T* col = cols_.data() + (static_cast<std::size_t>(dy * k + dx) * e.cin + ci) * oplane;
                    const T* inp = in + ci * iplane;
                    for (int y = y0; y <= y1; ++y) {
                        const T* irow = inp + static_cast<std::size_t>(y * s + dy - pad) * si;
                        T* crow = col + static_cast<std::size_t>(y) * so;
                        for (int x = x0; x <= x1; ++x) crow[x] = irow[x * s + shift];
                    }
                }
            }
        }
    }

    /// Scatters cols-shaped gradients back onto the input plane (inverse of im2col).
    void col2im_add(const EdgeOp& e, const T* gcols, T* gin) const {
        const int k = e.kernel, pad = k / 2, s = e.stride, si = e.in_size, so = e.out_size;
        const std::size_t iplane = static_cast<std::size_t>(si) * si, oplane = static_cast<std::size_t>(so) * so;
        for (int dy = 0; dy < k; ++dy) {
            const auto [y0, y1] = detail::valid_range(so, si, s, dy - pad);
            for (int dx = 0; dx < k; ++dx) {
                const auto [x0, x1] = detail::valid_range(so, si, s, dx - pad);
                const int shift = dx - pad;
                for (int ci = 0; ci < e.cin; ++ci) {
                    const T* col = gcols + (static_cast<std::size_t>(dy * k + dx) * e.cin + ci) * oplane;
                    T* gp = gin + ci * iplane;
                    for (int y = y0; y <= y1; ++y) {
                        T* grow = gp + static_cast<std::size_t>(y * s + dy - pad) * si;
                        const T* crow = col + static_cast<std::size_t>(y) * so;
                        for (int x = x0; x <= x1; ++x) grow[x * s + shift] += crow[x];
                    }
                }
            }
        }
    }

    [[nodiscard]] static bool is_pointwise(const EdgeOp& e) noexcept { return e.kernel == 1 && e.stride == 1; }

    void conv_forward(const EdgeOp& e, const std::vector<T>& in, std::vector<T>& out) {
        const std::size_t plane = static_cast<std::size_t>(e.out_size) * e.out_size;
        const T* cols = in.data();
        if (!is_pointwise(e)) {
            im2col(e, in.data());
            cols = cols_.data();
        }
        const std::size_t rows = static_cast<std::size_t>(e.kernel) * e.kernel * e.cin;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* c = cols + r * plane;
            const T* wr = e.w + r * e.cout;
            for (int co = 0; co < e.cout; ++co) {
                const T w = wr[co];
                if (w == T{}) continue;
                T* o = out.data() + co * plane;
                for (std::size_t p = 0; p < plane; ++p) o[p] += w * c[p];
            }
        }
    }

    void conv_backward(const EdgeOp& e, const std::vector<T>& gout) {
        auto& src = nodes_[e.from];
        const bool need_gin = src.kind != NodeKind::Source;
        const std::size_t plane = static_cast<std::size_t>(e.out_size) * e.out_size;
        const std::size_t rows = static_cast<std::size_t>(e.kernel) * e.kernel * e.cin;
        const bool direct = is_pointwise(e);
        const T* cols = src.out.data();
        if (!direct) {
            im2col(e, src.out.data());
            cols = cols_.data();
        }
        if (e.gw)
            for (std::size_t r = 0; r < rows; ++r)
                for (int co = 0; co < e.cout; ++co) e.gw[r * e.cout + co] += detail::dot(cols + r * plane, gout.data() + co * plane, plane);
        if (!need_gin) return;
        T* gcols = src.gout.data();
        if (!direct) {
            gcols_.assign(rows * plane, T{});
            gcols = gcols_.data();
        }
        for (std::size_t r = 0; r < rows; ++r) {
            T* gc = gcols + r * plane;
            const T* wr = e.w + r * e.cout;
            for (int co = 0; co < e.cout; ++co) {
                const T w = wr[co];
                if (w == T{}) continue;
                const T* g = gout.data() + co * plane;
                for (std::size_t p = 0; p < plane; ++p) gc[p] += w * g[p];
            }
        }
        if (!direct) col2im_add(e, gcols, src.gout.data());
    }

    void fc_forward(const EdgeOp& e, std::vector<T>& logits) const {
        const auto& feat = nodes_[e.from].out;
        const auto classes = logits.size();
        for (std::size_t f = 0; f < e.features; ++f) {
            const T x = use_dropout_ ? feat[f] * e.mask[f] : feat[f];
            if (x == T{}) continue;
            const T* wrow = e.w + f * classes;
            for (std::size_t c = 0; c < classes; ++c) logits[c] += x * wrow[c];
        }
    }

    void fc_backward(const EdgeOp& e, const std::vector<T>& glogits) {
        auto& src = nodes_[e.from];
        const bool need_gin = src.kind != NodeKind::Source;
        const auto classes = glogits.size();
        for (std::size_t f = 0; f < e.features; ++f) {
            const T scale = use_dropout_ ? e.mask[f] : T{1};
            const T x = src.out[f] * scale;
            const T* wrow = e.w + f * classes;
            T* gwrow = e.gw ? e.gw + f * classes : nullptr;
            T g{};
            for (std::size_t c = 0; c < classes; ++c) {
                if (gwrow) gwrow[c] += x * glogits[c];
                g += wrow[c] * glogits[c];
            }
            if (need_gin) src.gout[f] += g * scale;
        }
    }

    static void max_pool(NodeOp& n) {
        const int si = n.size, so = n.out_size;
        const std::size_t iplane = static_cast<std::size_t>(si) * si, oplane = static_cast<std::size_t>(so) * so;
        for (int c = 0; c < n.channels; ++c)
            for (int y = 0; y < so; ++y)
                for (int x = 0; x < so; ++x) {
                    std::size_t best = c * iplane + static_cast<std::size_t>(2 * y) * si + 2 * x;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = c * iplane + static_cast<std::size_t>(2 * y + dy) * si + 2 * x + dx;
                            if (n.act[idx] > n.act[best]) best = idx;
                        }
                    const std::size_t o = c * oplane + static_cast<std::size_t>(y) * so + x;
                    n.out[o] = n.act[best];
                    n.argmax[o] = best;
                }
    }

    TopologyGraph graph_;
    std::vector<NodeOp> nodes_;  // topological order; front is the source, back the sink
    std::vector<EdgeOp> edges_;
    std::vector<T> cols_, gcols_;
    bool use_dropout_ = false;
};

// ---------------------------------------------------------------------------
// Batches and loss

/// Images in (B, H, W, C) order with values in [0, 1], and integer labels.
template <typename T>
struct Batch {
    std::vector<T> images;
    std::vector<int> labels;
    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

template <typename T>
void check_batch(const TopologyGraph& g, const Batch<T>& batch) {
    const auto& in = g.input_shape();
    const auto per = static_cast<std::size_t>(in.height) * in.width * in.channels;
    if (batch.size() == 0 || batch.images.size() != per * batch.size()) throw ShapeError("batch does not match input shape");
    for (int y : batch.labels)
        if (y < 0 || y >= g.num_classes()) throw ShapeError("label out of range");
}

/// Logits in (B, classes) row-major order.
template <typename T>
std::vector<T> forward(const TopologyGraph& g, const WeightBundle<T>& w, const Batch<T>& batch) {
    check_batch(g, batch);
    Evaluator<T> ev(g);
    ev.bind(w);
    const auto per = ev.image_size();
    std::vector<T> logits;
    logits.reserve(batch.size() * static_cast<std::size_t>(g.num_classes()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto out = ev.forward(std::span<const T>(batch.images).subspan(i * per, per));
        logits.insert(logits.end(), out.begin(), out.end());
    }
    return logits;
}

/// Softmax cross-entropy of one row; writes d(loss)/d(logits) into `grad` if non-empty.
template <typename T>
T softmax_xent(std::span<const T> logits, int label, std::span<T> grad = {}) {
    const T mx = *std::max_element(logits.begin(), logits.end());
    T z{};
    for (T v : logits) z += std::exp(v - mx);
    const T log_z = std::log(z) + mx;
    if (!grad.empty())
        for (std::size_t c = 0; c < logits.size(); ++c)
            grad[c] = std::exp(logits[c] - log_z) - (static_cast<int>(c) == label ? T{1} : T{});
    return log_z - logits[static_cast<std::size_t>(label)];
}

/// Mean softmax cross-entropy over the batch.
template <typename T>
T loss(std::span<const T> logits, std::span<const int> labels) {
    const auto classes = logits.size() / labels.size();
    T total{};
    for (std::size_t i = 0; i < labels.size(); ++i) total += softmax_xent(logits.subspan(i * classes, classes), labels[i]);
    return total / static_cast<T>(labels.size());
}

template <typename T>
WeightBundle<T> zeros_like(const WeightBundle<T>& w) {
    WeightBundle<T> z;
    for (const auto& [id, t] : w.edges) z.edges[id] = Tensor<T>(t.shape);
    for (const auto& [id, b] : w.biases) z.biases[id] = std::vector<T>(b.size(), T{});
    return z;
}

/// Mean loss over the batch and its gradient with respect to every tensor.
template <typename T>
std::pair<T, WeightBundle<T>> loss_and_gradient(const TopologyGraph& g, const WeightBundle<T>& w, const Batch<T>& batch) {
    check_batch(g, batch);
    auto grads = zeros_like(w);
    Evaluator<T> ev(g);
    ev.bind(w, &grads);
    const auto per = ev.image_size();
    const auto classes = static_cast<std::size_t>(g.num_classes());
    const T inv_b = T{1} / static_cast<T>(batch.size());
    std::vector<T> dlogits(classes);
    T total{};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto logits = ev.forward(std::span<const T>(batch.images).subspan(i * per, per));
        total += softmax_xent<T>(logits, batch.labels[i], dlogits);
        for (auto& d : dlogits) d *= inv_b;
        ev.backward(dlogits);
    }
    return {total * inv_b, std::move(grads)};
}

template <typename T>
WeightBundle<T> backward(const TopologyGraph& g, const WeightBundle<T>& w, const Batch<T>& batch) {
    return loss_and_gradient(g, w, batch).second;
}

/// Trainable parameter count: conv kernels, conv biases and fully-connected matrices.
inline std::size_t param_count(const TopologyGraph& g) {
    std::size_t n = 0;
    for (const auto& e : g.edges()) n += Tensor<float>::element_count(edge_shape(g, e));
    for (const auto& node : g.nodes())
        if (node.is_conv()) n += static_cast<std::size_t>(node.channels);
    return n;
}

} // namespace topoevo
