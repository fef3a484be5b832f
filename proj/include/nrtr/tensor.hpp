#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nrtr/errors.hpp"
#include "nrtr/rng.hpp"

namespace nrtr {

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor extent must be nonnegative, got " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// Dense row-major tensor. A rank-0 tensor (shape []) is a scalar. The
// handle is a cheap shared reference to the underlying storage; ops
// return fresh tensors and never alias inputs. Frozen tensors (no
// requires_grad, no live tape) are safe to share across threads.
template <typename F>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return full(std::move(shape), F(0), requires_grad);
    }

    static Tensor full(std::vector<int> shape, F value, bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data.assign(shape_numel(t.node_->shape), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(F value, bool requires_grad = false) {
        return full({}, value, requires_grad);
    }

    static Tensor from(std::vector<int> shape, std::vector<F> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw std::invalid_argument("tensor data size " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->data.size(); }
    int extent(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }

    std::vector<F>& data() { return node_->data; }
    const std::vector<F>& data() const { return node_->data; }

    F value() const {
        if (rank() != 0) throw std::invalid_argument("value() requires a rank-0 tensor, got " + shape_str(shape()));
        return node_->data[0];
    }

    F operator()(int i) const { return node_->data[static_cast<std::size_t>(i)]; }
    F operator()(int i, int j) const {
        return node_->data[static_cast<std::size_t>(i) * node_->shape[1] + j];
    }
    F operator()(int i, int j, int k) const {
        return node_->data[(static_cast<std::size_t>(i) * node_->shape[1] + j) * node_->shape[2] + k];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }

    // Gradient buffer, allocated as zeros on first access.
    std::vector<F>& grad() {
        if (node_->grad.empty()) node_->grad.assign(node_->data.size(), F(0));
        return node_->grad;
    }
    const std::vector<F>& grad() const {
        const_cast<Tensor*>(this)->grad();
        return node_->grad;
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), F(0)); }

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    struct Node {
        std::vector<int> shape;
        std::vector<F> data;
        std::vector<F> grad; // empty until populated
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;
};

// Define-by-run gradient tape. Constructing a Tape makes it current for
// the calling thread; ops record backward closures onto it whenever an
// input requires grad. Backward replays the closures in exact reverse
// construction order, which is a valid reverse topological order.
// One tape per training step; single-threaded construction and backward.
template <typename F>
class Tape {
public:
    Tape() : prev_(current_) { current_ = this; }
    ~Tape() { current_ = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_; }

    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    std::size_t recorded() const { return ops_.size(); }

    void backward(Tensor<F> loss) {
        if (loss.rank() != 0)
            throw std::invalid_argument("backward requires a rank-0 loss, got shape " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw std::invalid_argument("backward: loss was not recorded on a live tape");
        loss.grad()[0] += F(1);
        for (std::size_t i = ops_.size(); i-- > 0;) ops_[i]();
    }

private:
    std::vector<std::function<void()>> ops_;
    Tape* prev_;
    inline static thread_local Tape* current_ = nullptr;
};

namespace detail {

template <typename F>
inline bool taping(std::initializer_list<const Tensor<F>*> inputs) {
    if (Tape<F>::current() == nullptr) return false;
    for (const Tensor<F>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <typename F>
inline void record(std::function<void()> fn) {
    Tape<F>::current()->record(std::move(fn));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename F>
Tensor<F> add(const Tensor<F>& a, const Tensor<F>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<F> out = Tensor<F>::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (detail::taping<F>({&a, &b})) {
        out.set_requires_grad(true);
        detail::record<F>([a = Tensor<F>(a), b = Tensor<F>(b), out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

// x[rows, d] + bias[d], broadcast over rows.
template <typename F>
Tensor<F> add_rowwise(const Tensor<F>& x, const Tensor<F>& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || x.extent(1) != bias.extent(0))
        throw std::invalid_argument("add_rowwise: incompatible shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(bias.shape()));
    const int rows = x.extent(0), d = x.extent(1);
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j)
            out.data()[static_cast<std::size_t>(i) * d + j] = x(i, j) + bias(j);
    if (detail::taping<F>({&x, &bias})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), bias = Tensor<F>(bias), out, rows, d]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (bias.requires_grad()) {
                auto& gb = bias.grad();
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < d; ++j) gb[j] += go[static_cast<std::size_t>(i) * d + j];
            }
        });
    }
    return out;
}

template <typename F>
Tensor<F> scale(const Tensor<F>& x, F factor) {
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * factor;
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, factor]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += factor * go[i];
        });
    }
    return out;
}

template <typename F>
Tensor<F> mul(const Tensor<F>& a, const Tensor<F>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<F> out = Tensor<F>::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::taping<F>({&a, &b})) {
        out.set_requires_grad(true);
        detail::record<F>([a = Tensor<F>(a), b = Tensor<F>(b), out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += b.data()[i] * go[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += a.data()[i] * go[i];
            }
        });
    }
    return out;
}

template <typename F>
Tensor<F> relu(const Tensor<F>& x) {
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > F(0) ? x.data()[i] : F(0);
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (x.data()[i] > F(0)) gx[i] += go[i];
        });
    }
    return out;
}

template <typename F>
Tensor<F> sum(const Tensor<F>& x) {
    F acc = F(0);
    for (F v : x.data()) acc += v;
    Tensor<F> out = Tensor<F>::scalar(acc);
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const F go = out.grad()[0];
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
        });
    }
    return out;
}

template <typename F>
Tensor<F> reshape(const Tensor<F>& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    Tensor<F> out = Tensor<F>::from(std::move(new_shape), x.data());
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

template <typename F>
Tensor<F> concat_last_axis(const std::vector<Tensor<F>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last_axis: no inputs");
    const auto& lead = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank() || p.rank() < 1)
            throw std::invalid_argument("concat_last_axis: rank mismatch");
        for (int ax = 0; ax + 1 < p.rank(); ++ax)
            if (p.extent(ax) != lead[static_cast<std::size_t>(ax)])
                throw std::invalid_argument("concat_last_axis: leading shape mismatch " + shape_str(p.shape()) +
                                            " vs " + shape_str(lead));
        total += p.extent(p.rank() - 1);
    }
    std::vector<int> out_shape = lead;
    out_shape.back() = total;
    Tensor<F> out = Tensor<F>::zeros(out_shape);
    const std::size_t slices = out.size() / static_cast<std::size_t>(total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = static_cast<std::size_t>(p.extent(p.rank() - 1));
        for (std::size_t s = 0; s < slices; ++s)
            std::copy_n(p.data().begin() + s * w, w, out.data().begin() + s * total + offset);
        offset += w;
    }
    bool any_rg = false;
    for (const auto& p : parts) any_rg = any_rg || p.requires_grad();
    if (Tape<F>::current() != nullptr && any_rg) {
        out.set_requires_grad(true);
        std::vector<Tensor<F>> held = parts;
        detail::record<F>([held, out, slices, total]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            std::size_t offset = 0;
            for (auto& p : held) {
                const std::size_t w = static_cast<std::size_t>(p.extent(p.rank() - 1));
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t s = 0; s < slices; ++s)
                        for (std::size_t j = 0; j < w; ++j)
                            gp[s * w + j] += go[s * static_cast<std::size_t>(total) + offset + j];
                }
                offset += w;
            }
        });
    }
    return out;
}

template <typename F>
Tensor<F> take_row(const Tensor<F>& x, int row) {
    if (x.rank() != 2) throw std::invalid_argument("take_row: rank-2 tensor required, got " + shape_str(x.shape()));
    if (row < 0 || row >= x.extent(0))
        throw std::invalid_argument("take_row: row " + std::to_string(row) + " out of range for " +
                                    shape_str(x.shape()));
    const int d = x.extent(1);
    Tensor<F> out = Tensor<F>::zeros({d});
    std::copy_n(x.data().begin() + static_cast<std::size_t>(row) * d, d, out.data().begin());
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, row, d]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (int j = 0; j < d; ++j) gx[static_cast<std::size_t>(row) * d + j] += go[static_cast<std::size_t>(j)];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename F>
Tensor<F> matmul(const Tensor<F>& a, const Tensor<F>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
        throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor<F> out = Tensor<F>::zeros({m, n});
    const F* pa = a.data().data();
    const F* pb = b.data().data();
    F* pc = out.data().data();
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            const F ail = pa[static_cast<std::size_t>(i) * k + l];
            if (ail == F(0)) continue;
            const F* brow = pb + static_cast<std::size_t>(l) * n;
            F* crow = pc + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    if (detail::taping<F>({&a, &b})) {
        out.set_requires_grad(true);
        detail::record<F>([a = Tensor<F>(a), b = Tensor<F>(b), out, m, k, n]() mutable {
            if (!out.has_grad()) return;
            const F* go = out.grad().data();
            if (a.requires_grad()) {
                F* ga = a.grad().data();
                const F* pb = b.data().data();
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        const F* grow = go + static_cast<std::size_t>(i) * n;
                        const F* brow = pb + static_cast<std::size_t>(l) * n;
                        F s = F(0);
                        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                        ga[static_cast<std::size_t>(i) * k + l] += s;
                    }
            }
            if (b.requires_grad()) {
                F* gb = b.grad().data();
                const F* pa = a.data().data();
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        const F ail = pa[static_cast<std::size_t>(i) * k + l];
                        if (ail == F(0)) continue;
                        const F* grow = go + static_cast<std::size_t>(i) * n;
                        F* gbrow = gb + static_cast<std::size_t>(l) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += ail * grow[j];
                    }
            }
        });
    }
    return out;
}

template <typename F>
Tensor<F> transpose(const Tensor<F>& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required, got " + shape_str(x.shape()));
    const int m = x.extent(0), n = x.extent(1);
    Tensor<F> out = Tensor<F>::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data()[static_cast<std::size_t>(j) * m + i] = x(i, j);
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, m, n]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    gx[static_cast<std::size_t>(i) * n + j] += go[static_cast<std::size_t>(j) * m + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization and probability ops
// ---------------------------------------------------------------------------

// Softmax along `axis` (negative counts from the end). Stable via
// max-subtraction. -inf entries (masking) map to exactly 0; a slice with
// no finite entry is a caller bug and raises.
template <typename F>
Tensor<F> softmax(const Tensor<F>& x, int axis = -1) {
    if (x.rank() < 1) throw std::invalid_argument("softmax: rank >= 1 required");
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
    const int n = x.extent(axis);
    std::size_t inner = 1;
    for (int ax = axis + 1; ax < x.rank(); ++ax) inner *= static_cast<std::size_t>(x.extent(ax));
    const std::size_t outer = x.size() / (inner * static_cast<std::size_t>(n));
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    const F neg_inf = -std::numeric_limits<F>::infinity();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * static_cast<std::size_t>(n) * inner + in;
            F mx = neg_inf;
            for (int i = 0; i < n; ++i) mx = std::max(mx, x.data()[base + static_cast<std::size_t>(i) * inner]);
            if (mx == neg_inf)
                throw std::invalid_argument("softmax: slice " + std::to_string(o * inner + in) +
                                            " has no finite entry");
            F denom = F(0);
            for (int i = 0; i < n; ++i) {
                const F e = std::exp(x.data()[base + static_cast<std::size_t>(i) * inner] - mx);
                out.data()[base + static_cast<std::size_t>(i) * inner] = e;
                denom += e;
            }
            for (int i = 0; i < n; ++i) out.data()[base + static_cast<std::size_t>(i) * inner] /= denom;
        }
    }
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, n, inner, outer]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            const auto& y = out.data();
            auto& gx = x.grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * static_cast<std::size_t>(n) * inner + in;
                    F dot = F(0);
                    for (int i = 0; i < n; ++i) {
                        const std::size_t ix = base + static_cast<std::size_t>(i) * inner;
                        dot += go[ix] * y[ix];
                    }
                    for (int i = 0; i < n; ++i) {
                        const std::size_t ix = base + static_cast<std::size_t>(i) * inner;
                        gx[ix] += y[ix] * (go[ix] - dot);
                    }
                }
        });
    }
    return out;
}

// Layer normalization over the last axis with learnable gain and bias.
// Population variance; eps under the square root.
template <typename F>
Tensor<F> layer_norm(const Tensor<F>& x, const Tensor<F>& gain, const Tensor<F>& bias, F eps = F(1e-6)) {
    if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank >= 1 required");
    const int d = x.extent(x.rank() - 1);
    if (gain.rank() != 1 || bias.rank() != 1 || gain.extent(0) != d || bias.extent(0) != d)
        throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                                    shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    const std::size_t rows = x.size() / static_cast<std::size_t>(d);
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    // normalized values and inverse stddev per row, kept for backward
    auto xhat = std::make_shared<std::vector<F>>(x.size());
    auto inv_std = std::make_shared<std::vector<F>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * static_cast<std::size_t>(d);
        F mean = F(0);
        for (int j = 0; j < d; ++j) mean += x.data()[base + static_cast<std::size_t>(j)];
        mean /= static_cast<F>(d);
        F var = F(0);
        for (int j = 0; j < d; ++j) {
            const F c = x.data()[base + static_cast<std::size_t>(j)] - mean;
            var += c * c;
        }
        var /= static_cast<F>(d);
        const F is = F(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int j = 0; j < d; ++j) {
            const F xh = (x.data()[base + static_cast<std::size_t>(j)] - mean) * is;
            (*xhat)[base + static_cast<std::size_t>(j)] = xh;
            out.data()[base + static_cast<std::size_t>(j)] = gain(j) * xh + bias(j);
        }
    }
    if (detail::taping<F>({&x, &gain, &bias})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), gain = Tensor<F>(gain), bias = Tensor<F>(bias), out, xhat, inv_std, rows, d]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * static_cast<std::size_t>(d);
                if (x.requires_grad()) {
                    // d/dx of gain*(x-mu)/sqrt(var+eps): project out mean and
                    // the xhat component, then rescale.
                    F mean_g = F(0), mean_gx = F(0);
                    for (int j = 0; j < d; ++j) {
                        const std::size_t ix = base + static_cast<std::size_t>(j);
                        const F g = go[ix] * gain(j);
                        mean_g += g;
                        mean_gx += g * (*xhat)[ix];
                    }
                    mean_g /= static_cast<F>(d);
                    mean_gx /= static_cast<F>(d);
                    auto& gx = x.grad();
                    for (int j = 0; j < d; ++j) {
                        const std::size_t ix = base + static_cast<std::size_t>(j);
                        const F g = go[ix] * gain(j);
                        gx[ix] += (*inv_std)[r] * (g - mean_g - (*xhat)[ix] * mean_gx);
                    }
                }
                if (gain.requires_grad()) {
                    auto& gg = gain.grad();
                    for (int j = 0; j < d; ++j) {
                        const std::size_t ix = base + static_cast<std::size_t>(j);
                        gg[static_cast<std::size_t>(j)] += go[ix] * (*xhat)[ix];
                    }
                }
                if (bias.requires_grad()) {
                    auto& gb = bias.grad();
                    for (int j = 0; j < d; ++j)
                        gb[static_cast<std::size_t>(j)] += go[base + static_cast<std::size_t>(j)];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lookup, loss, dropout
// ---------------------------------------------------------------------------

template <typename F>
Tensor<F> embedding_lookup(const Tensor<F>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
    const int vocab = table.extent(0), d = table.extent(1);
    for (std::size_t t = 0; t < ids.size(); ++t)
        if (ids[t] < 0 || ids[t] >= vocab)
            throw std::invalid_argument("embedding_lookup: token id " + std::to_string(ids[t]) + " at position " +
                                        std::to_string(t) + " out of range [0," + std::to_string(vocab) + ")");
    Tensor<F> out = Tensor<F>::zeros({static_cast<int>(ids.size()), d});
    for (std::size_t t = 0; t < ids.size(); ++t)
        std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[t]) * d, d,
                    out.data().begin() + t * static_cast<std::size_t>(d));
    if (detail::taping<F>({&table})) {
        out.set_requires_grad(true);
        detail::record<F>([table = Tensor<F>(table), out, ids, d]() mutable {
            if (!out.has_grad() || !table.requires_grad()) return;
            const auto& go = out.grad();
            auto& gt = table.grad();
            for (std::size_t t = 0; t < ids.size(); ++t)
                for (int j = 0; j < d; ++j)
                    gt[static_cast<std::size_t>(ids[t]) * d + j] += go[t * static_cast<std::size_t>(d) + j];
        });
    }
    return out;
}

// -log softmax(logits)[target] for rank-1 logits.
template <typename F>
Tensor<F> cross_entropy(const Tensor<F>& logits, int target) {
    if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: rank-1 logits required");
    const int n = logits.extent(0);
    if (target < 0 || target >= n)
        throw std::invalid_argument("cross_entropy: target " + std::to_string(target) + " out of range [0," +
                                    std::to_string(n) + ")");
    F mx = logits(0);
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits(i));
    auto probs = std::make_shared<std::vector<F>>(static_cast<std::size_t>(n));
    F denom = F(0);
    for (int i = 0; i < n; ++i) {
        (*probs)[static_cast<std::size_t>(i)] = std::exp(logits(i) - mx);
        denom += (*probs)[static_cast<std::size_t>(i)];
    }
    for (auto& p : *probs) p /= denom;
    const F loss = std::log(denom) + mx - logits(target);
    Tensor<F> out = Tensor<F>::scalar(loss);
    if (detail::taping<F>({&logits})) {
        out.set_requires_grad(true);
        detail::record<F>([logits = Tensor<F>(logits), out, probs, target, n]() mutable {
            if (!out.has_grad() || !logits.requires_grad()) return;
            const F go = out.grad()[0];
            auto& gl = logits.grad();
            for (int i = 0; i < n; ++i)
                gl[static_cast<std::size_t>(i)] +=
                    go * ((*probs)[static_cast<std::size_t>(i)] - (i == target ? F(1) : F(0)));
        });
    }
    return out;
}

// Inverted dropout: each element survives with probability 1-rate and is
// scaled by 1/(1-rate). Identity (same handle, bitwise) when not training
// or when rate is 0.
template <typename F>
Tensor<F> dropout(const Tensor<F>& x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    auto mask = std::make_shared<std::vector<F>>(x.size());
    const F keep_scale = static_cast<F>(1.0 / (1.0 - rate));
    Tensor<F> out = Tensor<F>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*mask)[i] = rng.uniform() < rate ? F(0) : keep_scale;
        out.data()[i] = x.data()[i] * (*mask)[i];
    }
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, mask]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

inline int conv_out_extent(int in, int stride) { return (in + stride - 1) / stride; }

// Cross-correlation of x[h,w,c_in] with kernel[kh,kw,c_in,c_out] plus bias,
// zero same-padding (TensorFlow convention: total pad = (out-1)*stride+k-in,
// split with the smaller half before).
template <typename F>
Tensor<F> conv2d(const Tensor<F>& x, const Tensor<F>& kernel, const Tensor<F>& bias, int stride) {
    if (x.rank() != 3 || kernel.rank() != 4)
        throw std::invalid_argument("conv2d: need x[h,w,c_in] and kernel[kh,kw,c_in,c_out], got " +
                                    shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int h = x.extent(0), w = x.extent(1), cin = x.extent(2);
    const int kh = kernel.extent(0), kw = kernel.extent(1), cout = kernel.extent(3);
    if (kernel.extent(2) != cin)
        throw std::invalid_argument("conv2d: kernel input channels " + shape_str(kernel.shape()) +
                                    " do not match input " + shape_str(x.shape()));
    if (bias.rank() != 1 || bias.extent(0) != cout)
        throw std::invalid_argument("conv2d: bias must be [" + std::to_string(cout) + "]");
    const int oh = conv_out_extent(h, stride), ow = conv_out_extent(w, stride);
    const int pad_h = std::max(0, (oh - 1) * stride + kh - h);
    const int pad_w = std::max(0, (ow - 1) * stride + kw - w);
    const int pad_top = pad_h / 2, pad_left = pad_w / 2;

    Tensor<F> out = Tensor<F>::zeros({oh, ow, cout});
    const F* px = x.data().data();
    const F* pk = kernel.data().data();
    F* po = out.data().data();
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            F* orow = po + (static_cast<std::size_t>(oy) * ow + ox) * cout;
            for (int co = 0; co < cout; ++co) orow[co] = bias(co);
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad_top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - pad_left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const F* xp = px + (static_cast<std::size_t>(iy) * w + ix) * cin;
                    const F* kp = pk + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const F xv = xp[ci];
                        if (xv == F(0)) continue;
                        const F* krow = kp + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) orow[co] += xv * krow[co];
                    }
                }
            }
        }
    if (detail::taping<F>({&x, &kernel, &bias})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), kernel = Tensor<F>(kernel), bias = Tensor<F>(bias), out, stride, pad_top, pad_left]() mutable {
            if (!out.has_grad()) return;
            const int h = x.extent(0), w = x.extent(1), cin = x.extent(2);
            const int kh = kernel.extent(0), kw = kernel.extent(1), cout = kernel.extent(3);
            const int oh = out.extent(0), ow = out.extent(1);
            const auto& go = out.grad();
            const bool need_x = x.requires_grad(), need_k = kernel.requires_grad(), need_b = bias.requires_grad();
            F* gx = need_x ? x.grad().data() : nullptr;
            F* gk = need_k ? kernel.grad().data() : nullptr;
            F* gb = need_b ? bias.grad().data() : nullptr;
            const F* px = x.data().data();
            const F* pk = kernel.data().data();
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const F* grow = go.data() + (static_cast<std::size_t>(oy) * ow + ox) * cout;
                    if (need_b)
                        for (int co = 0; co < cout; ++co) gb[co] += grow[co];
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad_top + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad_left + kx;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t xoff = (static_cast<std::size_t>(iy) * w + ix) * cin;
                            const std::size_t koff = (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                            for (int ci = 0; ci < cin; ++ci) {
                                F dot = F(0);
                                const F* krow = pk + koff + static_cast<std::size_t>(ci) * cout;
                                const F xv = px[xoff + static_cast<std::size_t>(ci)];
                                for (int co = 0; co < cout; ++co) {
                                    const F g = grow[co];
                                    dot += g * krow[co];
                                    if (need_k) gk[koff + static_cast<std::size_t>(ci) * cout + co] += xv * g;
                                }
                                if (need_x) gx[xoff + static_cast<std::size_t>(ci)] += dot;
                            }
                        }
                    }
                }
        });
    }
    return out;
}

// Reorders a [h,w,c] feature map into a width-major sequence [w, h*c];
// slot index is height-major: out[t][y*c + ch] = x[y,t,ch]. Bijective.
template <typename F>
Tensor<F> columns_to_sequence(const Tensor<F>& x) {
    if (x.rank() != 3) throw std::invalid_argument("columns_to_sequence: rank-3 input required");
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    Tensor<F> out = Tensor<F>::zeros({w, h * c});
    for (int y = 0; y < h; ++y)
        for (int t = 0; t < w; ++t)
            for (int ch = 0; ch < c; ++ch)
                out.data()[static_cast<std::size_t>(t) * (h * c) + y * c + ch] = x(y, t, ch);
    if (detail::taping<F>({&x})) {
        out.set_requires_grad(true);
        detail::record<F>([x = Tensor<F>(x), out, h, w, c]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (int y = 0; y < h; ++y)
                for (int t = 0; t < w; ++t)
                    for (int ch = 0; ch < c; ++ch)
                        gx[(static_cast<std::size_t>(y) * w + t) * c + ch] +=
                            go[static_cast<std::size_t>(t) * (h * c) + y * c + ch];
        });
    }
    return out;
}

// Inverse of columns_to_sequence, for round-trip checks.
template <typename F>
Tensor<F> sequence_to_columns(const Tensor<F>& seq, int h, int c) {
    if (seq.rank() != 2 || seq.extent(1) != h * c)
        throw std::invalid_argument("sequence_to_columns: shape mismatch");
    const int w = seq.extent(0);
    Tensor<F> out = Tensor<F>::zeros({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int t = 0; t < w; ++t)
            for (int ch = 0; ch < c; ++ch)
                out.data()[(static_cast<std::size_t>(y) * w + t) * c + ch] =
                    seq.data()[static_cast<std::size_t>(t) * (h * c) + y * c + ch];
    return out;
}

// ---------------------------------------------------------------------------
// Init helpers (no tape interaction)
// ---------------------------------------------------------------------------

template <typename F>
Tensor<F> uniform_init(std::vector<int> shape, Rng& rng, double lo, double hi, bool requires_grad = true) {
    Tensor<F> t = Tensor<F>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = static_cast<F>(rng.uniform(lo, hi));
    return t;
}

// Glorot/Xavier uniform given explicit fan-in and fan-out.
template <typename F>
Tensor<F> glorot_init(std::vector<int> shape, Rng& rng, int fan_in, int fan_out, bool requires_grad = true) {
    const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
    return uniform_init<F>(std::move(shape), rng, -limit, limit, requires_grad);
}

template <typename F>
int argmax(const Tensor<F>& x) {
    int best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x.data()[i] > x.data()[best]) best = static_cast<int>(i);
    return best;
}

} // namespace nrtr
