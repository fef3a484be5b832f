#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nrtr/tensor.hpp"

namespace nrtr {

// Pass/blocked pattern over [queries x keys]. Blocked entries become
// additive -inf on the pre-softmax scores, so their weights are exactly 0.
struct AttentionMask {
    int lq = 0;
    int lk = 0;
    std::vector<std::uint8_t> pass; // row-major, 1 = pass

    bool passes(int q, int k) const { return pass[static_cast<std::size_t>(q) * lk + k] != 0; }
};

// Lower-triangular pass pattern: key position may not exceed query position.
inline AttentionMask make_causal_mask(int len) {
    if (len < 1) throw std::invalid_argument("make_causal_mask: length must be >= 1");
    AttentionMask m{len, len, std::vector<std::uint8_t>(static_cast<std::size_t>(len) * len, 0)};
    for (int q = 0; q < len; ++q)
        for (int k = 0; k <= q; ++k) m.pass[static_cast<std::size_t>(q) * len + k] = 1;
    return m;
}

// Blocks key columns >= valid_len for every query row.
inline AttentionMask make_padding_mask(int lq, int valid_len, int lk) {
    if (lq < 1 || lk < 1) throw std::invalid_argument("make_padding_mask: dimensions must be >= 1");
    if (valid_len < 1 || valid_len > lk)
        throw std::invalid_argument("make_padding_mask: valid length " + std::to_string(valid_len) +
                                    " outside [1," + std::to_string(lk) + "]");
    AttentionMask m{lq, lk, std::vector<std::uint8_t>(static_cast<std::size_t>(lq) * lk, 0)};
    for (int q = 0; q < lq; ++q)
        for (int k = 0; k < valid_len; ++k) m.pass[static_cast<std::size_t>(q) * lk + k] = 1;
    return m;
}

namespace detail {

inline void check_mask(const AttentionMask& mask, int lq, int lk) {
    if (mask.lq != lq || mask.lk != lk)
        throw std::invalid_argument("attention mask is " + std::to_string(mask.lq) + "x" + std::to_string(mask.lk) +
                                    " but scores are " + std::to_string(lq) + "x" + std::to_string(lk));
    for (int q = 0; q < lq; ++q) {
        bool any = false;
        for (int k = 0; k < lk && !any; ++k) any = mask.passes(q, k);
        if (!any) throw std::invalid_argument("attention mask fully blocks query row " + std::to_string(q));
    }
}

// Applies blocked entries as -inf. Gradient passes through at pass entries.
template <typename F>
Tensor<F> mask_scores(const Tensor<F>& scores, const AttentionMask& mask) {
    const int lq = scores.extent(0), lk = scores.extent(1);
    Tensor<F> out = Tensor<F>::zeros(scores.shape());
    const F neg_inf = -std::numeric_limits<F>::infinity();
    for (int q = 0; q < lq; ++q)
        for (int k = 0; k < lk; ++k)
            out.data()[static_cast<std::size_t>(q) * lk + k] = mask.passes(q, k) ? scores(q, k) : neg_inf;
    if (taping<F>({&scores})) {
        out.set_requires_grad(true);
        record<F>([scores = Tensor<F>(scores), out, pass = mask.pass]() mutable {
            if (!out.has_grad() || !scores.requires_grad()) return;
            const auto& go = out.grad();
            auto& gs = scores.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (pass[i]) gs[i] += go[i];
        });
    }
    return out;
}

} // namespace detail

// Q.K^T / sqrt(d_k); the scale keeps the softmax out of its small-gradient
// regions for large d_k.
template <typename F>
Tensor<F> attention_scores(const Tensor<F>& q, const Tensor<F>& k) {
    if (q.rank() != 2 || k.rank() != 2 || q.extent(1) != k.extent(1))
        throw std::invalid_argument("attention_scores: query/key dims mismatch " + shape_str(q.shape()) + " vs " +
                                    shape_str(k.shape()));
    const F inv_sqrt_dk = static_cast<F>(1.0 / std::sqrt(static_cast<double>(q.extent(1))));
    return scale(matmul(q, transpose(k)), inv_sqrt_dk);
}

// Post-softmax weight rows; each sums to 1 and is 0 exactly at blocked keys.
template <typename F>
Tensor<F> attention_weights(const Tensor<F>& q, const Tensor<F>& k, const AttentionMask* mask = nullptr) {
    Tensor<F> scores = attention_scores(q, k);
    if (mask != nullptr) {
        detail::check_mask(*mask, scores.extent(0), scores.extent(1));
        scores = detail::mask_scores(scores, *mask);
    }
    return softmax(scores, -1);
}

// softmax(Q.K^T / sqrt(d_k) + mask).V — every output row is a convex
// combination of value rows.
template <typename F>
Tensor<F> scaled_dot_product_attention(const Tensor<F>& q, const Tensor<F>& k, const Tensor<F>& v,
                                       const AttentionMask* mask = nullptr) {
    if (v.rank() != 2 || v.extent(0) != k.extent(0))
        throw std::invalid_argument("scaled_dot_product_attention: keys " + shape_str(k.shape()) +
                                    " and values " + shape_str(v.shape()) + " must share length");
    return matmul(attention_weights(q, k, mask), v);
}

// Per-head projection matrices plus the output projection. d_q == d_k by
// construction (one head width for queries/keys/values).
template <typename F>
struct AttentionWeights {
    std::vector<Tensor<F>> wq; // h x [d_model, head_dim]
    std::vector<Tensor<F>> wk;
    std::vector<Tensor<F>> wv;
    Tensor<F> wo; // [h*head_dim, d_model]

    int heads() const { return static_cast<int>(wq.size()); }

    static AttentionWeights init(int d_model, int h, int head_dim, Rng& rng) {
        if (h < 1 || head_dim < 1 || d_model < 1)
            throw ConfigError("attention: d_model, heads and head_dim must be positive");
        AttentionWeights w;
        for (int i = 0; i < h; ++i) {
            w.wq.push_back(glorot_init<F>({d_model, head_dim}, rng, d_model, head_dim));
            w.wk.push_back(glorot_init<F>({d_model, head_dim}, rng, d_model, head_dim));
            w.wv.push_back(glorot_init<F>({d_model, head_dim}, rng, d_model, head_dim));
        }
        w.wo = glorot_init<F>({h * head_dim, d_model}, rng, h * head_dim, d_model);
        return w;
    }

    void check(int d_model) const {
        if (wq.empty() || wq.size() != wk.size() || wq.size() != wv.size())
            throw std::invalid_argument("attention weights: inconsistent head count");
        const int head_dim = wq[0].extent(1);
        for (std::size_t i = 0; i < wq.size(); ++i) {
            if (wq[i].extent(0) != d_model || wk[i].extent(0) != d_model || wv[i].extent(0) != d_model)
                throw std::invalid_argument("attention weights: projection rows must equal d_model");
            if (wq[i].extent(1) != head_dim || wk[i].extent(1) != head_dim || wv[i].extent(1) != head_dim)
                throw std::invalid_argument("attention weights: head dims must agree across heads");
        }
        if (wo.extent(0) != heads() * head_dim || wo.extent(1) != d_model)
            throw std::invalid_argument("attention weights: output projection must be [h*head_dim, d_model], got " +
                                        shape_str(wo.shape()));
    }
};

// Heads run scaled dot-product attention over their own projections of the
// inputs; outputs are concatenated and reprojected to d_model.
template <typename F>
Tensor<F> multi_head_attention(const Tensor<F>& q_in, const Tensor<F>& k_in, const Tensor<F>& v_in,
                               const AttentionWeights<F>& w, const AttentionMask* mask = nullptr) {
    const int d_model = q_in.extent(1);
    w.check(d_model);
    if (k_in.extent(1) != d_model || v_in.extent(1) != d_model)
        throw std::invalid_argument("multi_head_attention: all inputs must have width d_model");
    if (k_in.extent(0) != v_in.extent(0))
        throw std::invalid_argument("multi_head_attention: keys and values must share length");
    std::vector<Tensor<F>> heads;
    heads.reserve(w.wq.size());
    for (int i = 0; i < w.heads(); ++i)
        heads.push_back(scaled_dot_product_attention(matmul(q_in, w.wq[static_cast<std::size_t>(i)]),
                                                     matmul(k_in, w.wk[static_cast<std::size_t>(i)]),
                                                     matmul(v_in, w.wv[static_cast<std::size_t>(i)]), mask));
    return matmul(concat_last_axis(heads), w.wo);
}

} // namespace nrtr
