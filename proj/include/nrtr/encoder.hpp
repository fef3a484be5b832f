#pragma once

#include <vector>

#include "nrtr/attention.hpp"
#include "nrtr/embeddings.hpp"
#include "nrtr/tensor.hpp"

namespace nrtr {

template <typename F>
struct LayerNormParams {
    Tensor<F> gain;
    Tensor<F> bias;

    static LayerNormParams init(int d) {
        return {Tensor<F>::full({d}, F(1), true), Tensor<F>::zeros({d}, true)};
    }
};

template <typename F>
struct FfnParams {
    Tensor<F> w1; // [d_model, d_ff]
    Tensor<F> b1; // [d_ff]
    Tensor<F> w2; // [d_ff, d_model]
    Tensor<F> b2; // [d_model]

    static FfnParams init(int d_model, int d_ff, Rng& rng) {
        FfnParams f;
        f.w1 = glorot_init<F>({d_model, d_ff}, rng, d_model, d_ff);
        f.b1 = Tensor<F>::zeros({d_ff}, true);
        f.w2 = glorot_init<F>({d_ff, d_model}, rng, d_ff, d_model);
        f.b2 = Tensor<F>::zeros({d_model}, true);
        return f;
    }
};

// max(0, x.W1 + b1).W2 + b2, applied identically at every position.
template <typename F>
Tensor<F> ffn(const Tensor<F>& x, const FfnParams<F>& p) {
    return add_rowwise(matmul(relu(add_rowwise(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

// Post-norm residual wrapper: LayerNorm(x + Dropout(f(x))).
template <typename F>
Tensor<F> residual_norm(const Tensor<F>& x, const Tensor<F>& fx, const LayerNormParams<F>& ln,
                        const ForwardCtx& ctx) {
    return layer_norm(add(x, apply_dropout(fx, ctx)), ln.gain, ln.bias);
}

// Self-attention sublayer plus position-wise FFN sublayer, each wrapped in
// residual + layer norm.
template <typename F>
struct EncoderBlock {
    AttentionWeights<F> self_attn;
    LayerNormParams<F> ln1;
    FfnParams<F> ffn_params;
    LayerNormParams<F> ln2;

    static EncoderBlock init(int d_model, int h, int head_dim, int d_ff, Rng& rng) {
        EncoderBlock b;
        b.self_attn = AttentionWeights<F>::init(d_model, h, head_dim, rng);
        b.ln1 = LayerNormParams<F>::init(d_model);
        b.ffn_params = FfnParams<F>::init(d_model, d_ff, rng);
        b.ln2 = LayerNormParams<F>::init(d_model);
        return b;
    }

    Tensor<F> forward(const Tensor<F>& x, const AttentionMask* pad_mask, const ForwardCtx& ctx) const {
        const Tensor<F> a = multi_head_attention(x, x, x, self_attn, pad_mask);
        const Tensor<F> x1 = residual_norm(x, a, ln1, ctx);
        return residual_norm(x1, ffn(x1, ffn_params), ln2, ctx);
    }
};

template <typename F>
struct Encoder {
    std::vector<EncoderBlock<F>> blocks;

    static Encoder init(int n_blocks, int d_model, int h, int head_dim, int d_ff, Rng& rng) {
        if (n_blocks < 1) throw ConfigError("encoder needs at least one block");
        Encoder e;
        for (int i = 0; i < n_blocks; ++i) e.blocks.push_back(EncoderBlock<F>::init(d_model, h, head_dim, d_ff, rng));
        return e;
    }

    // Padded key positions are masked; padded query rows are computed but
    // ignored downstream.
    Tensor<F> forward(const Tensor<F>& seq, const AttentionMask* pad_mask, const ForwardCtx& ctx) const {
        Tensor<F> x = seq;
        for (const auto& b : blocks) x = b.forward(x, pad_mask, ctx);
        return x;
    }
};

} // namespace nrtr
