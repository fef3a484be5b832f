#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nrtr/charset.hpp"
#include "nrtr/encoder.hpp"

namespace nrtr {

// Masked self-attention, then cross-attention with keys/values from the
// encoder output and queries from the previous sublayer, then FFN. Each
// sublayer is wrapped in residual + layer norm.
template <typename F>
struct DecoderBlock {
    AttentionWeights<F> self_attn;
    LayerNormParams<F> ln1;
    AttentionWeights<F> cross_attn;
    LayerNormParams<F> ln2;
    FfnParams<F> ffn_params;
    LayerNormParams<F> ln3;

    static DecoderBlock init(int d_model, int h, int head_dim, int d_ff, Rng& rng) {
        DecoderBlock b;
        b.self_attn = AttentionWeights<F>::init(d_model, h, head_dim, rng);
        b.ln1 = LayerNormParams<F>::init(d_model);
        b.cross_attn = AttentionWeights<F>::init(d_model, h, head_dim, rng);
        b.ln2 = LayerNormParams<F>::init(d_model);
        b.ffn_params = FfnParams<F>::init(d_model, d_ff, rng);
        b.ln3 = LayerNormParams<F>::init(d_model);
        return b;
    }

    Tensor<F> forward(const Tensor<F>& x, const Tensor<F>& enc_out, const AttentionMask& causal,
                      const AttentionMask* cross_pad, const ForwardCtx& ctx) const {
        const Tensor<F> s = multi_head_attention(x, x, x, self_attn, &causal);
        const Tensor<F> x1 = residual_norm(x, s, ln1, ctx);
        const Tensor<F> c = multi_head_attention(x1, enc_out, enc_out, cross_attn, cross_pad);
        const Tensor<F> x2 = residual_norm(x1, c, ln2, ctx);
        return residual_norm(x2, ffn(x2, ffn_params), ln3, ctx);
    }
};

// Linear projection to the 38 character-class logits.
template <typename F>
struct OutputProjection {
    Tensor<F> w; // [d_model, 38]
    Tensor<F> b; // [38]

    static OutputProjection init(int d_model, Rng& rng) {
        OutputProjection p;
        p.w = glorot_init<F>({d_model, charset::kNumClasses}, rng, d_model, charset::kNumClasses);
        p.b = Tensor<F>::zeros({charset::kNumClasses}, true);
        return p;
    }
};

template <typename F>
struct Decoder {
    std::vector<DecoderBlock<F>> blocks;
    OutputProjection<F> proj;

    static Decoder init(int n_blocks, int d_model, int h, int head_dim, int d_ff, Rng& rng) {
        if (n_blocks < 1) throw ConfigError("decoder needs at least one block");
        Decoder d;
        for (int i = 0; i < n_blocks; ++i) d.blocks.push_back(DecoderBlock<F>::init(d_model, h, head_dim, d_ff, rng));
        d.proj = OutputProjection<F>::init(d_model, rng);
        return d;
    }
};

// Teacher-forced logits: embeds BOS-prefixed tokens, runs the blocks with a
// causal self-attention mask and the encoder padding mask on cross
// attention, and projects each position to 38 logits. Row t predicts target
// token t+1.
template <typename F>
Tensor<F> decode_logits(const TokenSequence& tgt_tokens, const Tensor<F>& enc_out, int enc_valid_len,
                        const Decoder<F>& dec, const CharEmbedding<F>& emb, const PositionalEncodingTable<F>& pe,
                        const ForwardCtx& ctx) {
    if (tgt_tokens.empty()) throw std::invalid_argument("decode_logits: empty target sequence");
    if (tgt_tokens.front() != charset::kBos)
        throw std::invalid_argument("decode_logits: target sequence must begin with BOS");
    const int t_len = static_cast<int>(tgt_tokens.size());
    const AttentionMask causal = make_causal_mask(t_len);
    AttentionMask cross;
    const AttentionMask* cross_ptr = nullptr;
    if (enc_valid_len < enc_out.extent(0)) {
        cross = make_padding_mask(t_len, enc_valid_len, enc_out.extent(0));
        cross_ptr = &cross;
    }
    Tensor<F> x = embed_tokens(tgt_tokens, emb, pe, ctx);
    for (const auto& b : dec.blocks) x = b.forward(x, enc_out, causal, cross_ptr, ctx);
    return add_rowwise(matmul(x, dec.proj.w), dec.proj.b);
}

// Mean teacher-forced cross-entropy over the non-sentinel target positions.
// Targets of kTargetPad mark batch padding and are excluded.
template <typename F>
std::pair<Tensor<F>, int> sequence_loss_sum(const Tensor<F>& logits, const TokenSequence& targets) {
    if (logits.rank() != 2 || static_cast<std::size_t>(logits.extent(0)) != targets.size())
        throw std::invalid_argument("sequence_loss: logits rows " + shape_str(logits.shape()) +
                                    " do not match target length " + std::to_string(targets.size()));
    Tensor<F> total;
    int count = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] == kTargetPad) continue;
        Tensor<F> ce = cross_entropy(take_row(logits, static_cast<int>(t)), targets[t]);
        total = count == 0 ? ce : add(total, ce);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("sequence_loss: no unpadded target positions");
    return {total, count};
}

template <typename F>
Tensor<F> sequence_loss(const Tensor<F>& logits, const TokenSequence& targets) {
    auto [total, count] = sequence_loss_sum(logits, targets);
    return scale(total, F(1) / static_cast<F>(count));
}

// One greedy step driver, factored so forced-logit tests can exercise the
// stopping logic without a trained model.
struct GreedyResult {
    std::string text;
    bool truncated = false;
};

template <typename F>
GreedyResult greedy_decode_with(const std::function<Tensor<F>(const TokenSequence&)>& last_logits, int max_len) {
    if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
    TokenSequence tokens{charset::kBos};
    GreedyResult res;
    for (int step = 0; step < max_len; ++step) {
        const Tensor<F> logits = last_logits(tokens);
        const int next = argmax(logits); // ties break toward the lowest class
        if (next == charset::kEos) return res;
        res.text.push_back(charset::id_to_char(next));
        tokens.push_back(next);
    }
    res.truncated = true;
    return res;
}

// Autoregressive argmax decoding from BOS until EOS or max_len. Recomputes
// the decoder per step; deterministic for fixed weights and inputs.
template <typename F>
GreedyResult greedy_decode(const Tensor<F>& enc_out, int enc_valid_len, const Decoder<F>& dec,
                           const CharEmbedding<F>& emb, const PositionalEncodingTable<F>& pe, int max_len) {
    ForwardCtx eval_ctx; // no dropout at inference
    auto step = [&](const TokenSequence& tokens) {
        const Tensor<F> logits = decode_logits(tokens, enc_out, enc_valid_len, dec, emb, pe, eval_ctx);
        return take_row(logits, logits.extent(0) - 1);
    };
    return greedy_decode_with<F>(step, max_len);
}

} // namespace nrtr
