#pragma once

#include <cmath>
#include <vector>

#include "nrtr/charset.hpp"
#include "nrtr/tensor.hpp"

namespace nrtr {

// Sinusoidal position table: a sin block over the first d_model/2 entries
// followed by a cos block sharing the same frequencies, so the pair
// (i, i+d_model/2) rotates linearly with position. Entries are computed in
// 64-bit and cast, which makes regeneration bitwise reproducible.
template <typename F>
struct PositionalEncodingTable {
    int max_len = 0;
    int d_model = 0;
    Tensor<F> table; // [max_len, d_model], frozen

    static PositionalEncodingTable build(int max_len, int d_model) {
        if (d_model < 2 || d_model % 2 != 0)
            throw ConfigError("positional encoding requires an even d_model >= 2, got " + std::to_string(d_model));
        if (max_len < 1) throw ConfigError("positional encoding requires max_len >= 1");
        PositionalEncodingTable pe;
        pe.max_len = max_len;
        pe.d_model = d_model;
        pe.table = Tensor<F>::zeros({max_len, d_model});
        const int half = d_model / 2;
        for (int pos = 0; pos < max_len; ++pos)
            for (int i = 0; i < half; ++i) {
                const double angle =
                    static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / d_model);
                pe.table.data()[static_cast<std::size_t>(pos) * d_model + i] = static_cast<F>(std::sin(angle));
                pe.table.data()[static_cast<std::size_t>(pos) * d_model + half + i] = static_cast<F>(std::cos(angle));
            }
        return pe;
    }

    // Frozen copy of rows [0, len).
    Tensor<F> rows(int len) const {
        if (len < 1 || len > max_len)
            throw ConfigError("sequence length " + std::to_string(len) + " exceeds positional table of " +
                              std::to_string(max_len));
        Tensor<F> out = Tensor<F>::zeros({len, d_model});
        std::copy_n(table.data().begin(), static_cast<std::size_t>(len) * d_model, out.data().begin());
        return out;
    }
};

// Learnable character embedding: 38 output classes plus the internal BOS row.
template <typename F>
struct CharEmbedding {
    Tensor<F> matrix; // [39, d_model]

    static CharEmbedding init(int d_model, Rng& rng) {
        CharEmbedding e;
        // uniform(-1/sqrt(d), 1/sqrt(d)) keeps rows comparable to PE magnitude
        const double lim = 1.0 / std::sqrt(static_cast<double>(d_model));
        e.matrix = uniform_init<F>({charset::kVocabSize, d_model}, rng, -lim, lim);
        return e;
    }
};

struct ForwardCtx {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;
};

template <typename F>
Tensor<F> apply_dropout(const Tensor<F>& x, const ForwardCtx& ctx) {
    if (!ctx.training || ctx.dropout == 0.0) return x;
    if (ctx.rng == nullptr) throw std::invalid_argument("training-mode dropout needs an rng");
    return dropout(x, ctx.dropout, *ctx.rng, true);
}

// Token embeddings plus position rows, with residual dropout on the sum in
// training mode.
template <typename F>
Tensor<F> embed_tokens(const TokenSequence& tokens, const CharEmbedding<F>& emb,
                       const PositionalEncodingTable<F>& pe, const ForwardCtx& ctx) {
    if (tokens.empty()) throw std::invalid_argument("embed_tokens: empty token sequence");
    const Tensor<F> looked = embedding_lookup(emb.matrix, tokens);
    return apply_dropout(add(looked, pe.rows(static_cast<int>(tokens.size()))), ctx);
}

} // namespace nrtr
