#include "nrtr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "nrtr/attention.hpp"
#include "nrtr/model.hpp"

namespace nrtr {

double finite_difference_check(const std::vector<Tensor<double>>& params,
                               const std::function<Tensor<double>()>& loss_fn, double h) {
    // one taped pass for the analytic gradients
    std::vector<Tensor<double>> mut = params;
    for (auto& p : mut) p.zero_grad();
    {
        Tape<double> tape;
        tape.backward(loss_fn());
    }
    double worst = 0.0;
    for (auto& p : mut) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double saved = p.data()[j];
            p.data()[j] = saved + h;
            const double up = loss_fn().value();
            p.data()[j] = saved - h;
            const double down = loss_fn().value();
            p.data()[j] = saved;
            const double g_fd = (up - down) / (2.0 * h);
            const double g_ad = p.grad()[j];
            const double rel = std::abs(g_ad - g_fd) / std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
    return uniform_init<double>(std::move(shape), rng, -1.0, 1.0, requires_grad);
}

// Weighted sum against fixed coefficients so every output entry feeds the
// scalar loss with a distinct gradient.
Tensor<double> mix_to_scalar(const Tensor<double>& x, Rng& rng) {
    Tensor<double> weights = random_tensor(x.shape(), rng, false);
    return sum(mul(x, weights));
}

GradCheckResult check_attention(Rng& rng) {
    Tensor<double> q = random_tensor({4, 6}, rng);
    Tensor<double> k = random_tensor({5, 6}, rng);
    Tensor<double> v = random_tensor({5, 3}, rng);
    Rng mix(rng.next_u64());
    const AttentionMask mask = make_padding_mask(4, 4, 5);
    double worst = 0.0;
    {
        Rng m1 = mix.fork(1);
        worst = finite_difference_check({q, k, v}, [&]() {
            Rng local = m1;
            return mix_to_scalar(scaled_dot_product_attention(q, k, v, nullptr), local);
        });
    }
    {
        Rng m2 = mix.fork(2);
        worst = std::max(worst, finite_difference_check({q, k, v}, [&]() {
                             Rng local = m2;
                             return mix_to_scalar(scaled_dot_product_attention(q, k, v, &mask), local);
                         }));
    }
    return {"attention", worst};
}

GradCheckResult check_multi_head(Rng& rng) {
    const int d_model = 8;
    Rng wrng = rng.fork(1);
    AttentionWeights<double> w = AttentionWeights<double>::init(d_model, 2, 3, wrng);
    Tensor<double> x = random_tensor({5, d_model}, rng, false);
    const AttentionMask causal = make_causal_mask(5);
    std::vector<Tensor<double>> params;
    for (int i = 0; i < w.heads(); ++i) {
        params.push_back(w.wq[static_cast<std::size_t>(i)]);
        params.push_back(w.wk[static_cast<std::size_t>(i)]);
        params.push_back(w.wv[static_cast<std::size_t>(i)]);
    }
    params.push_back(w.wo);
    Rng mix(rng.next_u64());
    const double worst = finite_difference_check(params, [&]() {
        Rng local = mix;
        return mix_to_scalar(multi_head_attention(x, x, x, w, &causal), local);
    });
    return {"multi_head", worst};
}

GradCheckResult check_ffn(Rng& rng) {
    Rng wrng = rng.fork(1);
    FfnParams<double> f = FfnParams<double>::init(6, 10, wrng);
    // nonzero biases move ReLU away from its kink
    for (auto& b : f.b1.data()) b = wrng.uniform(-0.5, 0.5);
    Tensor<double> x = random_tensor({4, 6}, rng);
    Rng mix(rng.next_u64());
    const double worst = finite_difference_check({x, f.w1, f.b1, f.w2, f.b2}, [&]() {
        Rng local = mix;
        return mix_to_scalar(ffn(x, f), local);
    });
    return {"ffn", worst};
}

GradCheckResult check_layer_norm(Rng& rng) {
    Tensor<double> x = random_tensor({3, 7}, rng);
    Tensor<double> gain = random_tensor({7}, rng);
    Tensor<double> bias = random_tensor({7}, rng);
    Rng mix(rng.next_u64());
    const double worst = finite_difference_check({x, gain, bias}, [&]() {
        Rng local = mix;
        return mix_to_scalar(layer_norm(x, gain, bias), local);
    });
    return {"layer_norm", worst};
}

// Small geometry keeps the finite-difference sweep fast: height 8 inputs,
// d_model 16.
ConvStackConfig tiny_conv_config() { return ConvStackConfig{2, 3, 16, 8}; }

GradCheckResult check_conv_stack(Rng& rng) {
    const ConvStackConfig cc = tiny_conv_config();
    Rng wrng = rng.fork(1);
    ConvStack<double> stack = ConvStack<double>::init(cc, wrng);
    PositionalEncodingTable<double> pe = PositionalEncodingTable<double>::build(16, cc.d_model);
    Tensor<double> img = random_tensor({cc.input_height, 8}, rng);
    std::vector<Tensor<double>> params{img};
    for (std::size_t i = 0; i < stack.kernels.size(); ++i) {
        params.push_back(stack.kernels[i]);
        params.push_back(stack.biases[i]);
    }
    ForwardCtx ctx; // dropout off
    Rng mix(rng.next_u64());
    const double worst = finite_difference_check(params, [&]() {
        Rng local = mix;
        return mix_to_scalar(modality_transform(img, 8, stack, pe, ctx).seq, local);
    });
    return {"conv_stack", worst};
}

GradCheckResult check_embeddings(Rng& rng) {
    Rng wrng = rng.fork(1);
    CharEmbedding<double> emb = CharEmbedding<double>::init(12, wrng);
    PositionalEncodingTable<double> pe = PositionalEncodingTable<double>::build(8, 12);
    const TokenSequence tokens{charset::kBos, 0, 5, 30, charset::kEos};
    ForwardCtx ctx;
    Rng mix(rng.next_u64());
    const double worst = finite_difference_check({emb.matrix}, [&]() {
        Rng local = mix;
        return mix_to_scalar(embed_tokens(tokens, emb, pe, ctx), local);
    });
    return {"embeddings", worst};
}

GradCheckResult check_encoder_decoder_loss(Rng& rng) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.n_enc = 1;
    cfg.n_dec = 1;
    cfg.d_ff = 8;
    cfg.conv_layers = 2;
    cfg.input_height = 8;
    cfg.pe_max_len = 16;
    cfg.dropout = 0.0;
    Recognizer<double> model(cfg, rng.next_u64());

    Tensor<double> img = random_tensor({cfg.input_height, 12}, rng, false);
    const TokenSequence target = tokenize("a1");
    std::vector<Tensor<double>> params;
    for (const auto& p : model.named_params()) params.push_back(p.tensor);
    ForwardCtx ctx;
    const double worst = finite_difference_check(params, [&]() {
        auto [total, count] = model.loss_sum(img, 10, target, ctx);
        return scale(total, 1.0 / count);
    });
    return {"encdec_loss", worst};
}

} // namespace

std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCheckResult> results;
    results.push_back(check_attention(rng));
    results.push_back(check_multi_head(rng));
    results.push_back(check_ffn(rng));
    results.push_back(check_layer_norm(rng));
    results.push_back(check_conv_stack(rng));
    results.push_back(check_embeddings(rng));
    results.push_back(check_encoder_decoder_loss(rng));
    return results;
}

} // namespace nrtr
