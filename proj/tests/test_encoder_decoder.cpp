#include <cmath>

#include <doctest.h>

#include "nrtr/gradcheck.hpp"
#include "nrtr/model.hpp"

using nrtr::ModelConfig;
using nrtr::Recognizer;
using nrtr::Rng;
using nrtr::Tensor;
using nrtr::TokenSequence;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.n_enc = 2;
    cfg.n_dec = 2;
    cfg.d_ff = 12;
    cfg.conv_layers = 2;
    cfg.input_height = 8;
    cfg.pe_max_len = 32;
    cfg.dropout = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("ffn closed forms") {
    Rng rng(2);
    nrtr::FfnParams<double> f;
    f.w1 = Tensor<double>::zeros({4, 6});
    f.b1 = Tensor<double>::zeros({6});
    f.w2 = nrtr::uniform_init<double>({6, 4}, rng, -1.0, 1.0, false);
    f.b2 = Tensor<double>::from({4}, {0.5, -1.0, 2.0, 0.0});
    Tensor<double> x = nrtr::uniform_init<double>({3, 4}, rng, -1.0, 1.0, false);

    // zero W1/b1: every row is b2
    const Tensor<double> rows = nrtr::ffn(x, f);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) CHECK(rows(i, j) == f.b2.data()[static_cast<std::size_t>(j)]);

    // very negative b1 saturates the ReLU: still b2 rows
    f.w1 = nrtr::uniform_init<double>({4, 6}, rng, -0.1, 0.1, false);
    f.b1 = Tensor<double>::full({6}, -100.0);
    const Tensor<double> sat = nrtr::ffn(x, f);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) CHECK(sat(i, j) == f.b2.data()[static_cast<std::size_t>(j)]);

    // two-matmul oracle on a random case
    f.b1 = nrtr::uniform_init<double>({6}, rng, -0.5, 0.5, false);
    const Tensor<double> got = nrtr::ffn(x, f);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = f.b2.data()[static_cast<std::size_t>(j)];
            for (int m = 0; m < 6; ++m) {
                double hidden = f.b1.data()[static_cast<std::size_t>(m)];
                for (int l = 0; l < 4; ++l) hidden += x(i, l) * f.w1(l, m);
                acc += std::max(0.0, hidden) * f.w2(m, j);
            }
            CHECK(got(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("residual_norm matches the stepwise formula") {
    Rng rng(3);
    const auto ln = nrtr::LayerNormParams<double>::init(6);
    Tensor<double> x = nrtr::uniform_init<double>({2, 6}, rng, -1.0, 1.0, false);
    nrtr::ForwardCtx eval;

    // zero sublayer output: LayerNorm(x)
    const Tensor<double> zf = nrtr::residual_norm(x, Tensor<double>::zeros({2, 6}), ln, eval);
    const Tensor<double> want = nrtr::layer_norm(x, ln.gain, ln.bias);
    for (std::size_t i = 0; i < zf.size(); ++i) CHECK(zf.data()[i] == want.data()[i]);

    // x = 0 with identity-on-zero sublayer: the bias vector (zero init)
    const Tensor<double> zeros = Tensor<double>::zeros({2, 6});
    const Tensor<double> res = nrtr::residual_norm(zeros, zeros, ln, eval);
    for (double v : res.data()) CHECK(v == 0.0);

    // random case: add then normalize, stepwise
    Tensor<double> fx = nrtr::uniform_init<double>({2, 6}, rng, -1.0, 1.0, false);
    const Tensor<double> got = nrtr::residual_norm(x, fx, ln, eval);
    const Tensor<double> step = nrtr::layer_norm(nrtr::add(x, fx), ln.gain, ln.bias);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == step.data()[i]);
}

TEST_CASE("encoder preserves shape and stacks blocks sequentially") {
    Rng rng(5);
    auto enc = nrtr::Encoder<double>::init(2, 8, 1, 4, 6, rng);
    Tensor<double> seq = nrtr::uniform_init<double>({5, 8}, rng, -1.0, 1.0, false);
    nrtr::ForwardCtx eval;
    const Tensor<double> out = enc.forward(seq, nullptr, eval);
    CHECK(out.shape() == seq.shape());

    // stepwise oracle: apply the two blocks by hand
    const Tensor<double> b0 = enc.blocks[0].forward(seq, nullptr, eval);
    const Tensor<double> b1 = enc.blocks[1].forward(b0, nullptr, eval);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == b1.data()[i]);
}

TEST_CASE("encoder block with zeroed attention and ffn is a double layer norm") {
    Rng rng(7);
    auto enc = nrtr::Encoder<double>::init(1, 8, 1, 4, 6, rng);
    auto& b = enc.blocks[0];
    for (auto* t : {&b.self_attn.wo, &b.ffn_params.w2}) {
        Tensor<double> z = *t;
        for (auto& v : z.data()) v = 0.0;
    }
    for (auto& v : b.ffn_params.b2.data()) v = 0.0;
    Tensor<double> seq = nrtr::uniform_init<double>({4, 8}, rng, -1.0, 1.0, false);
    nrtr::ForwardCtx eval;
    const Tensor<double> out = enc.forward(seq, nullptr, eval);
    const Tensor<double> once = nrtr::layer_norm(seq, b.ln1.gain, b.ln1.bias);
    const Tensor<double> twice = nrtr::layer_norm(once, b.ln2.gain, b.ln2.bias);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(twice.data()[i]).epsilon(1e-12));
}

TEST_CASE("length-one encoder sequence works") {
    Rng rng(9);
    auto enc = nrtr::Encoder<double>::init(1, 8, 2, 4, 6, rng);
    Tensor<double> seq = nrtr::uniform_init<double>({1, 8}, rng, -1.0, 1.0, false);
    nrtr::ForwardCtx eval;
    CHECK_NOTHROW(enc.forward(seq, nullptr, eval));
}

TEST_CASE("decoder logits shape, BOS contract, causality") {
    Recognizer<double> model(tiny_config(), 11);
    Rng rng(13);
    Tensor<double> img = nrtr::uniform_init<double>({8, 16}, rng, 0.0, 1.0, false);
    nrtr::ForwardCtx eval;
    const auto enc = model.encode(img, 16, eval);

    const TokenSequence bos_only{nrtr::charset::kBos};
    const Tensor<double> one = model.logits(bos_only, enc, eval);
    CHECK(one.extent(0) == 1);
    CHECK(one.extent(1) == 38);

    // appending a token leaves earlier logit rows unchanged
    const TokenSequence prefix{nrtr::charset::kBos, 4, 9};
    const Tensor<double> before = model.logits(prefix, enc, eval);
    TokenSequence longer = prefix;
    longer.push_back(21);
    const Tensor<double> after = model.logits(longer, enc, eval);
    for (int t = 0; t < 3; ++t)
        for (int c = 0; c < 38; ++c) CHECK(after(t, c) == doctest::Approx(before(t, c)).epsilon(1e-12));

    const TokenSequence no_bos{4, 9};
    CHECK_THROWS_AS(model.logits(no_bos, enc, eval), std::invalid_argument);
    const TokenSequence empty;
    CHECK_THROWS_AS(model.logits(empty, enc, eval), std::invalid_argument);
}

TEST_CASE("perturbing decoder token j leaves logits before j unchanged") {
    Recognizer<double> model(tiny_config(), 17);
    Rng rng(19);
    Tensor<double> img = nrtr::uniform_init<double>({8, 20}, rng, 0.0, 1.0, false);
    nrtr::ForwardCtx eval;
    const auto enc = model.encode(img, 20, eval);

    TokenSequence tokens{nrtr::charset::kBos, 1, 2, 3, 4, 5};
    const Tensor<double> base = model.logits(tokens, enc, eval);
    for (int j = 1; j < 6; ++j) {
        TokenSequence mutated = tokens;
        mutated[static_cast<std::size_t>(j)] = (mutated[static_cast<std::size_t>(j)] + 7) % 38;
        const Tensor<double> out = model.logits(mutated, enc, eval);
        for (int t = 0; t < j; ++t)
            for (int c = 0; c < 38; ++c) CHECK(std::abs(out(t, c) - base(t, c)) < 1e-12);
    }
}

TEST_CASE("decoder output rows softmax to one over exactly 38 classes") {
    Recognizer<double> model(tiny_config(), 23);
    Rng rng(29);
    Tensor<double> img = nrtr::uniform_init<double>({8, 12}, rng, 0.0, 1.0, false);
    nrtr::ForwardCtx eval;
    const auto enc = model.encode(img, 12, eval);
    const Tensor<double> logits = model.logits({nrtr::charset::kBos, 0, 1}, enc, eval);
    CHECK(logits.extent(1) == nrtr::charset::kNumClasses);
    const Tensor<double> probs = nrtr::softmax(logits);
    for (int t = 0; t < 3; ++t) {
        double s = 0;
        for (int c = 0; c < 38; ++c) s += probs(t, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("sequence_loss closed forms and oracle") {
    // uniform logits: ln(38) per position
    const Tensor<double> uniform = Tensor<double>::zeros({3, 38});
    const TokenSequence tgt{5, 9, nrtr::charset::kEos};
    CHECK(nrtr::sequence_loss(uniform, tgt).value() == doctest::Approx(std::log(38.0)).epsilon(1e-12));

    // confident correct logits: loss under 1e-3
    Tensor<double> confident = Tensor<double>::zeros({2, 38});
    confident.data()[3] = 40.0;
    confident.data()[38 + nrtr::charset::kEos] = 40.0;
    const TokenSequence tgt2{3, nrtr::charset::kEos};
    CHECK(nrtr::sequence_loss(confident, tgt2).value() < 1e-3);

    // per-position oracle with padding excluded
    Rng rng(31);
    Tensor<double> logits = nrtr::uniform_init<double>({4, 38}, rng, -2.0, 2.0, false);
    const TokenSequence padded{7, nrtr::charset::kEos, nrtr::kTargetPad, nrtr::kTargetPad};
    double want = 0;
    for (int t = 0; t < 2; ++t) {
        double denom = 0, mx = -1e300;
        for (int c = 0; c < 38; ++c) mx = std::max(mx, logits(t, c));
        for (int c = 0; c < 38; ++c) denom += std::exp(logits(t, c) - mx);
        want += -(logits(t, padded[static_cast<std::size_t>(t)]) - mx - std::log(denom));
    }
    want /= 2;
    CHECK(nrtr::sequence_loss(logits, padded).value() == doctest::Approx(want).epsilon(1e-12));

    const TokenSequence wrong_len{1, 2};
    CHECK_THROWS_AS(nrtr::sequence_loss(logits, wrong_len), std::invalid_argument);
}

TEST_CASE("greedy decode follows forced logits") {
    // EOS forced at the first step: empty string
    auto force_eos = [](const TokenSequence&) {
        Tensor<double> l = Tensor<double>::zeros({38});
        l.data()[nrtr::charset::kEos] = 100.0;
        return l;
    };
    const auto empty = nrtr::greedy_decode_with<double>(force_eos, 8);
    CHECK(empty.text.empty());
    CHECK(!empty.truncated);

    // spells "ab" then EOS
    auto spell = [](const TokenSequence& toks) {
        Tensor<double> l = Tensor<double>::zeros({38});
        if (toks.size() == 1)
            l.data()[0] = 50.0; // 'a'
        else if (toks.size() == 2)
            l.data()[1] = 50.0; // 'b'
        else
            l.data()[nrtr::charset::kEos] = 50.0;
        return l;
    };
    const auto ab = nrtr::greedy_decode_with<double>(spell, 8);
    CHECK(ab.text == "ab");
    CHECK(!ab.truncated);

    // never emits EOS: truncated at max_len
    auto loop = [](const TokenSequence&) {
        Tensor<double> l = Tensor<double>::zeros({38});
        l.data()[2] = 50.0;
        return l;
    };
    const auto cut = nrtr::greedy_decode_with<double>(loop, 3);
    CHECK(cut.text == "ccc");
    CHECK(cut.truncated);

    // argmax ties break toward the lowest class index
    auto tie = [](const TokenSequence& toks) {
        Tensor<double> l = Tensor<double>::zeros({38});
        if (toks.size() > 1) l.data()[nrtr::charset::kEos] = 1.0;
        return l;
    };
    const auto tied = nrtr::greedy_decode_with<double>(tie, 4);
    CHECK(tied.text == "a"); // all-equal logits pick class 0
}

TEST_CASE("greedy decode is deterministic on a real model") {
    Recognizer<double> model(tiny_config(), 37);
    Rng rng(41);
    Tensor<double> img = nrtr::uniform_init<double>({8, 16}, rng, 0.0, 1.0, false);
    const auto a = model.recognize(img, 16, 6);
    const auto b = model.recognize(img, 16, 6);
    CHECK(a.text == b.text);
    CHECK(a.truncated == b.truncated);
}

TEST_CASE("full tiny model gradient check") {
    nrtr::Rng rng(43);
    ModelConfig cfg = tiny_config();
    cfg.n_enc = 1;
    cfg.n_dec = 1;
    Recognizer<double> model(cfg, rng.next_u64());
    Tensor<double> img = nrtr::uniform_init<double>({8, 12}, rng, 0.0, 1.0, false);
    const TokenSequence target = nrtr::tokenize("hi");
    std::vector<Tensor<double>> params;
    for (const auto& p : model.named_params()) params.push_back(p.tensor);
    nrtr::ForwardCtx eval;
    const double worst = nrtr::finite_difference_check(params, [&]() {
        auto [total, count] = model.loss_sum(img, 12, target, eval);
        return nrtr::scale(total, 1.0 / count);
    });
    CHECK(worst < 1e-4);
}
