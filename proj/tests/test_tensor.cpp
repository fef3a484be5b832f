#include <cmath>
#include <limits>

#include <doctest.h>

#include "nrtr/gradcheck.hpp"
#include "nrtr/tensor.hpp"

using nrtr::Rng;
using nrtr::Tape;
using nrtr::Tensor;

namespace {

// Triple-loop reference, independent of the library path.
template <typename F>
std::vector<F> matmul_oracle(const Tensor<F>& a, const Tensor<F>& b) {
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<F> c(static_cast<std::size_t>(m) * n, F(0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < k; ++l) c[static_cast<std::size_t>(i) * n + j] += a(i, l) * b(l, j);
    return c;
}

} // namespace

TEST_CASE("matmul identity and annihilator") {
    Rng rng(11);
    Tensor<double> b = nrtr::uniform_init<double>({3, 3}, rng, -2.0, 2.0, false);
    Tensor<double> eye = Tensor<double>::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.data()[static_cast<std::size_t>(i) * 3 + i] = 1.0;
    const Tensor<double> prod = nrtr::matmul(eye, b);
    for (std::size_t i = 0; i < prod.size(); ++i) CHECK(prod.data()[i] == b.data()[i]);

    const Tensor<double> x = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    const Tensor<double> zero = Tensor<double>::zeros({2, 2});
    const Tensor<double> z = nrtr::matmul(x, zero);
    for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(42);
    Tensor<double> a = nrtr::uniform_init<double>({4, 5}, rng, -1.0, 1.0, false);
    Tensor<double> b = nrtr::uniform_init<double>({5, 3}, rng, -1.0, 1.0, false);
    const auto want = matmul_oracle(a, b);
    const Tensor<double> got = nrtr::matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // larger random shapes
    for (int trial = 0; trial < 5; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(32));
        const int k = 1 + static_cast<int>(rng.below(32));
        const int n = 1 + static_cast<int>(rng.below(32));
        Tensor<float> af = nrtr::uniform_init<float>({m, k}, rng, -1.0, 1.0, false);
        Tensor<float> bf = nrtr::uniform_init<float>({k, n}, rng, -1.0, 1.0, false);
        const auto wantf = matmul_oracle(af, bf);
        const Tensor<float> gotf = nrtr::matmul(af, bf);
        for (std::size_t i = 0; i < wantf.size(); ++i)
            CHECK(gotf.data()[i] == doctest::Approx(wantf[i]).epsilon(1e-5));
    }
}

TEST_CASE("matmul reports both shapes on mismatch") {
    const Tensor<float> a = Tensor<float>::zeros({2, 3});
    const Tensor<float> b = Tensor<float>::zeros({4, 2});
    CHECK_THROWS_WITH_AS(nrtr::matmul(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
    try {
        nrtr::matmul(a, b);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("softmax uniform, singleton, oracle") {
    const Tensor<double> flat = Tensor<double>::from({4}, {0, 0, 0, 0});
    const Tensor<double> uniform_out = nrtr::softmax(flat);
    for (double v : uniform_out.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    const Tensor<double> one = Tensor<double>::from({1}, {3.7});
    CHECK(nrtr::softmax(one).data()[0] == doctest::Approx(1.0).epsilon(1e-15));

    // direct 64-bit exp-normalize evaluation
    const Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
    const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    const Tensor<double> y = nrtr::softmax(x);
    for (int i = 0; i < 3; ++i)
        CHECK(y.data()[static_cast<std::size_t>(i)] ==
              doctest::Approx(std::exp(1.0 + i) / denom).epsilon(1e-14));
}

TEST_CASE("softmax slices sum to one and stay in [0,1]") {
    Rng rng(5);
    Tensor<double> x = nrtr::uniform_init<double>({6, 9}, rng, -30.0, 30.0, false);
    const Tensor<double> y = nrtr::softmax(x);
    for (int r = 0; r < 6; ++r) {
        double s = 0;
        for (int c = 0; c < 9; ++c) {
            CHECK(y(r, c) >= 0.0);
            CHECK(y(r, c) <= 1.0);
            s += y(r, c);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax masking semantics") {
    const double ninf = -std::numeric_limits<double>::infinity();
    const Tensor<double> x = Tensor<double>::from({3}, {1.0, ninf, 2.0});
    const Tensor<double> y = nrtr::softmax(x);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[0] + y.data()[2] == doctest::Approx(1.0).epsilon(1e-12));

    const Tensor<double> dead = Tensor<double>::from({2}, {ninf, ninf});
    CHECK_THROWS_AS(nrtr::softmax(dead), std::invalid_argument);
}

TEST_CASE("softmax along a non-final axis") {
    const Tensor<double> x = Tensor<double>::from({2, 2}, {0, 10, 0, 10});
    const Tensor<double> y = nrtr::softmax(x, 0);
    CHECK(y(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("layer_norm constant, symmetric, random moments") {
    const Tensor<double> gain = Tensor<double>::full({4}, 1.0);
    const Tensor<double> bias = Tensor<double>::zeros({4});
    const Tensor<double> c = Tensor<double>::from({4}, {5, 5, 5, 5});
    const Tensor<double> normed = nrtr::layer_norm(c, gain, bias);
    for (double v : normed.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

    const Tensor<double> g2 = Tensor<double>::full({2}, 1.0);
    const Tensor<double> b2 = Tensor<double>::zeros({2});
    const Tensor<double> pair = Tensor<double>::from({2}, {1, 3});
    const Tensor<double> np = nrtr::layer_norm(pair, g2, b2);
    CHECK(np.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(np.data()[1] == doctest::Approx(1.0).epsilon(1e-5));

    Rng rng(9);
    Tensor<double> x = nrtr::uniform_init<double>({3, 16}, rng, -4.0, 4.0, false);
    const Tensor<double> g16 = Tensor<double>::full({16}, 1.0);
    const Tensor<double> b16 = Tensor<double>::zeros({16});
    const Tensor<double> y = nrtr::layer_norm(x, g16, b16);
    for (int r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (int j = 0; j < 16; ++j) mean += y(r, j);
        mean /= 16;
        for (int j = 0; j < 16; ++j) var += (y(r, j) - mean) * (y(r, j) - mean);
        var /= 16;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("relu basics") {
    const Tensor<double> x = Tensor<double>::from({3}, {-1, 0, 2});
    const Tensor<double> y = nrtr::relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == 2.0);
}

TEST_CASE("dropout identity and scaling") {
    Rng rng(3);
    Tensor<float> x = nrtr::uniform_init<float>({64}, rng, -1.0, 1.0, false);

    Tensor<float> same = nrtr::dropout(x, 0.0, rng, true);
    CHECK(same.same_storage(x)); // bitwise identity at rate 0

    Tensor<float> eval_same = nrtr::dropout(x, 0.7, rng, false);
    CHECK(eval_same.same_storage(x)); // eval mode is identity at any rate

    Tensor<float> dropped = nrtr::dropout(x, 0.5, rng, true);
    int zeros = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (dropped.data()[i] == 0.0f)
            ++zeros;
        else
            CHECK(dropped.data()[i] == doctest::Approx(x.data()[i] * 2.0f).epsilon(1e-6));
    }
    CHECK(zeros > 0);
    CHECK(zeros < 64);

    CHECK_THROWS_AS(nrtr::dropout(x, 1.0, rng, true), nrtr::ConfigError);
    CHECK_THROWS_AS(nrtr::dropout(x, -0.1, rng, true), nrtr::ConfigError);
}

TEST_CASE("cross_entropy closed forms") {
    const Tensor<double> uniform = Tensor<double>::zeros({38});
    CHECK(nrtr::cross_entropy(uniform, 7).value() == doctest::Approx(std::log(38.0)).epsilon(1e-12));

    Tensor<double> confident = Tensor<double>::zeros({5});
    confident.data()[2] = 50.0;
    CHECK(nrtr::cross_entropy(confident, 2).value() < 1e-3);

    // direct oracle on a random case
    Rng rng(8);
    Tensor<double> logits = nrtr::uniform_init<double>({7}, rng, -3.0, 3.0, false);
    double denom = 0;
    for (double v : logits.data()) denom += std::exp(v);
    const double want = -std::log(std::exp(logits.data()[4]) / denom);
    CHECK(nrtr::cross_entropy(logits, 4).value() == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(nrtr::cross_entropy(logits, 7), std::invalid_argument);
    CHECK_THROWS_AS(nrtr::cross_entropy(logits, -1), std::invalid_argument);
}

TEST_CASE("embedding_lookup gathers rows and validates ids") {
    const Tensor<double> table = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6});
    const Tensor<double> out = nrtr::embedding_lookup(table, {2, 0});
    CHECK(out(0, 0) == 5.0);
    CHECK(out(0, 1) == 6.0);
    CHECK(out(1, 0) == 1.0);
    CHECK_THROWS_WITH_AS(nrtr::embedding_lookup(table, {0, 3}), doctest::Contains("position 1"),
                         std::invalid_argument);
}

TEST_CASE("conv2d identity, zero, and loop oracle") {
    Rng rng(21);
    Tensor<double> x = nrtr::uniform_init<double>({4, 5, 1}, rng, -1.0, 1.0, false);
    const Tensor<double> k1 = Tensor<double>::from({1, 1, 1, 1}, {1.0});
    const Tensor<double> b0 = Tensor<double>::zeros({1});
    const Tensor<double> same = nrtr::conv2d(x, k1, b0, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

    const Tensor<double> zin = Tensor<double>::zeros({6, 6, 2});
    Tensor<double> k = nrtr::uniform_init<double>({3, 3, 2, 3}, rng, -1.0, 1.0, false);
    const Tensor<double> b3 = Tensor<double>::zeros({3});
    const Tensor<double> zout = nrtr::conv2d(zin, k, b3, 2);
    for (double v : zout.data()) CHECK(v == 0.0);

    // direct six-loop oracle, 8x8x1 input, 3x3 kernel, stride 2
    Tensor<double> img = nrtr::uniform_init<double>({8, 8, 1}, rng, -1.0, 1.0, false);
    Tensor<double> k2 = nrtr::uniform_init<double>({3, 3, 1, 2}, rng, -1.0, 1.0, false);
    Tensor<double> bias = nrtr::uniform_init<double>({2}, rng, -1.0, 1.0, false);
    const Tensor<double> got = nrtr::conv2d(img, k2, bias, 2);
    CHECK(got.extent(0) == 4);
    CHECK(got.extent(1) == 4);
    // same padding for in=8, k=3, stride=2: total pad 1, so none before
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox)
            for (int co = 0; co < 2; ++co) {
                double acc = bias.data()[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx)
                        for (int ci = 0; ci < 1; ++ci) {
                            const int iy = oy * 2 + ky, ix = ox * 2 + kx;
                            if (iy >= 8 || ix >= 8) continue;
                            acc += img(iy, ix, ci) * k2.data()[((static_cast<std::size_t>(ky) * 3 + kx) * 1 + ci) * 2 +
                                                               co];
                        }
                CHECK(got(oy, ox, co) == doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("backward populates reachable grads, zeros elsewhere") {
    Tensor<double> w = Tensor<double>::from({3}, {1, 2, 3}, true);
    Tensor<double> u = Tensor<double>::from({2}, {4, 5}, true);
    {
        Tape<double> tape;
        tape.backward(nrtr::sum(w));
    }
    for (double g : w.grad()) CHECK(g == 1.0);
    for (double g : u.grad()) CHECK(g == 0.0); // unreachable

    w.zero_grad();
    {
        Tape<double> tape;
        tape.backward(nrtr::sum(nrtr::mul(w, w)));
    }
    CHECK(w.grad()[0] == doctest::Approx(2.0));
    CHECK(w.grad()[1] == doctest::Approx(4.0));
    CHECK(w.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar and untaped losses") {
    Tensor<double> w = Tensor<double>::from({2}, {1, 2}, true);
    {
        Tape<double> tape;
        const Tensor<double> y = nrtr::mul(w, w);
        CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
    }
    {
        Tape<double> tape;
        const Tensor<double> frozen = Tensor<double>::scalar(1.0);
        CHECK_THROWS_AS(tape.backward(frozen), std::invalid_argument);
    }
}

TEST_CASE("per-op gradients match central finite differences") {
    Rng rng(77);
    Rng mix(rng.next_u64());
    auto mixer = [&mix](const Tensor<double>& t) {
        Rng local = mix;
        Tensor<double> w = nrtr::uniform_init<double>(t.shape(), local, -1.0, 1.0, false);
        return nrtr::sum(nrtr::mul(t, w));
    };

    SUBCASE("matmul") {
        Tensor<double> a = nrtr::uniform_init<double>({3, 4}, rng, -1.0, 1.0, true);
        Tensor<double> b = nrtr::uniform_init<double>({4, 2}, rng, -1.0, 1.0, true);
        CHECK(nrtr::finite_difference_check({a, b}, [&]() { return mixer(nrtr::matmul(a, b)); }) < 1e-4);
    }
    SUBCASE("softmax") {
        Tensor<double> x = nrtr::uniform_init<double>({3, 5}, rng, -2.0, 2.0, true);
        CHECK(nrtr::finite_difference_check({x}, [&]() { return mixer(nrtr::softmax(x)); }) < 1e-4);
    }
    SUBCASE("layer_norm") {
        Tensor<double> x = nrtr::uniform_init<double>({2, 6}, rng, -2.0, 2.0, true);
        Tensor<double> g = nrtr::uniform_init<double>({6}, rng, 0.5, 1.5, true);
        Tensor<double> b = nrtr::uniform_init<double>({6}, rng, -0.5, 0.5, true);
        CHECK(nrtr::finite_difference_check({x, g, b}, [&]() { return mixer(nrtr::layer_norm(x, g, b)); }) < 1e-4);
    }
    SUBCASE("transpose+concat+reshape+take_row") {
        Tensor<double> x = nrtr::uniform_init<double>({3, 4}, rng, -1.0, 1.0, true);
        Tensor<double> y = nrtr::uniform_init<double>({4, 2}, rng, -1.0, 1.0, true);
        CHECK(nrtr::finite_difference_check({x, y}, [&]() {
                  const Tensor<double> xt = nrtr::transpose(x); // [4,3]
                  const Tensor<double> cat = nrtr::concat_last_axis<double>({xt, y});
                  const Tensor<double> flat = nrtr::reshape(cat, {2, 10});
                  return mixer(nrtr::take_row(flat, 1));
              }) < 1e-4);
    }
    SUBCASE("conv2d") {
        Tensor<double> x = nrtr::uniform_init<double>({6, 6, 2}, rng, -1.0, 1.0, true);
        Tensor<double> k = nrtr::uniform_init<double>({3, 3, 2, 3}, rng, -1.0, 1.0, true);
        Tensor<double> b = nrtr::uniform_init<double>({3}, rng, -0.5, 0.5, true);
        CHECK(nrtr::finite_difference_check({x, k, b}, [&]() { return mixer(nrtr::conv2d(x, k, b, 2)); }) < 1e-4);
    }
    SUBCASE("cross_entropy+embedding") {
        Tensor<double> table = nrtr::uniform_init<double>({5, 4}, rng, -1.0, 1.0, true);
        CHECK(nrtr::finite_difference_check({table}, [&]() {
                  const Tensor<double> rows = nrtr::embedding_lookup(table, {1, 3});
                  return nrtr::cross_entropy(nrtr::take_row(rows, 0), 2);
              }) < 1e-4);
    }
    SUBCASE("add_rowwise+scale+relu") {
        Tensor<double> x = nrtr::uniform_init<double>({3, 4}, rng, -1.0, 1.0, true);
        Tensor<double> b = nrtr::uniform_init<double>({4}, rng, -1.0, 1.0, true);
        CHECK(nrtr::finite_difference_check({x, b}, [&]() {
                  return mixer(nrtr::relu(nrtr::scale(nrtr::add_rowwise(x, b), 1.7)));
              }) < 1e-4);
    }
}

TEST_CASE("gradient checker flags a corrupted gradient (negative control)") {
    // f(w) = sum(w^2); true gradient 2w, corrupted by 10%
    const std::vector<double> w{1.0, 2.0, 3.0};
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        auto f = [&](double wj) {
            double s = 0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double v = i == j ? wj : w[i];
                s += v * v;
            }
            return s;
        };
        const double g_fd = (f(w[j] + h) - f(w[j] - h)) / (2 * h);
        const double g_bad = 2.0 * w[j] * 1.1;
        worst = std::max(worst, std::abs(g_bad - g_fd) / std::max({1.0, std::abs(g_bad), std::abs(g_fd)}));
    }
    CHECK(worst > nrtr::kGradCheckTolerance);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor<float>::from({2, 3}, {1, 2, 3}), std::invalid_argument);
    const Tensor<float> s = Tensor<float>::scalar(2.5f);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.value() == 2.5f);
}
