#include <cmath>

#include <doctest.h>

#include "nrtr/embeddings.hpp"

using nrtr::CharEmbedding;
using nrtr::PositionalEncodingTable;
using nrtr::Rng;
using nrtr::Tensor;

TEST_CASE("position zero is all-zero sin block and all-one cos block") {
    const auto pe = PositionalEncodingTable<double>::build(4, 8);
    for (int i = 0; i < 4; ++i) CHECK(pe.table(0, i) == 0.0);
    for (int i = 4; i < 8; ++i) CHECK(pe.table(0, i) == 1.0);
}

TEST_CASE("first sin entry at position one is sin(1)") {
    const auto pe = PositionalEncodingTable<double>::build(4, 16);
    CHECK(pe.table(1, 0) == doctest::Approx(0.8414709848078965).epsilon(1e-12));
}

TEST_CASE("table matches the closed form in 64-bit") {
    const int d = 20, len = 50;
    const auto pe = PositionalEncodingTable<double>::build(len, d);
    for (int pos = 0; pos < len; ++pos)
        for (int i = 0; i < d / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / d);
            CHECK(std::abs(pe.table(pos, i) - std::sin(pos * freq)) < 1e-12);
            CHECK(std::abs(pe.table(pos, d / 2 + i) - std::cos(pos * freq)) < 1e-12);
            CHECK(std::abs(pe.table(pos, i)) <= 1.0);
            CHECK(std::abs(pe.table(pos, d / 2 + i)) <= 1.0);
        }
}

TEST_CASE("offset positions are rotations of paired entries") {
    // trig addition formulas as oracle: PE(pos+k) pair = rotation by w*k
    const int d = 32, len = 128;
    const auto pe = PositionalEncodingTable<double>::build(len, d);
    Rng rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
        const int pos = static_cast<int>(rng.below(64));
        const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 64)));
        const int i = static_cast<int>(rng.below(d / 2));
        const double w = std::pow(10000.0, -2.0 * i / d);
        const double s = pe.table(pos, i), c = pe.table(pos, d / 2 + i);
        const double want_s = s * std::cos(w * k) + c * std::sin(w * k);
        const double want_c = c * std::cos(w * k) - s * std::sin(w * k);
        CHECK(std::abs(pe.table(pos + k, i) - want_s) < 1e-9);
        CHECK(std::abs(pe.table(pos + k, d / 2 + i) - want_c) < 1e-9);
    }
}

TEST_CASE("regeneration is bitwise reproducible") {
    const auto a = PositionalEncodingTable<float>::build(64, 24);
    const auto b = PositionalEncodingTable<float>::build(64, 24);
    REQUIRE(a.table.size() == b.table.size());
    for (std::size_t i = 0; i < a.table.size(); ++i) CHECK(a.table.data()[i] == b.table.data()[i]);
}

TEST_CASE("odd or tiny d_model is rejected") {
    CHECK_THROWS_AS(PositionalEncodingTable<double>::build(8, 7), nrtr::ConfigError);
    CHECK_THROWS_AS(PositionalEncodingTable<double>::build(0, 8), nrtr::ConfigError);
}

TEST_CASE("embed_tokens adds position rows to embedding rows") {
    const int d = 8;
    const auto pe = PositionalEncodingTable<double>::build(16, d);
    CharEmbedding<double> emb;
    emb.matrix = Tensor<double>::zeros({nrtr::charset::kVocabSize, d}, true);

    nrtr::ForwardCtx eval;
    const nrtr::TokenSequence toks{nrtr::charset::kBos, 3, 9};
    const Tensor<double> out = nrtr::embed_tokens(toks, emb, pe, eval);
    // zero embedding matrix: output equals the PE rows
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < d; ++i) CHECK(out(t, i) == pe.table(t, i));

    Rng rng(5);
    emb.matrix = nrtr::uniform_init<double>({nrtr::charset::kVocabSize, d}, rng, -1.0, 1.0, true);
    const nrtr::TokenSequence one{7};
    const Tensor<double> row = nrtr::embed_tokens(one, emb, pe, eval);
    for (int i = 0; i < d; ++i)
        CHECK(row(0, i) == doctest::Approx(emb.matrix(7, i) + pe.table(0, i)).epsilon(1e-12));

    // elementwise oracle on a random case
    const nrtr::TokenSequence many{0, 36, 37, 38, 12};
    const Tensor<double> all = nrtr::embed_tokens(many, emb, pe, eval);
    for (int t = 0; t < 5; ++t)
        for (int i = 0; i < d; ++i)
            CHECK(all(t, i) ==
                  doctest::Approx(emb.matrix(many[static_cast<std::size_t>(t)], i) + pe.table(t, i)).epsilon(1e-12));
}

TEST_CASE("embed_tokens validates ids and length") {
    const auto pe = PositionalEncodingTable<double>::build(4, 8);
    Rng rng(6);
    const auto emb = CharEmbedding<double>::init(8, rng);
    nrtr::ForwardCtx eval;
    CHECK_THROWS_WITH_AS(nrtr::embed_tokens({0, 39}, emb, pe, eval), doctest::Contains("position 1"),
                         std::invalid_argument);
    CHECK_THROWS_AS(nrtr::embed_tokens({0, 1, 2, 3, 4}, emb, pe, eval), nrtr::ConfigError); // exceeds max_len
}
