#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nrtr/tensor.hpp"

namespace nrtr {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckResult {
    std::string component;
    double max_rel_err = 0.0;

    bool pass() const { return max_rel_err < kGradCheckTolerance; }
};

// Central finite differences (64-bit, step h) against tape gradients for
// every entry of every parameter; relative error is
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double finite_difference_check(const std::vector<Tensor<double>>& params,
                               const std::function<Tensor<double>()>& loss_fn, double h = kGradCheckStep);

// The component suite: attention, multi-head, FFN, layer norm, conv stack,
// embeddings, and the full encoder-decoder loss, all at a tiny 64-bit
// config with dropout disabled.
std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed);

} // namespace nrtr
