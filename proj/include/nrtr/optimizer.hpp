#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nrtr/model.hpp"
#include "nrtr/tensor.hpp"

namespace nrtr {

// Warmup schedule: d_model^-0.5 * min(n^-0.5, n * warmup^-1.5). The linear
// branch is computed as (n/warmup) * warmup^-0.5 so both branches are the
// same expression at n == warmup and the crossover is exact.
inline double lrate(std::int64_t n, int d_model, std::int64_t warmup_n) {
    if (n < 1) throw std::invalid_argument("lrate: step must be >= 1, got " + std::to_string(n));
    if (warmup_n < 1) throw std::invalid_argument("lrate: warmup must be >= 1");
    if (d_model < 1) throw ConfigError("lrate: d_model must be >= 1");
    const double decay = std::pow(static_cast<double>(n), -0.5);
    const double linear = (static_cast<double>(n) / static_cast<double>(warmup_n)) *
                          std::pow(static_cast<double>(warmup_n), -0.5);
    return std::pow(static_cast<double>(d_model), -0.5) * std::min(decay, linear);
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
};

// Standard bias-corrected Adam over a fixed list of named parameters.
// Exactly one step may run at a time; gradient computation for the next
// batch must not overlap an update to the same parameters.
template <typename F>
class Adam {
public:
    Adam(std::vector<NamedParam<F>> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.push_back(std::vector<F>(p.tensor.size(), F(0)));
            v_.push_back(std::vector<F>(p.tensor.size(), F(0)));
        }
    }

    std::int64_t completed_steps() const { return n_; }
    void set_completed_steps(std::int64_t n) { n_ = n; }

    const std::vector<NamedParam<F>>& params() const { return params_; }
    std::vector<F>& first_moment(std::size_t i) { return m_[i]; }
    std::vector<F>& second_moment(std::size_t i) { return v_[i]; }
    const std::vector<F>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<F>& second_moment(std::size_t i) const { return v_[i]; }

    void step(double lr) {
        ++n_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(n_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(n_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].tensor;
            if (!p.has_grad())
                throw std::invalid_argument("adam: parameter '" + params_[i].name + "' has no gradient");
            const auto& g = p.grad();
            auto& m = m_[i];
            auto& v = v_[i];
            auto& w = p.data();
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
                m[j] = static_cast<F>(mj);
                v[j] = static_cast<F>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                w[j] = static_cast<F>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

private:
    std::vector<NamedParam<F>> params_;
    AdamConfig cfg_;
    std::vector<std::vector<F>> m_;
    std::vector<std::vector<F>> v_;
    std::int64_t n_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename F>
double clip_grad_norm(const std::vector<NamedParam<F>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (F g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const F s = static_cast<F>(max_norm / norm);
        for (const auto& p : params) {
            Tensor<F> t = p.tensor; // shared storage
            for (F& g : t.grad()) g *= s;
        }
    }
    return norm;
}

} // namespace nrtr
