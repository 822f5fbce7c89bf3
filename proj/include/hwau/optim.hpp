#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hwau/tensor.hpp"

namespace hwau {

// Linear warmup to lr0 over warmup_steps, then cosine annealing to zero at
// total_steps. Continuous at the junction.
inline double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double lr0) {
    if (total_steps < 1) throw ConfigError("lr_at: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps) throw ConfigError("lr_at: bad warmup_steps");
    if (step < 0) throw ConfigError("lr_at: negative step");
    if (warmup_steps > 0 && step < warmup_steps) return lr0 * double(step) / double(warmup_steps);
    const double denom = double(total_steps - warmup_steps);
    const double progress = denom > 0 ? double(step - warmup_steps) / denom : 1.0;
    const double clamped = progress > 1.0 ? 1.0 : progress;
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * clamped));
}

// One decoupled-weight-decay Adam update on a flat buffer.
//   p <- p*(1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps)
// t is the 1-based step count used for bias correction.
template <class S>
inline void adamw_update(S* p, const S* g, S* m, S* v, int64_t n, S lr, S wd, S beta1, S beta2, S eps,
                         int64_t t) {
    const S bc1 = S(1) - S(std::pow(double(beta1), double(t)));
    const S bc2 = S(1) - S(std::pow(double(beta2), double(t)));
    for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
        const S mhat = m[i] / bc1;
        const S vhat = v[i] / bc2;
        p[i] = p[i] * (S(1) - lr * wd) - lr * mhat / (S(std::sqrt(double(vhat))) + eps);
    }
}

// Optimizer state for a parameter tree; moment buffers mirror the tree layout.
template <class S>
class AdamWT {
  public:
    S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);

    template <class Params>
    explicit AdamWT(Params& params) {
        params.visit([&](const std::string&, TensorT<S>& t) {
            m_.emplace_back(size_t(t.numel()), S(0));
            v_.emplace_back(size_t(t.numel()), S(0));
        });
    }

    int64_t step_count() const { return t_; }

    // Applies one update to every parameter; missing gradients count as zero.
    template <class Params>
    void step(Params& params, S lr, S wd) {
        ++t_;
        size_t idx = 0;
        params.visit([&](const std::string&, TensorT<S>& t) {
            adamw_update(t.data(), t.grad(), m_[idx].data(), v_[idx].data(), t.numel(), lr, wd, beta1,
                         beta2, eps, t_);
            ++idx;
        });
    }

  private:
    std::vector<std::vector<S>> m_, v_;
    int64_t t_ = 0;
};

using AdamW = AdamWT<float>;

// Scales gradients so their global L2 norm is at most max_norm. No-op when
// max_norm <= 0.
template <class Params, class S>
inline void clip_grad_norm(Params& params, S max_norm) {
    if (!(max_norm > S(0))) return;
    double sq = 0;
    params.visit([&](const std::string&, TensorT<S>& t) {
        const S* g = t.grad();
        for (int64_t i = 0; i < t.numel(); ++i) sq += double(g[i]) * double(g[i]);
    });
    const double norm = std::sqrt(sq);
    if (norm <= double(max_norm)) return;
    const S scale = S(double(max_norm) / norm);
    params.visit([&](const std::string&, TensorT<S>& t) {
        S* g = t.grad();
        for (int64_t i = 0; i < t.numel(); ++i) g[i] *= scale;
    });
}

}  // namespace hwau
