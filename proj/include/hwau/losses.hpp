#pragma once

#include "hwau/ops.hpp"

namespace hwau {

// 1 - (2*sum(p*g)+s)/(sum(p^2)+sum(g^2)+s) per (sample, channel), averaged
// over channels and batch. Targets are binary and receive no gradient.
template <class S>
TensorT<S> soft_dice_loss(const TensorT<S>& prob, const TensorT<S>& target, S smooth) {
    detail::require_same_shape(prob, target, "soft_dice_loss");
    if (prob.ndim() != 5) throw ShapeError("soft_dice_loss expects [N,C,D,H,W]");
    const int64_t N = prob.dim(0), C = prob.dim(1);
    const int64_t M = prob.dim(2) * prob.dim(3) * prob.dim(4);
    const bool rec = detail::taped<S>({&prob});
    TensorT<S> out = detail::make_output<S>({1}, "soft_dice_loss", rec);

    auto inter = std::make_shared<std::vector<S>>(size_t(N * C));
    auto denom = std::make_shared<std::vector<S>>(size_t(N * C));
    {
        const S* pp = prob.data();
        const S* pg = target.data();
        S total = 0;
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const S* p = pp + nc * M;
            const S* g = pg + nc * M;
            S s_pg = 0, s_pp = 0, s_gg = 0;
            for (int64_t i = 0; i < M; ++i) {
                s_pg += p[i] * g[i];
                s_pp += p[i] * p[i];
                s_gg += g[i] * g[i];
            }
            (*inter)[size_t(nc)] = s_pg;
            (*denom)[size_t(nc)] = s_pp + s_gg + smooth;
            total += S(1) - (S(2) * s_pg + smooth) / (*denom)[size_t(nc)];
        }
        out.data()[0] = total / S(N * C);
    }
    detail::check_finite(out, "soft_dice_loss");

    if (rec) {
        auto st_p = prob.storage(), st_g = target.storage(), st_o = out.storage();
        TapeT<S>::current()->record([st_p, st_g, st_o, inter, denom, N, C, M, smooth] {
            if (st_o->grad.empty() || !st_p->requires_grad) return;
            st_p->ensure_grad();
            const S gl = st_o->grad[0] / S(N * C);
            detail::parallel_for(
                N * C,
                [&](int64_t nc) {
                    const S* p = st_p->data.data() + nc * M;
                    const S* g = st_g->data.data() + nc * M;
                    S* gp = st_p->grad.data() + nc * M;
                    const S num = S(2) * (*inter)[size_t(nc)] + smooth;
                    const S den = (*denom)[size_t(nc)];
                    for (int64_t i = 0; i < M; ++i) {
                        // d/dp of -(num/den) = -(2*g*den - num*2*p)/den^2
                        gp[i] += gl * (-(S(2) * g[i] * den - num * S(2) * p[i]) / (den * den));
                    }
                },
                1);
        });
    }
    return out;
}

// mean over voxels of -alpha*(1-p_t)^gamma*log(p_t), p_t = p*g + (1-p)*(1-g).
// Probabilities are clamped to [1e-7, 1-1e-7] before the log.
template <class S>
TensorT<S> focal_loss(const TensorT<S>& prob, const TensorT<S>& target, S gamma, S alpha) {
    detail::require_same_shape(prob, target, "focal_loss");
    const int64_t n = prob.numel();
    const bool rec = detail::taped<S>({&prob});
    TensorT<S> out = detail::make_output<S>({1}, "focal_loss", rec);
    const S lo = S(1e-7), hi = S(1) - S(1e-7);
    {
        const S* pp = prob.data();
        const S* pg = target.data();
        S total = 0;
        for (int64_t i = 0; i < n; ++i) {
            const S p = std::min(hi, std::max(lo, pp[i]));
            const S g = pg[i];
            const S pt = p * g + (S(1) - p) * (S(1) - g);
            total += -alpha * std::pow(S(1) - pt, gamma) * std::log(pt);
        }
        out.data()[0] = total / S(n);
    }
    detail::check_finite(out, "focal_loss");

    if (rec) {
        auto st_p = prob.storage(), st_g = target.storage(), st_o = out.storage();
        TapeT<S>::current()->record([st_p, st_g, st_o, n, gamma, alpha, lo, hi] {
            if (st_o->grad.empty() || !st_p->requires_grad) return;
            st_p->ensure_grad();
            const S gl = st_o->grad[0] / S(n);
            detail::parallel_for(
                n,
                [&](int64_t i) {
                    const S praw = st_p->data[size_t(i)];
                    if (praw < lo || praw > hi) return;  // clamped region, zero slope
                    const S g = st_g->data[size_t(i)];
                    const S pt = praw * g + (S(1) - praw) * (S(1) - g);
                    const S dpt_dp = S(2) * g - S(1);
                    const S one_m = S(1) - pt;
                    // d/dpt of -alpha*(1-pt)^gamma*log(pt)
                    S dldpt;
                    if (gamma == S(0)) {
                        dldpt = -alpha / pt;
                    } else {
                        dldpt = alpha * gamma * std::pow(one_m, gamma - S(1)) * std::log(pt) -
                                alpha * std::pow(one_m, gamma) / pt;
                    }
                    st_p->grad[size_t(i)] += gl * dldpt * dpt_dp;
                },
                4096);
        });
    }
    return out;
}

template <class S>
TensorT<S> composite_loss(const TensorT<S>& prob, const TensorT<S>& target, S lambda_dice, S lambda_focal,
                          S smooth, S gamma, S alpha) {
    TensorT<S> d = scale_const(soft_dice_loss(prob, target, smooth), lambda_dice);
    TensorT<S> f = scale_const(focal_loss(prob, target, gamma, alpha), lambda_focal);
    return add(d, f);
}

}  // namespace hwau
