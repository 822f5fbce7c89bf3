#pragma once

#include "hwau/conv.hpp"
#include "hwau/ops.hpp"

namespace hwau {

inline constexpr float kInstanceNormEps = 1e-5f;

template <class S>
TensorT<S> instance_norm3d(const TensorT<S>& x, S eps, const TensorT<S>& gain, const TensorT<S>& bias);

// instance_norm3d refuses single-voxel maps (variance undefined); the 4-stage
// U-shape still reaches 1x1x1 at the minimum 16^3 crop. There the formula's
// numerator (x - mean) is identically zero, so its continuous extension is
// just the bias, realized as a zero-weight pointwise conv so gradients reach
// the bias and nothing else.
template <class S>
TensorT<S> instance_norm3d_or_bias(const TensorT<S>& x, S eps, const TensorT<S>& gain,
                                   const TensorT<S>& bias) {
    if (x.ndim() == 5 && x.dim(2) * x.dim(3) * x.dim(4) >= 2)
        return instance_norm3d(x, eps, gain, bias);
    const int64_t C = x.dim(1);
    TensorT<S> zero_w = TensorT<S>::zeros({C, C, 1, 1, 1});
    (void)gain;
    return conv3d(x, zero_w, &bias, ConvSpec::pointwise());
}

// Per-(sample, channel) standardization over the spatial voxels, biased
// variance, followed by a per-channel affine map.
template <class S>
TensorT<S> instance_norm3d(const TensorT<S>& x, S eps, const TensorT<S>& gain, const TensorT<S>& bias) {
    if (x.ndim() != 5) throw ShapeError("instance_norm3d expects [N,C,D,H,W]");
    const int64_t N = x.dim(0), C = x.dim(1);
    const int64_t M = x.dim(2) * x.dim(3) * x.dim(4);
    if (M < 2) throw ShapeError("instance_norm3d: needs at least 2 voxels per channel, got " +
                                std::to_string(M));
    if (gain.numel() != C || bias.numel() != C)
        throw ShapeError("instance_norm3d: gain/bias must have C=" + std::to_string(C) + " entries");
    if (!(eps > S(0))) throw ConfigError("instance_norm3d: eps must be positive");

    const bool rec = detail::taped<S>({&x, &gain, &bias});
    TensorT<S> out = detail::make_output<S>(x.shape(), "instance_norm3d", rec);
    // inv_std per (n,c) is needed by the backward rule; stash it in the closure.
    auto inv_std = std::make_shared<std::vector<S>>(size_t(N * C));
    auto means = std::make_shared<std::vector<S>>(size_t(N * C));
    {
        const S* px = x.data();
        S* po = out.data();
        const S* pg = gain.data();
        const S* pbeta = bias.data();
        detail::parallel_for(
            N * C,
            [&](int64_t nc) {
                const S* xs = px + nc * M;
                S* os = po + nc * M;
                // stats in double so a constant channel normalizes to exact zero
                double mean = 0;
                for (int64_t i = 0; i < M; ++i) mean += double(xs[i]);
                mean /= double(M);
                double var = 0;
                for (int64_t i = 0; i < M; ++i) {
                    const double d = double(xs[i]) - mean;
                    var += d * d;
                }
                var /= double(M);
                const double istd = 1.0 / std::sqrt(var + double(eps));
                (*inv_std)[size_t(nc)] = S(istd);
                (*means)[size_t(nc)] = S(mean);
                const double gm = double(pg[nc % C]), bt = double(pbeta[nc % C]);
                for (int64_t i = 0; i < M; ++i) os[i] = S((double(xs[i]) - mean) * istd * gm + bt);
            },
            1);
    }
    detail::check_finite(out, "instance_norm3d");

    if (rec) {
        auto st_x = x.storage();
        auto st_g = gain.storage();
        auto st_bt = bias.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_g, st_bt, st_o, inv_std, means, N, C, M] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            if (st_x->requires_grad) {
                st_x->ensure_grad();
                detail::parallel_for(
                    N * C,
                    [&](int64_t nc) {
                        const S* xs = st_x->data.data() + nc * M;
                        const S* gs = g + nc * M;
                        S* gx = st_x->grad.data() + nc * M;
                        const S istd = (*inv_std)[size_t(nc)];
                        const S mean = (*means)[size_t(nc)];
                        const S gm = st_g->data[size_t(nc % C)];
                        S sum_g = 0, sum_gx = 0;
                        for (int64_t i = 0; i < M; ++i) {
                            const S xhat = (xs[i] - mean) * istd;
                            sum_g += gs[i];
                            sum_gx += gs[i] * xhat;
                        }
                        const S mg = sum_g / S(M), mgx = sum_gx / S(M);
                        for (int64_t i = 0; i < M; ++i) {
                            const S xhat = (xs[i] - mean) * istd;
                            gx[i] += gm * istd * (gs[i] - mg - xhat * mgx);
                        }
                    },
                    1);
            }
            if (st_g->requires_grad || st_bt->requires_grad) {
                if (st_g->requires_grad) st_g->ensure_grad();
                if (st_bt->requires_grad) st_bt->ensure_grad();
                for (int64_t nc = 0; nc < N * C; ++nc) {
                    const S* xs = st_x->data.data() + nc * M;
                    const S* gs = g + nc * M;
                    const S istd = (*inv_std)[size_t(nc)];
                    const S mean = (*means)[size_t(nc)];
                    S sg = 0, sb = 0;
                    for (int64_t i = 0; i < M; ++i) {
                        sg += gs[i] * (xs[i] - mean) * istd;
                        sb += gs[i];
                    }
                    if (st_g->requires_grad) st_g->grad[size_t(nc % C)] += sg;
                    if (st_bt->requires_grad) st_bt->grad[size_t(nc % C)] += sb;
                }
            }
        });
    }
    return out;
}

}  // namespace hwau
