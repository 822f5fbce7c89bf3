#pragma once

#include "hwau/ops.hpp"

namespace hwau {

namespace detail {

// Output sample i maps to source coordinate (i + 0.5) * (in - 1) / out: output
// voxel centers spread across the inclusive source index range, so every
// sample interpolates between two real voxels and no border rule is needed.
// Exact identity when out == in is handled by a copy fast path in the op.
struct LinearAxisMap {
    std::vector<int64_t> lo;
    std::vector<double> frac;

    LinearAxisMap(int64_t in, int64_t out) : lo(size_t(out)), frac(size_t(out)) {
        for (int64_t i = 0; i < out; ++i) {
            const double s = (double(i) + 0.5) * double(in - 1) / double(out);
            int64_t l = int64_t(s);
            if (l > in - 2) l = in - 2;
            if (in == 1) l = 0;
            lo[size_t(i)] = l;
            frac[size_t(i)] = in == 1 ? 0.0 : s - double(l);
        }
    }
};

}  // namespace detail

// Trilinear resampling of [N,C,D,H,W] to a target spatial shape. Separable
// per-axis linear interpolation; identity (bitwise) when target == source.
template <class S>
TensorT<S> trilinear_resize(const TensorT<S>& x, int64_t td, int64_t th, int64_t tw) {
    if (x.ndim() != 5) throw ShapeError("trilinear_resize expects [N,C,D,H,W]");
    if (td < 1 || th < 1 || tw < 1) throw ShapeError("trilinear_resize: target extents must be >= 1");
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({N, C, td, th, tw}, "trilinear_resize", rec);

    if (td == D && th == H && tw == W) {
        std::memcpy(out.data(), x.data(), size_t(x.numel()) * sizeof(S));
        if (rec) {
            auto st_x = x.storage();
            auto st_o = out.storage();
            TapeT<S>::current()->record([st_x, st_o] {
                if (st_o->grad.empty() || !st_x->requires_grad) return;
                st_x->ensure_grad();
                for (size_t i = 0; i < st_o->grad.size(); ++i) st_x->grad[i] += st_o->grad[i];
            });
        }
        return out;
    }

    const detail::LinearAxisMap md(D, td), mh(H, th), mw(W, tw);
    {
        const S* px = x.data();
        S* po = out.data();
        detail::parallel_for(
            N * C * td,
            [&](int64_t r) {
                const int64_t od = r % td, nc = r / td;
                const S* xs = px + nc * D * H * W;
                S* os = po + nc * td * th * tw + od * th * tw;
                const int64_t d0 = md.lo[size_t(od)];
                const double fd = md.frac[size_t(od)];
                const int64_t d1 = D == 1 ? d0 : d0 + 1;
                for (int64_t oh = 0; oh < th; ++oh) {
                    const int64_t h0 = mh.lo[size_t(oh)];
                    const double fh = mh.frac[size_t(oh)];
                    const int64_t h1 = H == 1 ? h0 : h0 + 1;
                    for (int64_t ow = 0; ow < tw; ++ow) {
                        const int64_t w0 = mw.lo[size_t(ow)];
                        const double fw = mw.frac[size_t(ow)];
                        const int64_t w1 = W == 1 ? w0 : w0 + 1;
                        const double c00 = double(xs[(d0 * H + h0) * W + w0]) * (1 - fw) +
                                           double(xs[(d0 * H + h0) * W + w1]) * fw;
                        const double c01 = double(xs[(d0 * H + h1) * W + w0]) * (1 - fw) +
                                           double(xs[(d0 * H + h1) * W + w1]) * fw;
                        const double c10 = double(xs[(d1 * H + h0) * W + w0]) * (1 - fw) +
                                           double(xs[(d1 * H + h0) * W + w1]) * fw;
                        const double c11 = double(xs[(d1 * H + h1) * W + w0]) * (1 - fw) +
                                           double(xs[(d1 * H + h1) * W + w1]) * fw;
                        const double c0 = c00 * (1 - fh) + c01 * fh;
                        const double c1 = c10 * (1 - fh) + c11 * fh;
                        os[oh * tw + ow] = S(c0 * (1 - fd) + c1 * fd);
                    }
                }
            },
            4);
    }
    detail::check_finite(out, "trilinear_resize");

    if (rec) {
        auto st_x = x.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_o, md, mh, mw, N, C, D, H, W, td, th, tw] {
            if (st_o->grad.empty() || !st_x->requires_grad) return;
            st_x->ensure_grad();
            // scatter within each (n,c) slice; slices are independent
            detail::parallel_for(
                N * C,
                [&](int64_t nc) {
                    const S* g = st_o->grad.data() + nc * td * th * tw;
                    S* gx = st_x->grad.data() + nc * D * H * W;
                    for (int64_t od = 0; od < td; ++od) {
                        const int64_t d0 = md.lo[size_t(od)];
                        const double fd = md.frac[size_t(od)];
                        const int64_t d1 = D == 1 ? d0 : d0 + 1;
                        for (int64_t oh = 0; oh < th; ++oh) {
                            const int64_t h0 = mh.lo[size_t(oh)];
                            const double fh = mh.frac[size_t(oh)];
                            const int64_t h1 = H == 1 ? h0 : h0 + 1;
                            for (int64_t ow = 0; ow < tw; ++ow) {
                                const int64_t w0 = mw.lo[size_t(ow)];
                                const double fw = mw.frac[size_t(ow)];
                                const int64_t w1 = W == 1 ? w0 : w0 + 1;
                                const double gv = double(g[(od * th + oh) * tw + ow]);
                                gx[(d0 * H + h0) * W + w0] += S(gv * (1 - fd) * (1 - fh) * (1 - fw));
                                gx[(d0 * H + h0) * W + w1] += S(gv * (1 - fd) * (1 - fh) * fw);
                                gx[(d0 * H + h1) * W + w0] += S(gv * (1 - fd) * fh * (1 - fw));
                                gx[(d0 * H + h1) * W + w1] += S(gv * (1 - fd) * fh * fw);
                                gx[(d1 * H + h0) * W + w0] += S(gv * fd * (1 - fh) * (1 - fw));
                                gx[(d1 * H + h0) * W + w1] += S(gv * fd * (1 - fh) * fw);
                                gx[(d1 * H + h1) * W + w0] += S(gv * fd * fh * (1 - fw));
                                gx[(d1 * H + h1) * W + w1] += S(gv * fd * fh * fw);
                            }
                        }
                    }
                },
                1);
        });
    }
    return out;
}

}  // namespace hwau
