#pragma once

#include <array>
#include <type_traits>

#include "hwau/ops.hpp"

namespace hwau {

// Per-axis convolution geometry. Depthwise mode <=> groups == input channels.
struct ConvSpec {
    std::array<int64_t, 3> kernel{1, 1, 1};
    std::array<int64_t, 3> stride{1, 1, 1};
    std::array<int64_t, 3> padding{0, 0, 0};
    int64_t groups = 1;

    static ConvSpec cubic(int64_t k, int64_t s, int64_t p, int64_t g = 1) {
        return ConvSpec{{k, k, k}, {s, s, s}, {p, p, p}, g};
    }
    // stride-1 "same" convolution: pad = floor(k/2)
    static ConvSpec same(int64_t k, int64_t g = 1) { return cubic(k, 1, k / 2, g); }
    static ConvSpec pointwise(int64_t g = 1) { return cubic(1, 1, 0, g); }

    int64_t out_extent(int axis, int64_t in) const {
        return (in + 2 * padding[size_t(axis)] - kernel[size_t(axis)]) / stride[size_t(axis)] + 1;
    }
};

namespace detail {

inline const char* axis_name(int a) { return a == 0 ? "D" : a == 1 ? "H" : "W"; }

template <class S>
inline void conv3d_check(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>* b,
                         const ConvSpec& spec, Shape& oshape) {
    if (x.ndim() != 5) throw ShapeError("conv3d: input must be [N,C,D,H,W], got " + shape_str(x.shape()));
    if (w.ndim() != 5) throw ShapeError("conv3d: weight must be [Cout,Cin/g,kd,kh,kw]");
    const int64_t Cin = x.dim(1), Cout = w.dim(0);
    if (spec.groups < 1 || Cin % spec.groups != 0 || Cout % spec.groups != 0)
        throw ShapeError("conv3d: groups " + std::to_string(spec.groups) + " must divide Cin=" +
                         std::to_string(Cin) + " and Cout=" + std::to_string(Cout));
    if (w.dim(1) != Cin / spec.groups)
        throw ShapeError("conv3d: weight channel axis is " + std::to_string(w.dim(1)) +
                         ", expected Cin/groups=" + std::to_string(Cin / spec.groups));
    for (int a = 0; a < 3; ++a)
        if (w.dim(size_t(2 + a)) != spec.kernel[size_t(a)])
            throw ShapeError(std::string("conv3d: weight kernel mismatch along axis ") + axis_name(a));
    if (b && b->numel() != Cout) throw ShapeError("conv3d: bias length must equal Cout");
    oshape = {x.dim(0), Cout, 0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        const int64_t oe = spec.out_extent(a, x.dim(size_t(2 + a)));
        if (oe < 1)
            throw ShapeError(std::string("conv3d: zero output extent along axis ") + axis_name(a) + " (in=" +
                             std::to_string(x.dim(size_t(2 + a))) + ", k=" +
                             std::to_string(spec.kernel[size_t(a)]) + ", stride=" +
                             std::to_string(spec.stride[size_t(a)]) + ", pad=" +
                             std::to_string(spec.padding[size_t(a)]) + ")");
        oshape[size_t(2 + a)] = oe;
    }
}

}  // namespace detail

template <class S>
TensorT<S> conv3d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<std::type_identity_t<S>>* b,
                  const ConvSpec& spec) {
    Shape oshape;
    detail::conv3d_check(x, w, b, spec, oshape);
    const int64_t N = x.dim(0), Cin = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t Cout = w.dim(0), OD = oshape[2], OH = oshape[3], OW = oshape[4];
    const int64_t cpg_in = Cin / spec.groups, cpg_out = Cout / spec.groups;
    const int64_t kd = spec.kernel[0], kh = spec.kernel[1], kw = spec.kernel[2];
    const int64_t sd = spec.stride[0], sh = spec.stride[1], sv = spec.stride[2];
    const int64_t pd = spec.padding[0], ph = spec.padding[1], pv = spec.padding[2];

    const bool rec = detail::taped<S>({&x, &w, b});
    TensorT<S> out = detail::make_output<S>(oshape, "conv3d", rec);
    {
        const S* px = x.data();
        const S* pwt = w.data();
        const S* pb = b ? b->data() : nullptr;
        S* po = out.data();
        detail::parallel_for(
            N * Cout * OD,
            [&](int64_t r) {
                const int64_t od = r % OD, nco = r / OD, co = nco % Cout, n = nco / Cout;
                const int64_t gi = co / cpg_out;
                const S* wbase = pwt + co * cpg_in * kd * kh * kw;
                for (int64_t oh = 0; oh < OH; ++oh)
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        S acc = pb ? pb[co] : S(0);
                        for (int64_t ci = 0; ci < cpg_in; ++ci) {
                            const S* xc = px + ((n * Cin + gi * cpg_in + ci) * D) * H * W;
                            const S* wc = wbase + ci * kd * kh * kw;
                            for (int64_t a = 0; a < kd; ++a) {
                                const int64_t id = od * sd - pd + a;
                                if (id < 0 || id >= D) continue;
                                for (int64_t e = 0; e < kh; ++e) {
                                    const int64_t ih = oh * sh - ph + e;
                                    if (ih < 0 || ih >= H) continue;
                                    const S* xrow = xc + (id * H + ih) * W;
                                    const S* wrow = wc + (a * kh + e) * kw;
                                    for (int64_t c = 0; c < kw; ++c) {
                                        const int64_t iw = ow * sv - pv + c;
                                        if (iw < 0 || iw >= W) continue;
                                        acc += xrow[iw] * wrow[c];
                                    }
                                }
                            }
                        }
                        po[((n * Cout + co) * OD + od) * OH * OW + oh * OW + ow] = acc;
                    }
            },
            4);
    }
    detail::check_finite(out, "conv3d");

    if (rec) {
        auto st_x = x.storage();
        auto st_w = w.storage();
        auto st_b = b ? b->storage() : nullptr;
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_w, st_b, st_o, N, Cin, Cout, D, H, W, OD, OH, OW, cpg_in,
                                     cpg_out, kd, kh, kw, sd, sh, sv, pd, ph, pv] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            // d/dx: gather over the outputs each input voxel fed
            if (st_x->requires_grad) {
                st_x->ensure_grad();
                S* gx = st_x->grad.data();
                detail::parallel_for(
                    N * Cin * D,
                    [&](int64_t r) {
                        const int64_t id = r % D, nci = r / D, ci = nci % Cin, n = nci / Cin;
                        const int64_t gi = ci / cpg_in, ci_g = ci % cpg_in;
                        for (int64_t ih = 0; ih < H; ++ih)
                            for (int64_t iw = 0; iw < W; ++iw) {
                                S acc = 0;
                                for (int64_t a = 0; a < kd; ++a) {
                                    const int64_t t = id + pd - a;
                                    if (t < 0 || t % sd) continue;
                                    const int64_t od = t / sd;
                                    if (od >= OD) continue;
                                    for (int64_t e = 0; e < kh; ++e) {
                                        const int64_t u = ih + ph - e;
                                        if (u < 0 || u % sh) continue;
                                        const int64_t oh = u / sh;
                                        if (oh >= OH) continue;
                                        for (int64_t c = 0; c < kw; ++c) {
                                            const int64_t v = iw + pv - c;
                                            if (v < 0 || v % sv) continue;
                                            const int64_t ow = v / sv;
                                            if (ow >= OW) continue;
                                            for (int64_t co_g = 0; co_g < cpg_out; ++co_g) {
                                                const int64_t co = gi * cpg_out + co_g;
                                                acc +=
                                                    g[((n * Cout + co) * OD + od) * OH * OW + oh * OW + ow] *
                                                    st_w->data[size_t(((co * cpg_in + ci_g) * kd + a) * kh * kw +
                                                                      e * kw + c)];
                                            }
                                        }
                                    }
                                }
                                gx[((n * Cin + ci) * D + id) * H * W + ih * W + iw] += acc;
                            }
                    },
                    4);
            }
            // d/dw: each output-channel slice is accumulated independently
            if (st_w->requires_grad) {
                st_w->ensure_grad();
                detail::parallel_for(
                    Cout,
                    [&](int64_t co) {
                        const int64_t gi = co / cpg_out;
                        S* gw = st_w->grad.data() + co * cpg_in * kd * kh * kw;
                        for (int64_t n = 0; n < N; ++n)
                            for (int64_t od = 0; od < OD; ++od)
                                for (int64_t oh = 0; oh < OH; ++oh)
                                    for (int64_t ow = 0; ow < OW; ++ow) {
                                        const S gv = g[((n * Cout + co) * OD + od) * OH * OW + oh * OW + ow];
                                        if (gv == S(0)) continue;
                                        for (int64_t ci = 0; ci < cpg_in; ++ci) {
                                            const S* xc = st_x->data.data() +
                                                          ((n * Cin + gi * cpg_in + ci) * D) * H * W;
                                            S* gwc = gw + ci * kd * kh * kw;
                                            for (int64_t a = 0; a < kd; ++a) {
                                                const int64_t id = od * sd - pd + a;
                                                if (id < 0 || id >= D) continue;
                                                for (int64_t e = 0; e < kh; ++e) {
                                                    const int64_t ih = oh * sh - ph + e;
                                                    if (ih < 0 || ih >= H) continue;
                                                    const S* xrow = xc + (id * H + ih) * W;
                                                    S* gwrow = gwc + (a * kh + e) * kw;
                                                    for (int64_t c = 0; c < kw; ++c) {
                                                        const int64_t iw = ow * sv - pv + c;
                                                        if (iw < 0 || iw >= W) continue;
                                                        gwrow[c] += gv * xrow[iw];
                                                    }
                                                }
                                            }
                                        }
                                    }
                    },
                    1);
            }
            if (st_b && st_b->requires_grad) {
                st_b->ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t co = 0; co < Cout; ++co) {
                        const S* gslice = g + (n * Cout + co) * OD * OH * OW;
                        S acc = 0;
                        for (int64_t i = 0; i < OD * OH * OW; ++i) acc += gslice[i];
                        st_b->grad[size_t(co)] += acc;
                    }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> conv3d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, const ConvSpec& spec) {
    return conv3d(x, w, &b, spec);
}

// Non-overlapping learned upsampling: requires stride == kernel and zero
// padding. Weight layout [Cin, Cout/groups, kd, kh, kw]; each spatial extent
// is multiplied by the stride.
template <class S>
TensorT<S> transposed_conv3d(const TensorT<S>& x, const TensorT<S>& w,
                             const TensorT<std::type_identity_t<S>>* b, const ConvSpec& spec) {
    if (x.ndim() != 5) throw ShapeError("transposed_conv3d: input must be [N,C,D,H,W]");
    if (w.ndim() != 5) throw ShapeError("transposed_conv3d: weight must be [Cin,Cout/g,kd,kh,kw]");
    for (int a = 0; a < 3; ++a) {
        if (spec.kernel[size_t(a)] != spec.stride[size_t(a)])
            throw ShapeError(std::string("transposed_conv3d: stride must equal kernel along axis ") +
                             detail::axis_name(a));
        if (spec.padding[size_t(a)] != 0)
            throw ShapeError("transposed_conv3d: padding must be zero");
    }
    const int64_t N = x.dim(0), Cin = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    if (w.dim(0) != Cin) throw ShapeError("transposed_conv3d: weight Cin mismatch");
    if (Cin % spec.groups != 0) throw ShapeError("transposed_conv3d: groups must divide Cin");
    const int64_t cpg_in = Cin / spec.groups;
    const int64_t cpg_out = w.dim(1);
    const int64_t Cout = cpg_out * spec.groups;
    if (b && b->numel() != Cout) throw ShapeError("transposed_conv3d: bias length must equal Cout");
    const int64_t kd = spec.kernel[0], kh = spec.kernel[1], kw = spec.kernel[2];
    const int64_t OD = D * kd, OH = H * kh, OW = W * kw;

    const bool rec = detail::taped<S>({&x, &w, b});
    TensorT<S> out = detail::make_output<S>({N, Cout, OD, OH, OW}, "transposed_conv3d", rec);
    {
        const S* px = x.data();
        const S* pwt = w.data();
        const S* pb = b ? b->data() : nullptr;
        S* po = out.data();
        detail::parallel_for(
            N * Cout * OD,
            [&](int64_t r) {
                const int64_t od = r % OD, nco = r / OD, co = nco % Cout, n = nco / Cout;
                const int64_t gi = co / cpg_out, co_g = co % cpg_out;
                const int64_t id = od / kd, a = od % kd;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih = oh / kh, e = oh % kh;
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t iw = ow / kw, c = ow % kw;
                        S acc = pb ? pb[co] : S(0);
                        for (int64_t ci = 0; ci < cpg_in; ++ci) {
                            const int64_t cin = gi * cpg_in + ci;
                            acc += px[((n * Cin + cin) * D + id) * H * W + ih * W + iw] *
                                   pwt[((cin * cpg_out + co_g) * kd + a) * kh * kw + e * kw + c];
                        }
                        po[((n * Cout + co) * OD + od) * OH * OW + oh * OW + ow] = acc;
                    }
                }
            },
            4);
    }
    detail::check_finite(out, "transposed_conv3d");

    if (rec) {
        auto st_x = x.storage();
        auto st_w = w.storage();
        auto st_b = b ? b->storage() : nullptr;
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_w, st_b, st_o, N, Cin, Cout, D, H, W, OD, OH, OW, cpg_in,
                                     cpg_out, kd, kh, kw] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            if (st_x->requires_grad) {
                st_x->ensure_grad();
                S* gx = st_x->grad.data();
                detail::parallel_for(
                    N * Cin * D,
                    [&](int64_t r) {
                        const int64_t id = r % D, nci = r / D, ci = nci % Cin, n = nci / Cin;
                        const int64_t gi = ci / cpg_in;
                        for (int64_t ih = 0; ih < H; ++ih)
                            for (int64_t iw = 0; iw < W; ++iw) {
                                S acc = 0;
                                for (int64_t co_g = 0; co_g < cpg_out; ++co_g) {
                                    const int64_t co = gi * cpg_out + co_g;
                                    const S* wk = st_w->data.data() + (ci * cpg_out + co_g) * kd * kh * kw;
                                    for (int64_t a = 0; a < kd; ++a)
                                        for (int64_t e = 0; e < kh; ++e)
                                            for (int64_t c = 0; c < kw; ++c)
                                                acc += g[((n * Cout + co) * OD + id * kd + a) * OH * OW +
                                                         (ih * kh + e) * OW + iw * kw + c] *
                                                       wk[(a * kh + e) * kw + c];
                                }
                                gx[((n * Cin + ci) * D + id) * H * W + ih * W + iw] += acc;
                            }
                    },
                    4);
            }
            if (st_w->requires_grad) {
                st_w->ensure_grad();
                detail::parallel_for(
                    Cin,
                    [&](int64_t ci) {
                        const int64_t gi = ci / cpg_in;
                        for (int64_t co_g = 0; co_g < cpg_out; ++co_g) {
                            const int64_t co = gi * cpg_out + co_g;
                            S* gw = st_w->grad.data() + (ci * cpg_out + co_g) * kd * kh * kw;
                            for (int64_t n = 0; n < N; ++n)
                                for (int64_t id = 0; id < D; ++id)
                                    for (int64_t ih = 0; ih < H; ++ih)
                                        for (int64_t iw = 0; iw < W; ++iw) {
                                            const S xv = st_x->data[size_t(((n * Cin + ci) * D + id) * H * W +
                                                                           ih * W + iw)];
                                            if (xv == S(0)) continue;
                                            for (int64_t a = 0; a < kd; ++a)
                                                for (int64_t e = 0; e < kh; ++e)
                                                    for (int64_t c = 0; c < kw; ++c)
                                                        gw[(a * kh + e) * kw + c] +=
                                                            xv * g[((n * Cout + co) * OD + id * kd + a) * OH * OW +
                                                                   (ih * kh + e) * OW + iw * kw + c];
                                        }
                        }
                    },
                    1);
            }
            if (st_b && st_b->requires_grad) {
                st_b->ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t co = 0; co < Cout; ++co) {
                        const S* gslice = g + (n * Cout + co) * OD * OH * OW;
                        S acc = 0;
                        for (int64_t i = 0; i < OD * OH * OW; ++i) acc += gslice[i];
                        st_b->grad[size_t(co)] += acc;
                    }
            }
        });
    }
    return out;
}

// Factor-2 average pooling per spatial axis, ceil mode; partial windows are
// averaged over their valid voxel count.
template <class S>
TensorT<S> avg_pool3d_2x(const TensorT<S>& x) {
    if (x.ndim() != 5) throw ShapeError("avg_pool3d_2x expects [N,C,D,H,W]");
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OD = (D + 1) / 2, OH = (H + 1) / 2, OW = (W + 1) / 2;
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({N, C, OD, OH, OW}, "avg_pool3d", rec);
    {
        const S* px = x.data();
        S* po = out.data();
        detail::parallel_for(
            N * C,
            [&](int64_t nc) {
                const S* xs = px + nc * D * H * W;
                S* os = po + nc * OD * OH * OW;
                for (int64_t od = 0; od < OD; ++od)
                    for (int64_t oh = 0; oh < OH; ++oh)
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            S acc = 0;
                            int64_t cnt = 0;
                            for (int64_t a = 2 * od; a < std::min<int64_t>(2 * od + 2, D); ++a)
                                for (int64_t e = 2 * oh; e < std::min<int64_t>(2 * oh + 2, H); ++e)
                                    for (int64_t c = 2 * ow; c < std::min<int64_t>(2 * ow + 2, W); ++c) {
                                        acc += xs[(a * H + e) * W + c];
                                        ++cnt;
                                    }
                            os[(od * OH + oh) * OW + ow] = acc / S(cnt);
                        }
            },
            1);
    }
    detail::check_finite(out, "avg_pool3d");
    if (rec) {
        auto st_x = x.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_o, N, C, D, H, W, OD, OH, OW] {
            if (st_o->grad.empty() || !st_x->requires_grad) return;
            st_x->ensure_grad();
            detail::parallel_for(
                N * C,
                [&](int64_t nc) {
                    const S* g = st_o->grad.data() + nc * OD * OH * OW;
                    S* gx = st_x->grad.data() + nc * D * H * W;
                    for (int64_t od = 0; od < OD; ++od)
                        for (int64_t oh = 0; oh < OH; ++oh)
                            for (int64_t ow = 0; ow < OW; ++ow) {
                                const int64_t d1 = std::min<int64_t>(2 * od + 2, D);
                                const int64_t h1 = std::min<int64_t>(2 * oh + 2, H);
                                const int64_t w1 = std::min<int64_t>(2 * ow + 2, W);
                                const int64_t cnt = (d1 - 2 * od) * (h1 - 2 * oh) * (w1 - 2 * ow);
                                const S gv = g[(od * OH + oh) * OW + ow] / S(cnt);
                                for (int64_t a = 2 * od; a < d1; ++a)
                                    for (int64_t e = 2 * oh; e < h1; ++e)
                                        for (int64_t c = 2 * ow; c < w1; ++c) gx[(a * H + e) * W + c] += gv;
                            }
                },
                1);
        });
    }
    return out;
}

}  // namespace hwau
