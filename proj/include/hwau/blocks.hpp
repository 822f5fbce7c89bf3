#pragma once

#include "hwau/conv.hpp"
#include "hwau/norm.hpp"
#include "hwau/resize.hpp"
#include "hwau/ssm.hpp"

namespace hwau {

// Two pointwise linear maps over channels with a ReLU between them,
// applied per voxel.
template <class S>
TensorT<S> mlp(const TensorT<S>& x, const TensorT<S>& w1, const TensorT<S>& b1, const TensorT<S>& w2,
               const TensorT<S>& b2) {
    TensorT<S> h = relu(conv3d(x, w1, &b1, ConvSpec::pointwise()));
    return conv3d(h, w2, &b2, ConvSpec::pointwise());
}

namespace detail {

// Sum of w[m] * parts[m], reduced per voxel in ascending value order of the
// contributions. The reduction is insensitive to modality order, so permuting
// inputs together with their weights reproduces the output bitwise.
template <class S>
TensorT<S> weighted_modality_sum(const std::vector<TensorT<S>>& parts, const TensorT<S>& w) {
    if (parts.empty()) throw ShapeError("weighted_modality_sum: no inputs");
    if (w.numel() != int64_t(parts.size()))
        throw ShapeError("weighted_modality_sum: weight count mismatch");
    if (parts.size() > 16) throw ShapeError("weighted_modality_sum: more than 16 modalities");
    for (const auto& p : parts) require_same_shape(parts[0], p, "weighted_modality_sum");
    const size_t M = parts.size();
    bool rec = taped<S>({&w});
    for (const auto& p : parts)
        if (taped<S>({&p})) rec = true;
    TensorT<S> out = make_output<S>(parts[0].shape(), "weighted_modality_sum", rec);
    const int64_t n = parts[0].numel();
    {
        std::vector<const S*> src(M);
        for (size_t m = 0; m < M; ++m) src[m] = parts[m].data();
        const S* pw = w.data();
        S* po = out.data();
        parallel_for(n, [&](int64_t i) {
            S terms[16];
            for (size_t m = 0; m < M; ++m) terms[m] = pw[m] * src[m][i];
            std::sort(terms, terms + M);
            S acc = 0;
            for (size_t m = 0; m < M; ++m) acc += terms[m];
            po[i] = acc;
        });
    }
    check_finite(out, "weighted_modality_sum");
    if (rec) {
        std::vector<std::shared_ptr<StorageT<S>>> srcs;
        for (const auto& p : parts) srcs.push_back(p.storage());
        auto st_w = w.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([srcs, st_w, st_o, n] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            for (size_t m = 0; m < srcs.size(); ++m) {
                if (srcs[m]->requires_grad) {
                    srcs[m]->ensure_grad();
                    const S wv = st_w->data[m];
                    S* gp = srcs[m]->grad.data();
                    for (int64_t i = 0; i < n; ++i) gp[i] += g[i] * wv;
                }
                if (st_w->requires_grad) {
                    st_w->ensure_grad();
                    S acc = 0;
                    const S* xp = srcs[m]->data.data();
                    for (int64_t i = 0; i < n; ++i) acc += g[i] * xp[i];
                    st_w->grad[m] += acc;
                }
            }
        });
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// HWA: per-modality multi-stride depthwise branches, resized back, weighted
// across modalities, projected to the stage-0 width.
// ---------------------------------------------------------------------------

inline constexpr int64_t kHwaBranchRates[4] = {1, 2, 4, 8};

template <class S>
struct HwaParamsT {
    // branch_w[m][b]: [1,1,r,r,r] depthwise kernel for modality m, rate r
    std::vector<std::array<TensorT<S>, 4>> branch_w;
    std::vector<std::array<TensorT<S>, 4>> branch_b;  // [1] each
    TensorT<S> modality_w;                            // [C_in]
    TensorT<S> proj_w;                                // [C0,4,1,1,1]
    TensorT<S> proj_b;                                // [C0]

    static HwaParamsT init(int64_t c_in, int64_t c0, Rng& rng) {
        HwaParamsT p;
        p.branch_w.resize(size_t(c_in));
        p.branch_b.resize(size_t(c_in));
        for (int64_t m = 0; m < c_in; ++m)
            for (int b = 0; b < 4; ++b) {
                const int64_t r = kHwaBranchRates[b];
                const double bound = 1.0 / std::sqrt(double(r * r * r));
                TensorT<S> w = TensorT<S>::zeros({1, 1, r, r, r});
                for (int64_t i = 0; i < w.numel(); ++i) w.at(i) = S(rng.uniform(-bound, bound));
                p.branch_w[size_t(m)][size_t(b)] = w;
                p.branch_b[size_t(m)][size_t(b)] = TensorT<S>::from_data({1}, {S(rng.uniform(-bound, bound))});
            }
        p.modality_w = TensorT<S>::filled({c_in}, S(1.0 / double(c_in)));
        const double bound = 1.0 / std::sqrt(4.0);
        p.proj_w = TensorT<S>::zeros({c0, 4, 1, 1, 1});
        for (int64_t i = 0; i < p.proj_w.numel(); ++i) p.proj_w.at(i) = S(rng.uniform(-bound, bound));
        p.proj_b = TensorT<S>::zeros({c0});
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (size_t m = 0; m < branch_w.size(); ++m)
            for (int b = 0; b < 4; ++b) {
                const std::string base =
                    prefix + ".mod" + std::to_string(m) + ".branch" + std::to_string(kHwaBranchRates[b]);
                f(base + ".weight", branch_w[m][size_t(b)]);
                f(base + ".bias", branch_b[m][size_t(b)]);
            }
        f(prefix + ".modality_w", modality_w);
        f(prefix + ".proj.weight", proj_w);
        f(prefix + ".proj.bias", proj_b);
    }
};

// Splits the input along modalities, runs the four strided depthwise branches
// (right-padding extents that the stride does not divide), resizes each result
// back to the input size, concatenates the branches, takes the learned
// modality-weighted sum and projects the 4 branch channels to c0.
template <class S>
TensorT<S> hwa_forward(const TensorT<S>& x_in, HwaParamsT<S>& p) {
    if (x_in.ndim() != 5) throw ShapeError("hwa_forward expects [N,C_in,D,H,W]");
    const int64_t c_in = x_in.dim(1);
    if (c_in != int64_t(p.branch_w.size()))
        throw ShapeError("hwa_forward: params built for " + std::to_string(p.branch_w.size()) +
                         " modalities, input has " + std::to_string(c_in));
    const int64_t D = x_in.dim(2), H = x_in.dim(3), W = x_in.dim(4);

    std::vector<TensorT<S>> mods = split_even(x_in, 1, c_in);
    std::vector<TensorT<S>> fused;
    fused.reserve(size_t(c_in));
    for (int64_t m = 0; m < c_in; ++m) {
        std::vector<TensorT<S>> branches;
        branches.reserve(4);
        for (int b = 0; b < 4; ++b) {
            const int64_t r = kHwaBranchRates[b];
            TensorT<S> xm = mods[size_t(m)];
            const int64_t pd = (r - D % r) % r, ph = (r - H % r) % r, pw = (r - W % r) % r;
            if (pd || ph || pw) xm = pad_spatial_right(xm, pd, ph, pw);
            if (xm.dim(2) < r || xm.dim(3) < r || xm.dim(4) < r)
                throw ShapeError("hwa_forward: branch r=" + std::to_string(r) +
                                 " collapses the spatial extent of input " + shape_str(x_in.shape()));
            TensorT<S> c = conv3d(xm, p.branch_w[size_t(m)][size_t(b)], &p.branch_b[size_t(m)][size_t(b)],
                                  ConvSpec::cubic(r, r, 0, 1));
            branches.push_back(trilinear_resize(c, D, H, W));
        }
        fused.push_back(concat(branches, 1));  // [N,4,D,H,W]
    }
    TensorT<S> x_ho = detail::weighted_modality_sum(fused, p.modality_w);
    return conv3d(x_ho, p.proj_w, &p.proj_b, ConvSpec::pointwise());
}

// ---------------------------------------------------------------------------
// SGC: dual depthwise branch + pointwise branch, residual MLP fusion.
// ---------------------------------------------------------------------------

template <class S>
struct SgcParamsT {
    TensorT<S> dw3_w;  // [C,1,3,3,3]
    TensorT<S> in1_gain, in1_bias;
    TensorT<S> dw1_w;  // [C,1,1,1,1]
    TensorT<S> in2_gain, in2_bias;
    TensorT<S> pw_w, pw_b;            // [C,C,1,1,1], [C]
    TensorT<S> mlp_w1, mlp_b1;        // [C,C,1,1,1], [C]
    TensorT<S> mlp_w2, mlp_b2;

    static SgcParamsT init(int64_t c, Rng& rng) {
        SgcParamsT p;
        auto u = [&](Shape sh, double fan_in) {
            TensorT<S> t = TensorT<S>::zeros(sh);
            const double bound = 1.0 / std::sqrt(fan_in);
            for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = S(rng.uniform(-bound, bound));
            return t;
        };
        p.dw3_w = u({c, 1, 3, 3, 3}, 27);
        p.in1_gain = TensorT<S>::filled({c}, S(1));
        p.in1_bias = TensorT<S>::zeros({c});
        p.dw1_w = u({c, 1, 1, 1, 1}, 1);
        p.in2_gain = TensorT<S>::filled({c}, S(1));
        p.in2_bias = TensorT<S>::zeros({c});
        p.pw_w = u({c, c, 1, 1, 1}, double(c));
        p.pw_b = TensorT<S>::zeros({c});
        p.mlp_w1 = u({c, c, 1, 1, 1}, double(c));
        p.mlp_b1 = TensorT<S>::zeros({c});
        p.mlp_w2 = u({c, c, 1, 1, 1}, double(c));
        p.mlp_b2 = TensorT<S>::zeros({c});
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".dw3.weight", dw3_w);
        f(prefix + ".in1.gain", in1_gain);
        f(prefix + ".in1.bias", in1_bias);
        f(prefix + ".dw1.weight", dw1_w);
        f(prefix + ".in2.gain", in2_gain);
        f(prefix + ".in2.bias", in2_bias);
        f(prefix + ".pw.weight", pw_w);
        f(prefix + ".pw.bias", pw_b);
        f(prefix + ".mlp.w1", mlp_w1);
        f(prefix + ".mlp.b1", mlp_b1);
        f(prefix + ".mlp.w2", mlp_w2);
        f(prefix + ".mlp.b2", mlp_b2);
    }
};

// X1 = IN(Dw_k1(IN(Dw_k3(x)))); X2 = Pw(x); out = x + MLP(X1 + X2)
template <class S>
TensorT<S> sgc_forward(const TensorT<S>& x, SgcParamsT<S>& p) {
    const int64_t c = x.dim(1);
    TensorT<S> x1 = conv3d(x, p.dw3_w, nullptr, ConvSpec::same(3, c));
    x1 = instance_norm3d_or_bias(x1, S(kInstanceNormEps), p.in1_gain, p.in1_bias);
    x1 = conv3d(x1, p.dw1_w, nullptr, ConvSpec::pointwise(c));
    x1 = instance_norm3d_or_bias(x1, S(kInstanceNormEps), p.in2_gain, p.in2_bias);
    TensorT<S> x2 = conv3d(x, p.pw_w, &p.pw_b, ConvSpec::pointwise());
    TensorT<S> fused = mlp(add(x1, x2), p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2);
    return add(x, fused);
}

// ---------------------------------------------------------------------------
// TFM: three directional scans fused by addition and by scaled dot-product
// attention over the flattened voxel sequence.
// ---------------------------------------------------------------------------

template <class S>
struct TfmParamsT {
    SsmParamsT<S> ma_forward, ma_reverse, ma_slice;
    TensorT<S> fuse_w;  // [C,2,1,1,1], groups=C over interleaved [mba, att] pairs
    TensorT<S> fuse_b;  // [C]

    static TfmParamsT init(int64_t c, int64_t state_size, Rng& rng) {
        TfmParamsT p;
        p.ma_forward = SsmParamsT<S>::init(c, state_size, rng);
        p.ma_reverse = SsmParamsT<S>::init(c, state_size, rng);
        p.ma_slice = SsmParamsT<S>::init(c, state_size, rng);
        p.fuse_w = TensorT<S>::zeros({c, 2, 1, 1, 1});
        const double bound = 1.0 / std::sqrt(2.0);
        for (int64_t i = 0; i < p.fuse_w.numel(); ++i) p.fuse_w.at(i) = S(rng.uniform(-bound, bound));
        p.fuse_b = TensorT<S>::zeros({c});
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        ma_forward.visit(prefix + ".ma_f", f);
        ma_reverse.visit(prefix + ".ma_r", f);
        ma_slice.visit(prefix + ".ma_s", f);
        f(prefix + ".fuse.weight", fuse_w);
        f(prefix + ".fuse.bias", fuse_b);
    }
};

// Exact attention is used while the key/value sequence fits the budget.
// Above it, keys and values are average-pooled by 2 per axis (repeatedly)
// when pooling is allowed; otherwise the call is rejected.
template <class S>
TensorT<S> tfm_forward(const TensorT<S>& x, TfmParamsT<S>& p, int64_t attention_budget = 4096,
                       bool allow_pooled_attention = true) {
    if (x.ndim() != 5) throw ShapeError("tfm_forward expects [N,C,D,H,W]");
    const int64_t C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t L = D * H * W;

    TensorT<S> mq = ma(x, Orientation::Forward, p.ma_forward);
    TensorT<S> mk = ma(x, Orientation::Reverse, p.ma_reverse);
    TensorT<S> mv = ma(x, Orientation::InterSlice, p.ma_slice);

    TensorT<S> x_mba = add(add(mq, mk), mv);

    TensorT<S> keys = mk, values = mv;
    if (L > attention_budget) {
        if (!allow_pooled_attention)
            throw ConfigError("tfm_forward: sequence length " + std::to_string(L) +
                              " exceeds the attention budget " + std::to_string(attention_budget) +
                              "; enable pooled attention to process it");
        while (keys.dim(2) * keys.dim(3) * keys.dim(4) > attention_budget &&
               (keys.dim(2) > 1 || keys.dim(3) > 1 || keys.dim(4) > 1)) {
            keys = avg_pool3d_2x(keys);
            values = avg_pool3d_2x(values);
        }
    }

    TensorT<S> qs = flatten_seq(mq, Orientation::Forward);
    TensorT<S> ks = flatten_seq(keys, Orientation::Forward);
    TensorT<S> vs = flatten_seq(values, Orientation::Forward);

    const S inv_sqrt_d = S(1.0 / std::sqrt(double(C)));
    TensorT<S> scores = scale_const(matmul(qs, transpose_12(ks)), inv_sqrt_d);
    TensorT<S> att = matmul(softmax(scores, 2), vs);
    TensorT<S> x_att = unflatten_seq(att, Orientation::Forward, D, H, W);

    // pair channel c of the scan sum with channel c of the attention map
    auto interleave = std::vector<int64_t>(size_t(2 * C));
    for (int64_t c = 0; c < C; ++c) {
        interleave[size_t(2 * c)] = c;
        interleave[size_t(2 * c + 1)] = C + c;
    }
    TensorT<S> paired = gather_channels(concat<S>({x_mba, x_att}, 1), interleave);
    return conv3d(paired, p.fuse_w, &p.fuse_b, ConvSpec::pointwise(C));
}

}  // namespace hwau
