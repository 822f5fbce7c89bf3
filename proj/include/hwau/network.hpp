#pragma once

#include <optional>

#include "hwau/blocks.hpp"

namespace hwau {

// 4-stage U-shape: HWA (or pointwise) stem at full resolution, stride-2
// depthwise-separable encoder stages with SGC, TFM on every skip connection,
// transposed-conv decoder with skip addition, sigmoid head.
struct ModelConfig {
    int64_t in_channels = 2;
    int64_t out_channels = 2;
    int64_t base_width = 8;
    int64_t ssm_state_size = 4;
    int64_t attention_budget = 4096;
    bool allow_pooled_attention = true;
    bool hwa = true;
    bool sgc = true;
    bool tfm = true;

    static constexpr int kStages = 4;
    static constexpr int64_t kSpatialMultiple = 16;  // 2^kStages

    int64_t stage_width(int i) const { return base_width << i; }
    // channel width of skip s: 0 = stem, 1..3 = encoder stages 0..2
    int64_t skip_width(int s) const { return s == 0 ? base_width : stage_width(s - 1); }

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw ConfigError("model: channel counts must be >= 1");
        if (base_width < 1) throw ConfigError("model: base width must be >= 1");
        if (ssm_state_size < 1 || ssm_state_size > 64)
            throw ConfigError("model: ssm state size must be in 1..64");
        if (attention_budget < 1) throw ConfigError("model: attention budget must be >= 1");
    }
};

template <class S>
struct EncStageT {
    TensorT<S> dw_w;  // [cin,1,3,3,3], stride 2
    TensorT<S> pw_w;  // [cout,cin,1,1,1]
    TensorT<S> in_gain, in_bias;
};

template <class S>
struct DecStageT {
    TensorT<S> up_w;     // [cin,cout,2,2,2] transposed
    TensorT<S> match_w;  // [cout,cout,1,1,1] skip width-match
    TensorT<S> in_gain, in_bias;
};

template <class S>
struct ModelParamsT {
    ModelConfig cfg;
    std::optional<HwaParamsT<S>> hwa;
    TensorT<S> stem_w, stem_b;  // used when HWA is disabled
    std::vector<EncStageT<S>> enc;
    std::vector<SgcParamsT<S>> sgc;  // per stage, when enabled
    std::optional<SgcParamsT<S>> bottleneck;
    std::vector<TfmParamsT<S>> tfm;  // per skip, when enabled
    std::vector<DecStageT<S>> dec;
    TensorT<S> head_w, head_b;

    static ModelParamsT init(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        Rng rng(seed);
        ModelParamsT p;
        p.cfg = cfg;
        auto u = [&](Shape sh, double fan_in) {
            TensorT<S> t = TensorT<S>::zeros(sh);
            const double bound = 1.0 / std::sqrt(fan_in);
            for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = S(rng.uniform(-bound, bound));
            return t;
        };
        if (cfg.hwa) {
            p.hwa = HwaParamsT<S>::init(cfg.in_channels, cfg.base_width, rng);
        } else {
            p.stem_w = u({cfg.base_width, cfg.in_channels, 1, 1, 1}, double(cfg.in_channels));
            p.stem_b = TensorT<S>::zeros({cfg.base_width});
        }
        for (int i = 0; i < ModelConfig::kStages; ++i) {
            const int64_t cin = i == 0 ? cfg.base_width : cfg.stage_width(i - 1);
            const int64_t cout = cfg.stage_width(i);
            EncStageT<S> e;
            e.dw_w = u({cin, 1, 3, 3, 3}, 27);
            e.pw_w = u({cout, cin, 1, 1, 1}, double(cin));
            e.in_gain = TensorT<S>::filled({cout}, S(1));
            e.in_bias = TensorT<S>::zeros({cout});
            p.enc.push_back(std::move(e));
            if (cfg.sgc) p.sgc.push_back(SgcParamsT<S>::init(cout, rng));
        }
        if (cfg.sgc)
            p.bottleneck = SgcParamsT<S>::init(cfg.stage_width(ModelConfig::kStages - 1), rng);
        if (cfg.tfm)
            for (int s = 0; s < ModelConfig::kStages; ++s)
                p.tfm.push_back(TfmParamsT<S>::init(cfg.skip_width(s), cfg.ssm_state_size, rng));
        for (int j = 0; j < ModelConfig::kStages; ++j) {
            // decoder stage j consumes stage_width(3-j) and produces skip_width(3-j)
            const int64_t cin = cfg.stage_width(ModelConfig::kStages - 1 - j);
            const int64_t cout = cfg.skip_width(ModelConfig::kStages - 1 - j);
            DecStageT<S> d;
            d.up_w = u({cin, cout, 2, 2, 2}, double(cin) * 8.0);
            d.match_w = u({cout, cout, 1, 1, 1}, double(cout));
            d.in_gain = TensorT<S>::filled({cout}, S(1));
            d.in_bias = TensorT<S>::zeros({cout});
            p.dec.push_back(std::move(d));
        }
        p.head_w = u({cfg.out_channels, cfg.base_width, 1, 1, 1}, double(cfg.base_width));
        p.head_b = TensorT<S>::zeros({cfg.out_channels});
        p.visit([](const std::string&, TensorT<S>& t) { t.set_requires_grad(true); });
        return p;
    }

    // Enumerates every parameter tensor with a stable name; the order defines
    // the checkpoint and optimizer-state layout.
    template <class F>
    void visit(F&& f) {
        if (hwa) hwa->visit("hwa", f);
        if (stem_w.defined()) {
            f(std::string("stem.weight"), stem_w);
            f(std::string("stem.bias"), stem_b);
        }
        for (size_t i = 0; i < enc.size(); ++i) {
            const std::string base = "enc" + std::to_string(i);
            f(base + ".dw.weight", enc[i].dw_w);
            f(base + ".pw.weight", enc[i].pw_w);
            f(base + ".in.gain", enc[i].in_gain);
            f(base + ".in.bias", enc[i].in_bias);
        }
        for (size_t i = 0; i < sgc.size(); ++i) sgc[i].visit("sgc" + std::to_string(i), f);
        if (bottleneck) bottleneck->visit("bottleneck", f);
        for (size_t s = 0; s < tfm.size(); ++s) tfm[s].visit("tfm" + std::to_string(s), f);
        for (size_t j = 0; j < dec.size(); ++j) {
            const std::string base = "dec" + std::to_string(j);
            f(base + ".up.weight", dec[j].up_w);
            f(base + ".match.weight", dec[j].match_w);
            f(base + ".in.gain", dec[j].in_gain);
            f(base + ".in.bias", dec[j].in_bias);
        }
        f(std::string("head.weight"), head_w);
        f(std::string("head.bias"), head_b);
    }

    int64_t total_parameter_count() {
        int64_t n = 0;
        visit([&](const std::string&, TensorT<S>& t) { n += t.numel(); });
        return n;
    }

    void zero_grads() {
        visit([](const std::string&, TensorT<S>& t) { t.zero_grad(); });
    }
};

// Shapes of the encoder stage outputs, captured for contract tests.
struct StageTrace {
    std::vector<Shape> encoder_shapes;
};

template <class S>
TensorT<S> forward(const TensorT<S>& x, ModelParamsT<S>& p, StageTrace* trace = nullptr) {
    const ModelConfig& cfg = p.cfg;
    if (x.ndim() != 5) throw ShapeError("forward expects [N,C_in,D,H,W]");
    if (x.dim(1) != cfg.in_channels)
        throw ShapeError("forward: input has " + std::to_string(x.dim(1)) + " channels, config expects " +
                         std::to_string(cfg.in_channels));
    for (int a = 2; a < 5; ++a)
        if (x.dim(size_t(a)) % ModelConfig::kSpatialMultiple != 0)
            throw ShapeError("forward: spatial extents " + shape_str(x.shape()) +
                             " must be divisible by 16; zero-pad the input first");

    TensorT<S> f = cfg.hwa ? hwa_forward(x, *p.hwa) : conv3d(x, p.stem_w, &p.stem_b, ConvSpec::pointwise());
    std::vector<TensorT<S>> skips{f};
    for (int i = 0; i < ModelConfig::kStages; ++i) {
        const int64_t cin = f.dim(1);
        f = conv3d(f, p.enc[size_t(i)].dw_w, nullptr, ConvSpec::cubic(3, 2, 1, cin));
        f = conv3d(f, p.enc[size_t(i)].pw_w, nullptr, ConvSpec::pointwise());
        f = relu(instance_norm3d_or_bias(f, S(kInstanceNormEps), p.enc[size_t(i)].in_gain,
                                         p.enc[size_t(i)].in_bias));
        if (cfg.sgc) f = sgc_forward(f, p.sgc[size_t(i)]);
        if (trace) trace->encoder_shapes.push_back(f.shape());
        if (i < ModelConfig::kStages - 1) skips.push_back(f);
    }
    if (cfg.sgc) f = sgc_forward(f, *p.bottleneck);
    for (int j = 0; j < ModelConfig::kStages; ++j) {
        f = transposed_conv3d(f, p.dec[size_t(j)].up_w, nullptr, ConvSpec::cubic(2, 2, 0));
        const int s = ModelConfig::kStages - 1 - j;
        TensorT<S> skip = skips[size_t(s)];
        if (cfg.tfm)
            skip = tfm_forward(skip, p.tfm[size_t(s)], cfg.attention_budget, cfg.allow_pooled_attention);
        skip = conv3d(skip, p.dec[size_t(j)].match_w, nullptr, ConvSpec::pointwise());
        f = relu(instance_norm3d_or_bias(add(f, skip), S(kInstanceNormEps), p.dec[size_t(j)].in_gain,
                                         p.dec[size_t(j)].in_bias));
    }
    return sigmoid(conv3d(f, p.head_w, &p.head_b, ConvSpec::pointwise()));
}

// ---------------------------------------------------------------------------
// Sliding-window inference with Gaussian-weighted blending (sigma = roi/8).
// Tiles are visited in a fixed raster order; a volume that matches the roi
// exactly is a plain forward call.
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sliding_window_infer(const TensorT<S>& vol, ModelParamsT<S>& params,
                                const std::array<int64_t, 3>& roi, double overlap) {
    if (vol.ndim() != 5 || vol.dim(0) != 1)
        throw ShapeError("sliding_window_infer expects [1,C,D,H,W]");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ConfigError("sliding_window_infer: overlap must be in [0,1)");
    for (int a = 0; a < 3; ++a)
        if (roi[size_t(a)] < 1 || roi[size_t(a)] % ModelConfig::kSpatialMultiple != 0)
            throw ConfigError("sliding_window_infer: roi extents must be positive multiples of 16");

    const int64_t D = vol.dim(2), H = vol.dim(3), W = vol.dim(4);
    const int64_t PD = (ModelConfig::kSpatialMultiple - D % ModelConfig::kSpatialMultiple) %
                       ModelConfig::kSpatialMultiple;
    const int64_t PH = (ModelConfig::kSpatialMultiple - H % ModelConfig::kSpatialMultiple) %
                       ModelConfig::kSpatialMultiple;
    const int64_t PW = (ModelConfig::kSpatialMultiple - W % ModelConfig::kSpatialMultiple) %
                       ModelConfig::kSpatialMultiple;
    TensorT<S> padded = (PD || PH || PW) ? pad_spatial_right(vol, PD, PH, PW) : vol;
    const std::array<int64_t, 3> ext{padded.dim(2), padded.dim(3), padded.dim(4)};
    for (int a = 0; a < 3; ++a)
        if (roi[size_t(a)] > ext[size_t(a)])
            throw DataError("sliding_window_infer: roi extent " + std::to_string(roi[size_t(a)]) +
                            " exceeds padded volume extent " + std::to_string(ext[size_t(a)]) +
                            " along axis " + detail::axis_name(a));

    const int64_t C_out = params.cfg.out_channels;
    if (roi == ext) {
        TensorT<S> prob = forward(padded, params);
        if (!(PD || PH || PW)) return prob;
        TensorT<S> out = TensorT<S>::zeros({1, C_out, D, H, W});
        for (int64_t c = 0; c < C_out; ++c)
            for (int64_t d = 0; d < D; ++d)
                for (int64_t h = 0; h < H; ++h)
                    std::memcpy(out.data() + ((c * D + d) * H + h) * W,
                                prob.data() + ((c * ext[0] + d) * ext[1] + h) * ext[2],
                                size_t(W) * sizeof(S));
        return out;
    }

    // tile starts per axis: fixed stride, last tile clamped to cover the end
    auto starts = [&](int64_t extent, int64_t r) {
        std::vector<int64_t> v;
        const int64_t step = std::max<int64_t>(1, int64_t(std::llround(double(r) * (1.0 - overlap))));
        for (int64_t s = 0;; s += step) {
            if (s + r >= extent) {
                v.push_back(extent - r);
                break;
            }
            v.push_back(s);
        }
        return v;
    };
    const auto sd = starts(ext[0], roi[0]);
    const auto sh = starts(ext[1], roi[1]);
    const auto sw = starts(ext[2], roi[2]);

    auto axis_weights = [](int64_t r) {
        auto w = std::vector<double>(size_t(r));
        const double sigma = double(r) / 8.0;
        const double center = double(r) / 2.0;
        for (int64_t i = 0; i < r; ++i) {
            const double d = (double(i) + 0.5 - center) / sigma;
            w[size_t(i)] = std::exp(-0.5 * d * d);
        }
        return w;
    };
    const auto wd = axis_weights(roi[0]), wh = axis_weights(roi[1]), ww = axis_weights(roi[2]);

    std::vector<double> acc(size_t(C_out * ext[0] * ext[1] * ext[2]), 0.0);
    std::vector<double> wsum(size_t(ext[0] * ext[1] * ext[2]), 0.0);
    const int64_t C_in = padded.dim(1);

    for (int64_t td : sd)
        for (int64_t th : sh)
            for (int64_t tw : sw) {
                TensorT<S> tile = TensorT<S>::zeros({1, C_in, roi[0], roi[1], roi[2]});
                for (int64_t c = 0; c < C_in; ++c)
                    for (int64_t d = 0; d < roi[0]; ++d)
                        for (int64_t h = 0; h < roi[1]; ++h)
                            std::memcpy(
                                tile.data() + ((c * roi[0] + d) * roi[1] + h) * roi[2],
                                padded.data() + ((c * ext[0] + td + d) * ext[1] + th + h) * ext[2] + tw,
                                size_t(roi[2]) * sizeof(S));
                TensorT<S> prob = forward(tile, params);
                for (int64_t d = 0; d < roi[0]; ++d)
                    for (int64_t h = 0; h < roi[1]; ++h)
                        for (int64_t w2 = 0; w2 < roi[2]; ++w2) {
                            const double wt = wd[size_t(d)] * wh[size_t(h)] * ww[size_t(w2)];
                            const int64_t voff = ((td + d) * ext[1] + th + h) * ext[2] + tw + w2;
                            wsum[size_t(voff)] += wt;
                            for (int64_t c = 0; c < C_out; ++c)
                                acc[size_t(c * ext[0] * ext[1] * ext[2] + voff)] +=
                                    wt * double(prob.at(((c * roi[0] + d) * roi[1] + h) * roi[2] + w2));
                        }
            }

    TensorT<S> out = TensorT<S>::zeros({1, C_out, D, H, W});
    for (int64_t c = 0; c < C_out; ++c)
        for (int64_t d = 0; d < D; ++d)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w2 = 0; w2 < W; ++w2) {
                    const int64_t voff = (d * ext[1] + h) * ext[2] + w2;
                    out.at(((c * D + d) * H + h) * W + w2) =
                        S(acc[size_t(c * ext[0] * ext[1] * ext[2] + voff)] / wsum[size_t(voff)]);
                }
    return out;
}

}  // namespace hwau
