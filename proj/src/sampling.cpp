#include "hwau/sampling.hpp"

#include <cmath>
#include <cstring>
#include <iostream>

namespace hwau {

namespace {

std::vector<float> resample(const Volume& v, int64_t td, int64_t th, int64_t tw, bool nearest) {
    std::vector<float> out(size_t(td * th * tw));
    for (int64_t d = 0; d < td; ++d)
        for (int64_t h = 0; h < th; ++h)
            for (int64_t w = 0; w < tw; ++w) {
                const double sd = (double(d) + 0.5) * double(v.d) / double(td) - 0.5;
                const double sh = (double(h) + 0.5) * double(v.h) / double(th) - 0.5;
                const double sw = (double(w) + 0.5) * double(v.w) / double(tw) - 0.5;
                if (nearest) {
                    const auto cl = [](double s, int64_t n) {
                        int64_t i = int64_t(std::llround(s));
                        return std::min(std::max<int64_t>(i, 0), n - 1);
                    };
                    out[size_t((d * th + h) * tw + w)] = v.at(cl(sd, v.d), cl(sh, v.h), cl(sw, v.w));
                } else {
                    const auto lerp_axis = [](double s, int64_t n, int64_t& i0, int64_t& i1, double& f) {
                        double sc = std::min(std::max(s, 0.0), double(n - 1));
                        i0 = std::min(int64_t(sc), n - 1 > 0 ? n - 2 : int64_t(0));
                        i1 = n == 1 ? i0 : i0 + 1;
                        f = sc - double(i0);
                    };
                    int64_t d0, d1, h0, h1, w0, w1;
                    double fd, fh, fw;
                    lerp_axis(sd, v.d, d0, d1, fd);
                    lerp_axis(sh, v.h, h0, h1, fh);
                    lerp_axis(sw, v.w, w0, w1, fw);
                    double acc = 0;
                    for (int dd = 0; dd < 2; ++dd)
                        for (int hh = 0; hh < 2; ++hh)
                            for (int ww = 0; ww < 2; ++ww) {
                                const double wt = (dd ? fd : 1 - fd) * (hh ? fh : 1 - fh) * (ww ? fw : 1 - fw);
                                acc += wt * double(v.at(dd ? d1 : d0, hh ? h1 : h0, ww ? w1 : w0));
                            }
                    out[size_t((d * th + h) * tw + w)] = float(acc);
                }
            }
    return out;
}

}  // namespace

LoadedCase LoadedCase::from_record(const CaseRecord& rec) {
    rec.validate();
    LoadedCase c;
    c.id = rec.id;
    c.d = rec.images[0].d;
    c.h = rec.images[0].h;
    c.w = rec.images[0].w;
    c.spacing = rec.images[0].spacing;
    for (size_t m = 0; m < rec.images.size(); ++m) {
        const Volume& img = rec.images[m];
        const Volume& msk = rec.masks[m];
        if (img.d == c.d && img.h == c.h && img.w == c.w) {
            c.images.push_back(img.voxels);
            c.masks.push_back(msk.voxels);
        } else {
            c.images.push_back(resample(img, c.d, c.h, c.w, false));
            auto mr = resample(msk, c.d, c.h, c.w, true);
            c.masks.push_back(std::move(mr));
        }
    }
    for (int64_t off = 0; off < c.d * c.h * c.w; ++off)
        for (const auto& m : c.masks)
            if (m[size_t(off)] != 0.f) {
                c.fg_union.push_back(off);
                break;
            }
    return c;
}

void extract_crop(const std::vector<float>& src, int64_t d, int64_t h, int64_t w,
                  const std::array<int64_t, 3>& start, const std::array<int64_t, 3>& crop, float* dst) {
    std::memset(dst, 0, size_t(crop[0] * crop[1] * crop[2]) * sizeof(float));
    for (int64_t cd = 0; cd < crop[0]; ++cd) {
        const int64_t sd = start[0] + cd;
        if (sd < 0 || sd >= d) continue;
        for (int64_t ch = 0; ch < crop[1]; ++ch) {
            const int64_t sh = start[1] + ch;
            if (sh < 0 || sh >= h) continue;
            const int64_t w0 = std::max<int64_t>(0, -start[2]);
            const int64_t w1 = std::min(crop[2], w - start[2]);
            if (w0 >= w1) continue;
            std::memcpy(dst + (cd * crop[1] + ch) * crop[2] + w0,
                        src.data() + (sd * h + sh) * w + start[2] + w0, size_t(w1 - w0) * sizeof(float));
        }
    }
}

CropSample CropSampler::sample(const LoadedCase& c, const std::array<int64_t, 3>& crop, Rng& rng) {
    const bool want_positive = next_positive_;
    next_positive_ = !next_positive_;

    bool positive = want_positive;
    int64_t center;
    if (want_positive && !c.fg_union.empty()) {
        center = c.fg_union[size_t(rng.below(uint64_t(c.fg_union.size())))];
    } else {
        if (want_positive) {
            positive = false;
            ++empty_fallbacks_;
            if (!warned_) {
                std::cerr << "warning: case " << c.id
                          << " has empty masks; sampling background-centered crops only\n";
                warned_ = true;
            }
        }
        // rejection-sample a background voxel; everything is background when
        // the masks are empty
        const int64_t total = c.d * c.h * c.w;
        const bool have_fg = !c.fg_union.empty();
        for (int attempt = 0;; ++attempt) {
            center = int64_t(rng.below(uint64_t(total)));
            if (!have_fg) break;
            bool in_fg = false;
            for (const auto& m : c.masks)
                if (m[size_t(center)] != 0.f) {
                    in_fg = true;
                    break;
                }
            if (!in_fg || attempt > 10000) break;
        }
    }
    const int64_t cd = center / (c.h * c.w);
    const int64_t ch = (center / c.w) % c.h;
    const int64_t cw = center % c.w;
    const std::array<int64_t, 3> start{cd - crop[0] / 2, ch - crop[1] / 2, cw - crop[2] / 2};

    const int64_t cm = c.modalities();
    CropSample s;
    s.positive_centered = positive;
    s.input = Tensor::zeros({cm, crop[0], crop[1], crop[2]});
    s.target = Tensor::zeros({cm, crop[0], crop[1], crop[2]});
    for (int64_t m = 0; m < cm; ++m) {
        extract_crop(c.images[size_t(m)], c.d, c.h, c.w, start, crop,
                     s.input.data() + m * crop[0] * crop[1] * crop[2]);
        extract_crop(c.masks[size_t(m)], c.d, c.h, c.w, start, crop,
                     s.target.data() + m * crop[0] * crop[1] * crop[2]);
    }
    return s;
}

void flip_axis(Tensor& stack, int axis) {
    if (stack.ndim() != 4) throw ShapeError("flip_axis expects [C,D,H,W]");
    const int64_t C = stack.dim(0), D = stack.dim(1), H = stack.dim(2), W = stack.dim(3);
    float* p = stack.data();
    if (axis == 0) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t d = 0; d < D / 2; ++d)
                for (int64_t i = 0; i < H * W; ++i)
                    std::swap(p[(c * D + d) * H * W + i], p[(c * D + (D - 1 - d)) * H * W + i]);
    } else if (axis == 1) {
        for (int64_t cd = 0; cd < C * D; ++cd)
            for (int64_t hh = 0; hh < H / 2; ++hh)
                for (int64_t ww = 0; ww < W; ++ww)
                    std::swap(p[(cd * H + hh) * W + ww], p[(cd * H + (H - 1 - hh)) * W + ww]);
    } else if (axis == 2) {
        for (int64_t r = 0; r < C * D * H; ++r)
            for (int64_t ww = 0; ww < W / 2; ++ww) std::swap(p[r * W + ww], p[r * W + (W - 1 - ww)]);
    } else {
        throw ShapeError("flip_axis: axis must be 0..2");
    }
}

void augment(Tensor& input, Tensor& target, Rng& rng, const AugmentConfig& cfg) {
    for (int axis = 0; axis < 3; ++axis) {
        if (rng.coin(double(cfg.flip_prob))) {
            flip_axis(input, axis);
            flip_axis(target, axis);
        }
    }
    if (rng.coin(double(cfg.intensity_prob))) {
        const float u = float(rng.uniform(0.9, 1.1));
        const float v = float(rng.uniform(-0.1, 0.1));
        float* p = input.data();
        for (int64_t i = 0; i < input.numel(); ++i) p[i] = p[i] * u + v;
    }
}

}  // namespace hwau
