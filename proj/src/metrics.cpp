#include "hwau/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hwau {

namespace {
constexpr double kBig = 1e30;
}

int64_t BinaryMask::count() const {
    int64_t n = 0;
    for (uint8_t x : v) n += x != 0;
    return n;
}

BinaryMask threshold_mask(const std::vector<float>& probs, int64_t d, int64_t h, int64_t w,
                          float threshold) {
    if (int64_t(probs.size()) != d * h * w) throw ShapeError("threshold_mask: size mismatch");
    BinaryMask m = BinaryMask::zeros(d, h, w);
    for (size_t i = 0; i < probs.size(); ++i) m.v[i] = probs[i] > threshold ? 1 : 0;
    return m;
}

double dice_percent(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.d != gt.d || pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("dice: mask extents differ");
    int64_t p = 0, g = 0, both = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool bp = pred.v[i] != 0, bg = gt.v[i] != 0;
        p += bp;
        g += bg;
        both += bp && bg;
    }
    if (p + g == 0) return 100.0;  // both empty, by convention
    return 100.0 * 2.0 * double(both) / double(p + g);
}

std::vector<std::array<int64_t, 3>> surface_voxels(const BinaryMask& m) {
    std::vector<std::array<int64_t, 3>> out;
    auto bg = [&](int64_t d, int64_t h, int64_t w) {
        if (d < 0 || d >= m.d || h < 0 || h >= m.h || w < 0 || w >= m.w) return true;
        return m.at(d, h, w) == 0;
    };
    for (int64_t d = 0; d < m.d; ++d)
        for (int64_t h = 0; h < m.h; ++h)
            for (int64_t w = 0; w < m.w; ++w) {
                if (m.at(d, h, w) == 0) continue;
                if (bg(d - 1, h, w) || bg(d + 1, h, w) || bg(d, h - 1, w) || bg(d, h + 1, w) ||
                    bg(d, h, w - 1) || bg(d, h, w + 1))
                    out.push_back({d, h, w});
            }
    return out;
}

namespace {

// 1D lower envelope of parabolas (Felzenszwalb-Huttenlocher) with sample
// positions i*s; strided access so the 3D passes reuse it per axis.
void dt1d_strided(double* f, int64_t n, int64_t stride, double s, double* scratch_d, int64_t* scratch_v,
                  double* scratch_z) {
    const double inf = std::numeric_limits<double>::infinity();
    int64_t k = 0;
    scratch_v[0] = 0;
    scratch_z[0] = -inf;
    scratch_z[1] = inf;
    for (int64_t q = 1; q < n; ++q) {
        const double fq = f[q * stride];
        const double qs = double(q) * s;
        while (true) {
            const double vs = double(scratch_v[k]) * s;
            const double fv = f[scratch_v[k] * stride];
            const double sint = ((fq + qs * qs) - (fv + vs * vs)) / (2.0 * qs - 2.0 * vs);
            if (sint <= scratch_z[k]) {
                --k;
            } else {
                ++k;
                scratch_v[k] = q;
                scratch_z[k] = sint;
                scratch_z[k + 1] = inf;
                break;
            }
        }
    }
    k = 0;
    for (int64_t q = 0; q < n; ++q) {
        const double x = double(q) * s;
        while (scratch_z[k + 1] < x) ++k;
        const double dx = x - double(scratch_v[k]) * s;
        scratch_d[q] = dx * dx + f[scratch_v[k] * stride];
    }
    for (int64_t q = 0; q < n; ++q) f[q * stride] = scratch_d[q];
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::array<int64_t, 3>>& seeds,
                                               int64_t d, int64_t h, int64_t w,
                                               const std::array<float, 3>& spacing_mm) {
    std::vector<double> dist(size_t(d * h * w), kBig);
    for (const auto& s : seeds) dist[size_t((s[0] * h + s[1]) * w + s[2])] = 0.0;

    const int64_t maxn = std::max({d, h, w});
    std::vector<double> sd;
    std::vector<int64_t> sv;
    std::vector<double> sz;
    sd.resize(size_t(maxn));
    sv.resize(size_t(maxn));
    sz.resize(size_t(maxn + 1));

    // W axis
    for (int64_t dd = 0; dd < d; ++dd)
        for (int64_t hh = 0; hh < h; ++hh)
            dt1d_strided(dist.data() + (dd * h + hh) * w, w, 1, double(spacing_mm[2]), sd.data(), sv.data(),
                         sz.data());
    // H axis
    for (int64_t dd = 0; dd < d; ++dd)
        for (int64_t ww = 0; ww < w; ++ww)
            dt1d_strided(dist.data() + dd * h * w + ww, h, w, double(spacing_mm[1]), sd.data(), sv.data(),
                         sz.data());
    // D axis
    for (int64_t hh = 0; hh < h; ++hh)
        for (int64_t ww = 0; ww < w; ++ww)
            dt1d_strided(dist.data() + hh * w + ww, d, h * w, double(spacing_mm[0]), sd.data(), sv.data(),
                         sz.data());
    return dist;
}

std::vector<double> symmetric_surface_distances(const BinaryMask& pred, const BinaryMask& gt,
                                                const std::array<float, 3>& spacing_mm) {
    if (pred.d != gt.d || pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("surface distances: mask extents differ");
    const auto sp = surface_voxels(pred);
    const auto sg = surface_voxels(gt);
    if (sp.empty() || sg.empty()) return {};
    const auto dt_g = squared_distance_transform(sg, pred.d, pred.h, pred.w, spacing_mm);
    const auto dt_p = squared_distance_transform(sp, pred.d, pred.h, pred.w, spacing_mm);
    std::vector<double> out;
    out.reserve(sp.size() + sg.size());
    for (const auto& s : sp) out.push_back(std::sqrt(dt_g[size_t((s[0] * pred.h + s[1]) * pred.w + s[2])]));
    for (const auto& s : sg) out.push_back(std::sqrt(dt_p[size_t((s[0] * pred.h + s[1]) * pred.w + s[2])]));
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("percentile of empty set");
    std::sort(values.begin(), values.end());
    const double rank = q * double(values.size() - 1);
    const auto lo = size_t(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - double(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::optional<double> hd95_mm(const BinaryMask& pred, const BinaryMask& gt,
                              const std::array<float, 3>& spacing_mm) {
    auto d = symmetric_surface_distances(pred, gt, spacing_mm);
    if (d.empty()) return std::nullopt;
    return percentile(std::move(d), 0.95);
}

MetricReport MetricReport::aggregate(std::vector<CaseMetrics> cases) {
    MetricReport r;
    r.cases = std::move(cases);
    if (r.cases.empty()) return r;
    const size_t channels = r.cases[0].dice.size();
    r.mean_dice_per_channel.assign(channels, 0.0);
    double dice_total = 0.0;
    double hd_total = 0.0;
    int64_t hd_cases = 0;
    for (const auto& c : r.cases) {
        double case_hd = 0.0;
        int64_t case_hd_n = 0;
        for (size_t ch = 0; ch < channels; ++ch) {
            r.mean_dice_per_channel[ch] += c.dice[ch];
            dice_total += c.dice[ch];
            if (c.hd95[ch]) {
                case_hd += *c.hd95[ch];
                ++case_hd_n;
            }
        }
        if (case_hd_n > 0) {
            hd_total += case_hd / double(case_hd_n);
            ++hd_cases;
        } else {
            ++r.undefined_hd95_cases;
        }
    }
    for (auto& v : r.mean_dice_per_channel) v /= double(r.cases.size());
    r.mean_dice = dice_total / double(r.cases.size() * channels);
    if (hd_cases > 0) r.mean_hd95 = hd_total / double(hd_cases);
    return r;
}

std::string format_report_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                                const std::vector<std::string>& channel_names) {
    std::ostringstream os;
    os << "method";
    for (const auto& c : channel_names) os << "\tdice_" << c;
    os << "\tdice_avg\thd95_mm\tundefined_hd95\n";
    os.setf(std::ios::fixed);
    os.precision(2);
    for (const auto& [label, rep] : rows) {
        os << label;
        for (double d : rep.mean_dice_per_channel) os << "\t" << d;
        os << "\t" << rep.mean_dice << "\t";
        if (rep.mean_hd95)
            os << *rep.mean_hd95;
        else
            os << "n/a";
        os << "\t" << rep.undefined_hd95_cases << "\n";
    }
    return os.str();
}

void write_report_tsv(const std::string& path,
                      const std::vector<std::pair<std::string, MetricReport>>& rows,
                      const std::vector<std::string>& channel_names) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << format_report_table(rows, channel_names);
    if (!f) throw DataError("write failed: " + path);
}

}  // namespace hwau
