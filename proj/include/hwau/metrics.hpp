#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hwau/tensor.hpp"

namespace hwau {

struct BinaryMask {
    int64_t d = 0, h = 0, w = 0;
    std::vector<uint8_t> v;

    static BinaryMask zeros(int64_t d, int64_t h, int64_t w) {
        return BinaryMask{d, h, w, std::vector<uint8_t>(size_t(d * h * w), 0)};
    }
    uint8_t at(int64_t dd, int64_t hh, int64_t ww) const { return v[size_t((dd * h + hh) * w + ww)]; }
    uint8_t& at(int64_t dd, int64_t hh, int64_t ww) { return v[size_t((dd * h + hh) * w + ww)]; }
    int64_t count() const;
};

BinaryMask threshold_mask(const std::vector<float>& probs, int64_t d, int64_t h, int64_t w,
                          float threshold = 0.5f);

// 100 * 2|P^G| / (|P|+|G|); 100 when both masks are empty (flagged by caller).
double dice_percent(const BinaryMask& pred, const BinaryMask& gt);

// Mask voxels with at least one face-adjacent background neighbor;
// out-of-bounds counts as background.
std::vector<std::array<int64_t, 3>> surface_voxels(const BinaryMask& m);

// Exact squared Euclidean distance to the nearest seed, anisotropic spacing,
// over the full grid. Seeds are voxel coordinates.
std::vector<double> squared_distance_transform(const std::vector<std::array<int64_t, 3>>& seeds,
                                               int64_t d, int64_t h, int64_t w,
                                               const std::array<float, 3>& spacing_mm);

// Symmetric set of surface-to-nearest-surface distances (both directions),
// in mm. Empty result iff either mask is empty.
std::vector<double> symmetric_surface_distances(const BinaryMask& pred, const BinaryMask& gt,
                                                const std::array<float, 3>& spacing_mm);

// Linear interpolation between order statistics; values need not be sorted.
double percentile(std::vector<double> values, double q);

// 95th percentile of the symmetric surface distances; empty mask -> nullopt.
std::optional<double> hd95_mm(const BinaryMask& pred, const BinaryMask& gt,
                              const std::array<float, 3>& spacing_mm);

// ---------------------------------------------------------------------------

struct CaseMetrics {
    std::string case_id;
    std::vector<double> dice;                 // per channel, percent
    std::vector<std::optional<double>> hd95;  // per channel, mm
    bool dice_trivial = false;                // some channel had both masks empty
};

struct MetricReport {
    std::vector<CaseMetrics> cases;
    std::vector<double> mean_dice_per_channel;
    double mean_dice = 0.0;
    std::optional<double> mean_hd95;  // per-case channel mean, then mean over defined cases
    int64_t undefined_hd95_cases = 0;

    static MetricReport aggregate(std::vector<CaseMetrics> cases);
};

// Rows = method/config label, columns = per-channel Dice, average, HD95.
std::string format_report_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                                const std::vector<std::string>& channel_names);
void write_report_tsv(const std::string& path,
                      const std::vector<std::pair<std::string, MetricReport>>& rows,
                      const std::vector<std::string>& channel_names);

}  // namespace hwau
