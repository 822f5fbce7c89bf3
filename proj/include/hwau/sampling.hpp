#pragma once

#include "hwau/dataset.hpp"
#include "hwau/rng.hpp"
#include "hwau/tensor.hpp"

namespace hwau {

// A case with its modality stack materialized and foreground bookkeeping for
// balanced crop sampling. All modalities are resampled onto modality 0's grid
// if their extents differ (trilinear for images, nearest for masks).
struct LoadedCase {
    std::string id;
    int64_t d = 0, h = 0, w = 0;
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::vector<std::vector<float>> images;  // per modality
    std::vector<std::vector<float>> masks;   // per modality, values in {0,1}
    std::vector<int64_t> fg_union;           // voxel offsets with any mask == 1

    static LoadedCase from_record(const CaseRecord& rec);
    int64_t modalities() const { return int64_t(images.size()); }
};

// (input stack, target stack) for one draw, each [C, cd, ch, cw].
struct CropSample {
    Tensor input;
    Tensor target;
    bool positive_centered = false;
};

// Balanced sampler: draws alternate between a random foreground-centered and
// a random background-centered crop; cases with empty masks fall back to
// background with one logged warning.
class CropSampler {
  public:
    CropSample sample(const LoadedCase& c, const std::array<int64_t, 3>& crop, Rng& rng);

    int64_t empty_mask_fallbacks() const { return empty_fallbacks_; }

  private:
    bool next_positive_ = true;
    int64_t empty_fallbacks_ = 0;
    bool warned_ = false;
};

// Extracts a crop window whose start may lie outside the volume; voxels
// outside are zero.
void extract_crop(const std::vector<float>& src, int64_t d, int64_t h, int64_t w,
                  const std::array<int64_t, 3>& start, const std::array<int64_t, 3>& crop, float* dst);

struct AugmentConfig {
    float flip_prob = 0.5f;       // per axis, independent
    float intensity_prob = 0.2f;  // scaling u in [0.9,1.1], shift v in [-0.1,0.1]
};

// Per-axis flips applied identically to image and mask; intensity jitter on
// the image channels only.
void augment(Tensor& input, Tensor& target, Rng& rng, const AugmentConfig& cfg);

// Flips a [C,D,H,W] stack in place along the given spatial axis (0=D,1=H,2=W).
void flip_axis(Tensor& stack, int axis);

}  // namespace hwau
