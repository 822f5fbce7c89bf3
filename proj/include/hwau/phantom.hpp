#pragma once

#include "hwau/dataset.hpp"

namespace hwau {

// Synthetic multi-modal case: ellipsoidal lesions on a smooth background,
// rendered per modality with its own contrast and an integer rigid offset
// emulating cross-modality misalignment. Masks mark lesion voxels exactly.
struct PhantomSpec {
    std::array<int64_t, 3> extents{32, 32, 16};  // D,H,W
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    int modalities = 2;
    int min_lesions = 1;
    int max_lesions = 3;
    double min_radius = 3.0;  // voxels
    double max_radius = 6.0;
    std::vector<float> background_level;            // per modality, default 0.2+0.1*m
    std::vector<float> lesion_contrast;             // per modality, default 0.6
    std::vector<std::array<int64_t, 3>> rigid_offset;  // per modality, default 0 and (1,1,0),(2,0,0)...
    float noise_sigma = 0.02f;

    void validate() const;
    std::array<int64_t, 3> offset_of(int m) const;
    float background_of(int m) const;
    float contrast_of(int m) const;
};

CaseRecord generate_phantom(const PhantomSpec& spec, uint64_t seed, const std::string& case_id);

// Number of voxels (vd,vh,vw) with sum(((v-c)/r)^2) <= 1; the mask volume of
// one lesion.
int64_t discrete_ellipsoid_volume(const std::array<int64_t, 3>& extents, const std::array<double, 3>& center,
                                  const std::array<double, 3>& radii);

}  // namespace hwau
