#include "hwau/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "hwau/rng.hpp"

namespace hwau {

void PhantomSpec::validate() const {
    for (int64_t e : extents)
        if (e < 4) throw ConfigError("phantom extents must be >= 4");
    for (float s : spacing)
        if (!(s > 0.f)) throw ConfigError("phantom spacing must be positive");
    if (modalities < 1) throw ConfigError("phantom needs >= 1 modality");
    if (min_lesions < 0 || max_lesions < min_lesions) throw ConfigError("bad lesion count range");
    if (!(min_radius > 0) || max_radius < min_radius) throw ConfigError("bad lesion radius range");
    if (!(noise_sigma >= 0.f)) throw ConfigError("noise sigma must be >= 0");
    // lesions must fit inside the volume after every modality offset
    int64_t max_off = 0;
    for (int m = 0; m < modalities; ++m)
        for (int64_t o : offset_of(m)) max_off = std::max<int64_t>(max_off, std::llabs(o));
    const int64_t margin = int64_t(std::ceil(max_radius)) + max_off + 1;
    for (int64_t e : extents)
        if (2 * margin >= e)
            throw ConfigError("phantom extents too small for radius " + std::to_string(max_radius) +
                              " plus offsets");
}

std::array<int64_t, 3> PhantomSpec::offset_of(int m) const {
    if (m < int(rigid_offset.size())) return rigid_offset[size_t(m)];
    // default misalignment pattern: modality 0 is the reference
    static const std::array<int64_t, 3> defaults[4] = {{0, 0, 0}, {1, 1, 0}, {0, 2, 1}, {2, 0, 1}};
    return defaults[m % 4];
}

float PhantomSpec::background_of(int m) const {
    if (m < int(background_level.size())) return background_level[size_t(m)];
    return 0.2f + 0.1f * float(m);
}

float PhantomSpec::contrast_of(int m) const {
    if (m < int(lesion_contrast.size())) return lesion_contrast[size_t(m)];
    return 0.6f;
}

int64_t discrete_ellipsoid_volume(const std::array<int64_t, 3>& extents, const std::array<double, 3>& center,
                                  const std::array<double, 3>& radii) {
    int64_t count = 0;
    for (int64_t d = 0; d < extents[0]; ++d)
        for (int64_t h = 0; h < extents[1]; ++h)
            for (int64_t w = 0; w < extents[2]; ++w) {
                const double fd = (double(d) - center[0]) / radii[0];
                const double fh = (double(h) - center[1]) / radii[1];
                const double fw = (double(w) - center[2]) / radii[2];
                if (fd * fd + fh * fh + fw * fw <= 1.0) ++count;
            }
    return count;
}

CaseRecord generate_phantom(const PhantomSpec& spec, uint64_t seed, const std::string& case_id) {
    spec.validate();
    Rng rng(seed);
    const auto [D, H, W] = spec.extents;

    struct Lesion {
        std::array<double, 3> center;
        std::array<double, 3> radii;
    };
    int64_t max_off = 0;
    for (int m = 0; m < spec.modalities; ++m)
        for (int64_t o : spec.offset_of(m)) max_off = std::max<int64_t>(max_off, std::llabs(o));

    const int n_lesions = int(rng.range(spec.min_lesions, spec.max_lesions));
    std::vector<Lesion> lesions;
    for (int i = 0; i < n_lesions; ++i) {
        Lesion l;
        for (int a = 0; a < 3; ++a) l.radii[size_t(a)] = rng.uniform(spec.min_radius, spec.max_radius);
        for (int a = 0; a < 3; ++a) {
            const double margin = std::ceil(l.radii[size_t(a)]) + double(max_off) + 1;
            l.center[size_t(a)] = rng.uniform(margin, double(spec.extents[size_t(a)]) - 1.0 - margin);
        }
        lesions.push_back(l);
    }

    // smooth per-case background gradient, shared across modalities
    std::array<double, 3> grad_dir;
    for (auto& g : grad_dir) g = rng.uniform(-0.05, 0.05);

    CaseRecord rec;
    rec.id = case_id;
    for (int m = 0; m < spec.modalities; ++m) {
        const auto off = spec.offset_of(m);
        Volume img;
        img.d = D;
        img.h = H;
        img.w = W;
        img.spacing = spec.spacing;
        img.modality = "mod" + std::to_string(m);
        img.voxels.assign(size_t(D * H * W), 0.f);
        Volume mask = img;
        mask.modality = img.modality + "_mask";

        const float base = spec.background_of(m);
        const float contrast = spec.contrast_of(m);
        for (int64_t d = 0; d < D; ++d)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    double v = double(base) + grad_dir[0] * (double(d) / double(D) - 0.5) +
                               grad_dir[1] * (double(h) / double(H) - 0.5) +
                               grad_dir[2] * (double(w) / double(W) - 0.5);
                    // the offset is subtracted from the integer voxel index so a
                    // shifted modality's lesion set is an exact translation
                    bool inside = false;
                    for (const auto& l : lesions) {
                        const double fd = (double(d - off[0]) - l.center[0]) / l.radii[0];
                        const double fh = (double(h - off[1]) - l.center[1]) / l.radii[1];
                        const double fw = (double(w - off[2]) - l.center[2]) / l.radii[2];
                        if (fd * fd + fh * fh + fw * fw <= 1.0) {
                            inside = true;
                            break;
                        }
                    }
                    if (inside) v += double(contrast);
                    img.at(d, h, w) = float(v);
                    mask.at(d, h, w) = inside ? 1.f : 0.f;
                }
        if (spec.noise_sigma > 0.f)
            for (auto& v : img.voxels) v += float(double(spec.noise_sigma) * rng.normal());
        rec.images.push_back(std::move(img));
        rec.masks.push_back(std::move(mask));
    }
    rec.validate();
    return rec;
}

}  // namespace hwau
