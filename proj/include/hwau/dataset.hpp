#pragma once

#include <string>
#include <vector>

#include "hwau/volume.hpp"

namespace hwau {

// One patient: per-modality scans and per-modality binary lesion masks.
struct CaseRecord {
    std::string id;
    std::vector<Volume> images;
    std::vector<Volume> masks;
    std::string split;

    void validate() const;
};

struct ManifestEntry {
    std::string case_id;
    std::string split;  // "train" | "val" | "test" | "" before assignment
    std::vector<std::string> image_paths;
    std::vector<std::string> mask_paths;
};

struct Manifest {
    uint64_t seed = 0;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> of_split(const std::string& split) const;
};

// Deterministic shuffle by seed, then 70/10/20 assignment (each proportion
// within one case of exact). Entry order is preserved; only splits change.
Manifest split_dataset(const Manifest& input, uint64_t seed);

// Text format: one header line "# hwau-manifest v1 seed=<seed>", then one
// tab-separated line per case: id, split, ';'-joined image paths, ';'-joined
// mask paths.
void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

CaseRecord load_case(const ManifestEntry& entry);

}  // namespace hwau
