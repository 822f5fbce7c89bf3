#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hwau/tensor.hpp"

namespace hwau {

// Volume file errors, distinct so callers can tell malformed files apart.
struct BadMagicError : DataError {
    explicit BadMagicError(const std::string& m) : DataError(m) {}
};
struct TruncatedFileError : DataError {
    explicit TruncatedFileError(const std::string& m) : DataError(m) {}
};
struct BadSpacingError : DataError {
    explicit BadSpacingError(const std::string& m) : DataError(m) {}
};

// One single-modality 3D scan. Voxels are stored D-major (index =
// (d*H + h)*W + w) to match the tensor layout.
struct Volume {
    int64_t d = 0, h = 0, w = 0;
    std::array<float, 3> spacing{1.f, 1.f, 1.f};  // mm per axis
    std::string modality;
    std::vector<float> voxels;

    int64_t numel() const { return d * h * w; }
    float& at(int64_t dd, int64_t hh, int64_t ww) { return voxels[size_t((dd * h + hh) * w + ww)]; }
    float at(int64_t dd, int64_t hh, int64_t ww) const { return voxels[size_t((dd * h + hh) * w + ww)]; }

    void validate() const;
};

// File format "HWAV", little-endian:
//   magic "HWAV" | version u32 | extents 3xu32 (D,H,W) | spacing 3xf32
//   | label u16 length + UTF-8 bytes | voxels f32[D*H*W], D-major raster.
inline constexpr uint32_t kVolumeFormatVersion = 1;

size_t volume_header_bytes(const std::string& modality_label);

void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

// In-memory codecs backing the file functions; used by round-trip tests.
std::vector<uint8_t> encode_volume(const Volume& v);
Volume decode_volume(const std::vector<uint8_t>& bytes);

}  // namespace hwau
