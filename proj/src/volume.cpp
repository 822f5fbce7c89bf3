#include "hwau/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hwau {

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(uint8_t(v & 0xff));
    b.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

struct Cursor {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > b.size())
            throw TruncatedFileError(std::string("volume file truncated while reading ") + what);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = uint16_t(b[pos]) | uint16_t(b[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

}  // namespace

void Volume::validate() const {
    if (d < 1 || h < 1 || w < 1) throw DataError("volume extents must be positive");
    for (float s : spacing)
        if (!(s > 0.f)) throw BadSpacingError("volume spacing must be positive, got " + std::to_string(s));
    if (int64_t(voxels.size()) != numel())
        throw DataError("volume voxel count " + std::to_string(voxels.size()) + " does not match extents");
}

size_t volume_header_bytes(const std::string& modality_label) {
    return 4 + 4 + 3 * 4 + 3 * 4 + 2 + modality_label.size();
}

std::vector<uint8_t> encode_volume(const Volume& v) {
    v.validate();
    std::vector<uint8_t> b;
    b.reserve(volume_header_bytes(v.modality) + size_t(v.numel()) * 4);
    b.insert(b.end(), {'H', 'W', 'A', 'V'});
    put_u32(b, kVolumeFormatVersion);
    put_u32(b, uint32_t(v.d));
    put_u32(b, uint32_t(v.h));
    put_u32(b, uint32_t(v.w));
    for (float s : v.spacing) put_f32(b, s);
    if (v.modality.size() > 0xffff) throw DataError("modality label too long");
    put_u16(b, uint16_t(v.modality.size()));
    b.insert(b.end(), v.modality.begin(), v.modality.end());
    for (float x : v.voxels) put_f32(b, x);
    return b;
}

Volume decode_volume(const std::vector<uint8_t>& bytes) {
    Cursor c{bytes};
    c.need(4, "magic");
    if (std::memcmp(bytes.data(), "HWAV", 4) != 0)
        throw BadMagicError("not a HWAV volume file (bad magic)");
    c.pos = 4;
    const uint32_t version = c.u32("version");
    if (version != kVolumeFormatVersion)
        throw DataError("unsupported volume format version " + std::to_string(version));
    Volume v;
    v.d = c.u32("extent D");
    v.h = c.u32("extent H");
    v.w = c.u32("extent W");
    for (auto& s : v.spacing) s = c.f32("spacing");
    for (float s : v.spacing)
        if (!(s > 0.f)) throw BadSpacingError("volume spacing must be positive, got " + std::to_string(s));
    const uint16_t len = c.u16("label length");
    c.need(len, "label");
    v.modality.assign(bytes.begin() + long(c.pos), bytes.begin() + long(c.pos + len));
    c.pos += len;
    const int64_t n = v.d * v.h * v.w;
    v.voxels.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) v.voxels[size_t(i)] = c.f32("voxels");
    if (c.pos != bytes.size()) throw DataError("trailing bytes after volume payload");
    v.validate();
    return v;
}

void write_volume(const std::string& path, const Volume& v) {
    const std::vector<uint8_t> b = encode_volume(v);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    if (!f) throw DataError("write failed: " + path);
}

Volume read_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("cannot open: " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> b;
    b.resize(size_t(size));
    f.read(reinterpret_cast<char*>(b.data()), size);
    if (!f) throw DataError("read failed: " + path);
    return decode_volume(b);
}

}  // namespace hwau
