#include "hwau/checkpoint.hpp"

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

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

struct Cursor {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > b.size()) throw DataError(std::string("checkpoint truncated while reading ") + what);
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
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + size_t(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return b[pos++];
    }
};

}  // namespace

std::vector<uint8_t> encode_checkpoint(const std::vector<NamedTensor>& entries) {
    std::vector<uint8_t> b;
    b.insert(b.end(), {'H', 'W', 'A', 'U'});
    put_u32(b, kCheckpointVersion);
    put_u32(b, uint32_t(entries.size()));
    uint64_t offset = 0;
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw DataError("parameter name too long");
        put_u16(b, uint16_t(e.name.size()));
        b.insert(b.end(), e.name.begin(), e.name.end());
        b.push_back(0);  // dtype f32
        const auto& shape = e.tensor.shape();
        if (shape.size() > 0xff) throw DataError("parameter rank too large");
        b.push_back(uint8_t(shape.size()));
        for (int64_t d : shape) put_u32(b, uint32_t(d));
        put_u64(b, offset);
        offset += uint64_t(e.tensor.numel()) * 4;
    }
    for (const auto& e : entries)
        for (int64_t i = 0; i < e.tensor.numel(); ++i) put_u32(b, std::bit_cast<uint32_t>(e.tensor.at(i)));
    return b;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<uint8_t>& bytes) {
    Cursor c{bytes};
    c.need(4, "magic");
    if (std::memcmp(bytes.data(), "HWAU", 4) != 0) throw DataError("not a HWAU checkpoint (bad magic)");
    c.pos = 4;
    const uint32_t version = c.u32("version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = c.u32("entry count");

    struct Meta {
        std::string name;
        Shape shape;
        uint64_t offset;
    };
    std::vector<Meta> metas;
    for (uint32_t i = 0; i < count; ++i) {
        Meta m;
        const uint16_t len = c.u16("name length");
        c.need(len, "name");
        m.name.assign(bytes.begin() + long(c.pos), bytes.begin() + long(c.pos + len));
        c.pos += len;
        const uint8_t dtype = c.u8("dtype");
        if (dtype != 0) throw DataError("unsupported checkpoint dtype " + std::to_string(dtype));
        const uint8_t ndim = c.u8("rank");
        for (uint8_t a = 0; a < ndim; ++a) m.shape.push_back(c.u32("dim"));
        m.offset = c.u64("offset");
        metas.push_back(std::move(m));
    }
    const size_t payload_start = c.pos;
    std::vector<NamedTensor> out;
    for (const auto& m : metas) {
        Tensor t = Tensor::zeros(m.shape);
        Cursor pc{bytes, payload_start + size_t(m.offset)};
        for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = std::bit_cast<float>(pc.u32("payload"));
        out.push_back({m.name, std::move(t)});
    }
    // verify the payload region is exactly consumed by the last tensor
    if (!metas.empty()) {
        uint64_t total = 0;
        for (const auto& m : metas) total += uint64_t(shape_numel(m.shape)) * 4;
        if (payload_start + size_t(total) != bytes.size())
            throw DataError("checkpoint payload size mismatch");
    }
    return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
    const auto b = encode_checkpoint(entries);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    if (!f) throw DataError("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("cannot open: " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> b;
    b.resize(size_t(size));
    f.read(reinterpret_cast<char*>(b.data()), size);
    if (!f) throw DataError("read failed: " + path);
    return decode_checkpoint(b);
}

}  // namespace hwau
