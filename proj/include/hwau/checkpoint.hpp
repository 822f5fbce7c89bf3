#pragma once

#include <string>
#include <vector>

#include "hwau/tensor.hpp"

namespace hwau {

// Checkpoint file "HWAU", little-endian:
//   magic "HWAU" | version u32 | entry count u32
//   | per entry: name (u16 len + bytes), dtype u8 (0 = f32), ndim u8,
//     dims u32 each, payload offset u64 (relative to payload start)
//   | raw payloads.
// Byte-exact round-trip: save(load(file)) reproduces the file.
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::vector<uint8_t> encode_checkpoint(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Collects/assigns a parameter tree's tensors via its visit().
template <class Params>
std::vector<NamedTensor> snapshot_params(Params& params) {
    std::vector<NamedTensor> out;
    params.visit([&](const std::string& name, Tensor& t) { out.push_back({name, t.clone()}); });
    return out;
}

template <class Params>
void restore_params(Params& params, const std::vector<NamedTensor>& entries) {
    size_t idx = 0;
    params.visit([&](const std::string& name, Tensor& t) {
        if (idx >= entries.size()) throw DataError("checkpoint has too few tensors");
        const NamedTensor& e = entries[idx++];
        if (e.name != name)
            throw DataError("checkpoint tensor '" + e.name + "' does not match expected '" + name + "'");
        if (e.tensor.shape() != t.shape())
            throw DataError("checkpoint tensor '" + name + "' shape " + shape_str(e.tensor.shape()) +
                            " does not match " + shape_str(t.shape()));
        std::copy(e.tensor.data(), e.tensor.data() + e.tensor.numel(), t.data());
    });
    if (idx != entries.size()) throw DataError("checkpoint has extra tensors");
}

}  // namespace hwau
