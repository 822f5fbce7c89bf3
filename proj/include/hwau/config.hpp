#pragma once

#include <string>
#include <vector>

#include "hwau/network.hpp"
#include "hwau/trainer.hpp"

namespace hwau {

// Merged model + training + path options. Parsed strictly from JSON: unknown
// keys are rejected, defaults are materialized, and the archived copy of every
// run records the fully resolved tree.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string manifest_path;
    std::string out_dir = "runs";
    std::array<int64_t, 3> roi{32, 32, 16};
    double overlap = 0.5;

    std::string to_json_string() const;        // canonical, defaults included
    static RunConfig defaults();
    static RunConfig from_json_string(const std::string& text);
    static RunConfig load_file(const std::string& path,
                               const std::vector<std::string>& dot_overrides = {});

    // applies "section.key=value" (value parsed as JSON when possible)
    void apply_override(const std::string& dot_key_equals_value);

    uint64_t hash() const;  // FNV-1a of the canonical serialization
    void validate() const;
};

}  // namespace hwau
