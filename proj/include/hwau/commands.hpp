#pragma once

#include "hwau/config.hpp"
#include "hwau/phantom.hpp"

namespace hwau {

// Command implementations shared by the CLI binary and the acceptance suite.
// Each throws Config/Data/Numerical errors; the CLI maps them to exit codes.

struct PhantomOptions {
    std::string out_dir;
    int count = 10;
    uint64_t seed = 7;
    PhantomSpec spec;
};

// Creates the timestamp+hash run directory and archives the resolved config.
std::string make_run_dir(const RunConfig& cfg);

// Returns the run directory it wrote into.
std::string run_train(const RunConfig& cfg);

MetricReport run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split,
                      const std::string& report_path, const std::string& row_label);

void run_infer(const RunConfig& cfg, const std::string& checkpoint,
               const std::vector<std::string>& volume_paths, const std::string& out_dir);

// Writes <count> phantom cases plus a split manifest; returns the manifest path.
std::string run_phantom(const PhantomOptions& opt);

struct AblationRow {
    bool hwa, sgc, tfm;
    MetricReport report;
};

// Trains the four Table-style block settings under one seed and writes a
// combined report. Rows: none, TFM, SGC+TFM, HWA+SGC+TFM.
std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& report_path);

}  // namespace hwau
