#pragma once

#include "hwau/metrics.hpp"
#include "hwau/network.hpp"
#include "hwau/sampling.hpp"

namespace hwau {

struct TrainConfig {
    float lr0 = 1e-3f;
    float weight_decay = 0.4f;
    int epochs = 300;
    int batch_size = 2;
    std::array<int64_t, 3> crop{128, 128, 64};
    double warmup_fraction = 0.05;  // of total steps
    float flip_prob = 0.5f;
    float intensity_prob = 0.2f;
    float lambda_dice = 1.f;
    float lambda_focal = 1.f;
    float focal_gamma = 2.f;
    float focal_alpha = 0.25f;
    float dice_smooth = 1e-5f;
    float grad_clip = 0.f;  // 0 disables clipping
    uint64_t seed = 1234;
    int steps_per_epoch = 0;  // 0: ceil(train cases / batch)

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    std::vector<double> val_dice;  // per channel
};

struct TrainResult {
    std::vector<EpochLog> history;
    double best_val_dice = -1.0;
    int best_epoch = -1;
};

// Threshold at 0.5 and score one case with sliding-window inference.
CaseMetrics evaluate_case(ModelParamsT<float>& params, const LoadedCase& c,
                          const std::array<int64_t, 3>& roi, double overlap);
MetricReport evaluate_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& cases,
                            const std::array<int64_t, 3>& roi, double overlap);

// Mean Dice over foreground channels of the given cases (no file output);
// the overfit acceptance gate reads this on the training set.
double mean_dice_on_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& cases,
                          const std::array<int64_t, 3>& roi);

// Full recipe on pre-loaded cases. Writes metrics.log plus best.ckpt /
// last.ckpt under run_dir when run_dir is non-empty.
TrainResult train_on_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& train_cases,
                           const std::vector<LoadedCase>& val_cases, const TrainConfig& cfg,
                           const std::string& run_dir);

// Loads train/val splits from the manifest, then train_on_cases.
TrainResult train(ModelParamsT<float>& params, const Manifest& manifest, const TrainConfig& cfg,
                  const std::string& run_dir);

Tensor stack_case_input(const LoadedCase& c);  // [1,C,D,H,W]

}  // namespace hwau
