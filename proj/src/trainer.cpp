#include "hwau/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "hwau/checkpoint.hpp"
#include "hwau/losses.hpp"
#include "hwau/optim.hpp"

namespace hwau {

void TrainConfig::validate() const {
    if (!(lr0 > 0.f)) throw ConfigError("train: lr0 must be positive");
    if (weight_decay < 0.f) throw ConfigError("train: weight decay must be >= 0");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    for (int64_t e : crop)
        if (e < ModelConfig::kSpatialMultiple || e % ModelConfig::kSpatialMultiple != 0)
            throw ConfigError("train: crop extents must be positive multiples of 16");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
        throw ConfigError("train: warmup fraction must be in [0,1]");
    for (float p : {flip_prob, intensity_prob})
        if (!(p >= 0.f && p <= 1.f)) throw ConfigError("train: probabilities must be in [0,1]");
    if (steps_per_epoch < 0) throw ConfigError("train: steps_per_epoch must be >= 0");
}

Tensor stack_case_input(const LoadedCase& c) {
    Tensor x = Tensor::zeros({1, c.modalities(), c.d, c.h, c.w});
    for (int64_t m = 0; m < c.modalities(); ++m)
        std::memcpy(x.data() + m * c.d * c.h * c.w, c.images[size_t(m)].data(),
                    size_t(c.d * c.h * c.w) * sizeof(float));
    return x;
}

CaseMetrics evaluate_case(ModelParamsT<float>& params, const LoadedCase& c,
                          const std::array<int64_t, 3>& roi, double overlap) {
    if (params.cfg.in_channels != c.modalities())
        throw DataError("evaluate: case " + c.id + " has " + std::to_string(c.modalities()) +
                        " modalities, model expects " + std::to_string(params.cfg.in_channels));
    if (params.cfg.out_channels != c.modalities())
        throw DataError("evaluate: model emits " + std::to_string(params.cfg.out_channels) +
                        " channels, case has " + std::to_string(c.modalities()) + " masks");
    Tensor prob = sliding_window_infer(stack_case_input(c), params, roi, overlap);
    CaseMetrics cm;
    cm.case_id = c.id;
    const int64_t vox = c.d * c.h * c.w;
    for (int64_t ch = 0; ch < params.cfg.out_channels; ++ch) {
        std::vector<float> p(prob.data() + ch * vox, prob.data() + (ch + 1) * vox);
        const BinaryMask pm = threshold_mask(p, c.d, c.h, c.w);
        BinaryMask gm = BinaryMask::zeros(c.d, c.h, c.w);
        for (int64_t i = 0; i < vox; ++i) gm.v[size_t(i)] = c.masks[size_t(ch)][size_t(i)] != 0.f;
        cm.dice.push_back(dice_percent(pm, gm));
        if (pm.count() == 0 && gm.count() == 0) cm.dice_trivial = true;
        cm.hd95.push_back(hd95_mm(pm, gm, c.spacing));
    }
    return cm;
}

MetricReport evaluate_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& cases,
                            const std::array<int64_t, 3>& roi, double overlap) {
    std::vector<CaseMetrics> all;
    for (const auto& c : cases) all.push_back(evaluate_case(params, c, roi, overlap));
    return MetricReport::aggregate(std::move(all));
}

double mean_dice_on_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& cases,
                          const std::array<int64_t, 3>& roi) {
    const MetricReport rep = evaluate_cases(params, cases, roi, 0.5);
    return rep.mean_dice;
}

namespace {

std::vector<double> validation_dice(ModelParamsT<float>& params, const std::vector<LoadedCase>& cases,
                                    const std::array<int64_t, 3>& roi) {
    std::vector<double> dice(size_t(params.cfg.out_channels), 0.0);
    if (cases.empty()) return dice;
    const MetricReport rep = evaluate_cases(params, cases, roi, 0.5);
    return rep.mean_dice_per_channel;
}

void append_log(std::ofstream& f, const EpochLog& e) {
    if (!f.is_open()) return;
    f << e.epoch << "\t";
    f.setf(std::ios::scientific);
    f.precision(17);
    f << e.lr << "\t" << e.train_loss;
    for (double d : e.val_dice) f << "\t" << d;
    f << "\n";
    f.flush();
}

}  // namespace

TrainResult train_on_cases(ModelParamsT<float>& params, const std::vector<LoadedCase>& train_cases,
                           const std::vector<LoadedCase>& val_cases, const TrainConfig& cfg,
                           const std::string& run_dir) {
    cfg.validate();
    if (train_cases.empty()) throw DataError("train: no training cases");
    for (const auto& c : train_cases)
        if (c.modalities() != params.cfg.in_channels)
            throw DataError("train: case " + c.id + " modality count does not match the model");

    const int steps_per_epoch =
        cfg.steps_per_epoch > 0
            ? cfg.steps_per_epoch
            : int((int64_t(train_cases.size()) + cfg.batch_size - 1) / cfg.batch_size);
    const int64_t total_steps = int64_t(cfg.epochs) * steps_per_epoch;
    const int64_t warmup_steps = int64_t(std::llround(cfg.warmup_fraction * double(total_steps)));

    Rng rng(cfg.seed);
    CropSampler sampler;
    AdamW opt(params);
    AugmentConfig aug{cfg.flip_prob, cfg.intensity_prob};
    const int64_t crop_vox = cfg.crop[0] * cfg.crop[1] * cfg.crop[2];
    const int64_t cin = params.cfg.in_channels;

    std::ofstream log;
    if (!run_dir.empty()) {
        log.open(run_dir + "/metrics.log", std::ios::trunc);
        if (!log) throw DataError("cannot open metric log in " + run_dir);
        log << "# epoch\tlr\ttrain_loss\tval_dice_per_channel\n";
    }

    TrainResult result;
    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        double lr_last = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            Tensor batch_x = Tensor::zeros({cfg.batch_size, cin, cfg.crop[0], cfg.crop[1], cfg.crop[2]});
            Tensor batch_y = Tensor::zeros({cfg.batch_size, cin, cfg.crop[0], cfg.crop[1], cfg.crop[2]});
            for (int b = 0; b < cfg.batch_size; ++b) {
                const auto& c = train_cases[size_t(rng.below(uint64_t(train_cases.size())))];
                CropSample s = sampler.sample(c, cfg.crop, rng);
                augment(s.input, s.target, rng, aug);
                std::memcpy(batch_x.data() + int64_t(b) * cin * crop_vox, s.input.data(),
                            size_t(cin * crop_vox) * sizeof(float));
                std::memcpy(batch_y.data() + int64_t(b) * cin * crop_vox, s.target.data(),
                            size_t(cin * crop_vox) * sizeof(float));
            }

            Tape tape;
            float loss_value;
            {
                TapeScope scope(tape);
                Tensor prob = forward(batch_x, params);
                Tensor loss = composite_loss(prob, batch_y, cfg.lambda_dice, cfg.lambda_focal,
                                             cfg.dice_smooth, cfg.focal_gamma, cfg.focal_alpha);
                loss_value = scalar_value(loss);
                tape.backward(loss);
            }
            if (!std::isfinite(loss_value))
                throw NumericalError("train: non-finite loss at step " + std::to_string(global_step));
            if (cfg.grad_clip > 0.f) clip_grad_norm(params, cfg.grad_clip);
            const double lr = lr_at(global_step, total_steps, warmup_steps, double(cfg.lr0));
            opt.step(params, float(lr), cfg.weight_decay);
            params.zero_grads();
            loss_sum += double(loss_value);
            lr_last = lr;
            ++global_step;
        }

        EpochLog e;
        e.epoch = epoch;
        e.lr = lr_last;
        e.train_loss = loss_sum / double(steps_per_epoch);
        e.val_dice = validation_dice(params, val_cases.empty() ? train_cases : val_cases, cfg.crop);
        append_log(log, e);
        result.history.push_back(e);

        double mean_val = 0;
        for (double d : e.val_dice) mean_val += d;
        mean_val /= double(e.val_dice.empty() ? 1 : e.val_dice.size());
        if (mean_val > result.best_val_dice) {
            result.best_val_dice = mean_val;
            result.best_epoch = epoch;
            if (!run_dir.empty()) save_checkpoint(run_dir + "/best.ckpt", snapshot_params(params));
        }
    }
    if (!run_dir.empty()) save_checkpoint(run_dir + "/last.ckpt", snapshot_params(params));
    return result;
}

TrainResult train(ModelParamsT<float>& params, const Manifest& manifest, const TrainConfig& cfg,
                  const std::string& run_dir) {
    std::vector<LoadedCase> train_cases, val_cases;
    for (const auto& e : manifest.entries) {
        if (e.split == "train")
            train_cases.push_back(LoadedCase::from_record(load_case(e)));
        else if (e.split == "val")
            val_cases.push_back(LoadedCase::from_record(load_case(e)));
    }
    return train_on_cases(params, train_cases, val_cases, cfg, run_dir);
}

}  // namespace hwau
