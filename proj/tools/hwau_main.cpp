#include <iostream>

#include <CLI11.hpp>

#include "hwau/commands.hpp"
#include "hwau/runtime.hpp"

namespace {

hwau::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                            int64_t seed_flag) {
    hwau::RunConfig cfg = hwau::RunConfig::load_file(path, overrides);
    if (seed_flag >= 0) cfg.train.seed = uint64_t(seed_flag);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HWA-UNETR 3D multimodal segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed_flag = -1;
    int threads = 0;
    app.add_option("--device-threads", threads, "worker threads for op-internal loops (0 = hardware)");

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
        if (need_config) opt->required();
        sub->add_option("--override", overrides, "dot-path override, e.g. train.lr=0.01")
            ->take_all();
        sub->add_option("--seed", seed_flag, "overrides train.seed");
    };

    auto* train_cmd = app.add_subcommand("train", "train from a manifest of volumes");
    add_common(train_cmd, true);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (Dice / HD95 table)");
    add_common(eval_cmd, true);
    std::string checkpoint, split = "test", report_path;
    eval_cmd->add_option("--checkpoint", checkpoint, "HWAU checkpoint file")->required();
    eval_cmd->add_option("--split", split, "manifest split to score (default test)");
    eval_cmd->add_option("--report", report_path, "TSV report output path");

    auto* infer_cmd = app.add_subcommand("infer", "write probability volumes for one case");
    add_common(infer_cmd, true);
    std::vector<std::string> volume_paths;
    std::string infer_out = "infer_out";
    infer_cmd->add_option("--checkpoint", checkpoint, "HWAU checkpoint file")->required();
    infer_cmd->add_option("--volumes", volume_paths, "one .hwav path per modality")->required();
    infer_cmd->add_option("--out", infer_out, "output directory");

    auto* phantom_cmd = app.add_subcommand("phantom", "generate synthetic cases + manifest");
    hwau::PhantomOptions popt;
    std::vector<int64_t> extents{32, 32, 16};
    int64_t modalities = 2;
    phantom_cmd->add_option("--out", popt.out_dir, "output directory")->required();
    phantom_cmd->add_option("--count", popt.count, "number of cases");
    phantom_cmd->add_option("--seed", popt.seed, "generation seed");
    phantom_cmd->add_option("--extents", extents, "D H W voxel extents")->expected(3);
    phantom_cmd->add_option("--modalities", modalities, "modality count");
    phantom_cmd->add_option("--noise", popt.spec.noise_sigma, "gaussian noise sigma");

    auto* ablate_cmd = app.add_subcommand("ablate", "train the four block-setting rows and report");
    add_common(ablate_cmd, true);
    std::string ablate_report = "ablation.tsv";
    ablate_cmd->add_option("--report", ablate_report, "TSV report output path");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) hwau::runtime::set_threads(threads);

    try {
        if (*train_cmd) {
            hwau::run_train(load_config(config_path, overrides, seed_flag));
        } else if (*eval_cmd) {
            hwau::run_eval(load_config(config_path, overrides, seed_flag), checkpoint, split, report_path,
                           "hwa-unetr");
        } else if (*infer_cmd) {
            hwau::run_infer(load_config(config_path, overrides, seed_flag), checkpoint, volume_paths,
                            infer_out);
        } else if (*phantom_cmd) {
            popt.spec.extents = {extents[0], extents[1], extents[2]};
            popt.spec.modalities = int(modalities);
            hwau::run_phantom(popt);
        } else if (*ablate_cmd) {
            hwau::run_ablate(load_config(config_path, overrides, seed_flag), ablate_report);
        }
    } catch (const hwau::ConfigError& e) {
        std::cerr << "error: kind=config reason=\"" << e.what() << "\"\n";
        return 2;
    } catch (const hwau::ShapeError& e) {
        std::cerr << "error: kind=config reason=\"" << e.what() << "\"\n";
        return 2;
    } catch (const hwau::DataError& e) {
        std::cerr << "error: kind=data reason=\"" << e.what() << "\"\n";
        return 3;
    } catch (const hwau::NumericalError& e) {
        std::cerr << "error: kind=numerical reason=\"" << e.what() << "\"\n";
        return 4;
    }
    return 0;
}
