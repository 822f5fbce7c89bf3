#include "hwau/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hwau/checkpoint.hpp"

namespace hwau {

namespace fs = std::filesystem;

namespace {

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string hash8(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return std::string(buf).substr(0, 8);
}

std::vector<LoadedCase> load_split(const Manifest& m, const std::string& split) {
    std::vector<LoadedCase> out;
    for (const auto& e : m.entries)
        if (e.split == split) out.push_back(LoadedCase::from_record(load_case(e)));
    return out;
}

ModelParamsT<float> load_model(const RunConfig& cfg, const std::string& checkpoint) {
    ModelParamsT<float> params = ModelParamsT<float>::init(cfg.model, cfg.train.seed);
    restore_params(params, load_checkpoint(checkpoint));
    return params;
}

std::string flags_label(bool hwa, bool sgc, bool tfm) {
    std::string s = "hwa=";
    s += hwa ? "on" : "off";
    s += ",sgc=";
    s += sgc ? "on" : "off";
    s += ",tfm=";
    s += tfm ? "on" : "off";
    return s;
}

}  // namespace

std::string make_run_dir(const RunConfig& cfg) {
    const std::string dir = cfg.out_dir + "/" + timestamp_utc() + "-" + hash8(cfg.hash());
    fs::create_directories(dir);
    std::ofstream f(dir + "/config.json", std::ios::trunc);
    if (!f) throw DataError("cannot archive config under " + dir);
    f << cfg.to_json_string();
    return dir;
}

std::string run_train(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.manifest_path.empty()) throw ConfigError("train: data.manifest is required");
    const Manifest manifest = load_manifest(cfg.manifest_path);
    const std::string run_dir = make_run_dir(cfg);
    ModelParamsT<float> params = ModelParamsT<float>::init(cfg.model, cfg.train.seed);
    const TrainResult res = train(params, manifest, cfg.train, run_dir);
    std::cout << "run_dir=" << run_dir << "\n";
    std::cout << "best_epoch=" << res.best_epoch << " best_val_dice=" << res.best_val_dice << "\n";
    return run_dir;
}

MetricReport run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split,
                      const std::string& report_path, const std::string& row_label) {
    cfg.validate();
    if (cfg.manifest_path.empty()) throw ConfigError("eval: data.manifest is required");
    const Manifest manifest = load_manifest(cfg.manifest_path);
    auto cases = load_split(manifest, split);
    if (cases.empty()) throw DataError("eval: no cases in split '" + split + "'");
    ModelParamsT<float> params = load_model(cfg, checkpoint);
    const MetricReport rep = evaluate_cases(params, cases, cfg.roi, cfg.overlap);

    std::vector<std::string> channels;
    for (int64_t c = 0; c < cfg.model.out_channels; ++c) channels.push_back("ch" + std::to_string(c));
    const std::vector<std::pair<std::string, MetricReport>> rows{{row_label, rep}};
    std::cout << format_report_table(rows, channels);
    if (!report_path.empty()) write_report_tsv(report_path, rows, channels);
    return rep;
}

void run_infer(const RunConfig& cfg, const std::string& checkpoint,
               const std::vector<std::string>& volume_paths, const std::string& out_dir) {
    cfg.validate();
    if (int64_t(volume_paths.size()) != cfg.model.in_channels)
        throw ConfigError("infer: expected " + std::to_string(cfg.model.in_channels) +
                          " volume paths (one per modality), got " + std::to_string(volume_paths.size()));
    std::vector<Volume> vols;
    for (const auto& p : volume_paths) vols.push_back(read_volume(p));
    for (const auto& v : vols)
        if (v.d != vols[0].d || v.h != vols[0].h || v.w != vols[0].w)
            throw DataError("infer: modality extents differ; resample inputs first");

    ModelParamsT<float> params = load_model(cfg, checkpoint);
    Tensor x = Tensor::zeros({1, int64_t(vols.size()), vols[0].d, vols[0].h, vols[0].w});
    for (size_t m = 0; m < vols.size(); ++m)
        std::copy(vols[m].voxels.begin(), vols[m].voxels.end(),
                  x.data() + int64_t(m) * vols[0].numel());
    Tensor prob = sliding_window_infer(x, params, cfg.roi, cfg.overlap);

    fs::create_directories(out_dir);
    for (int64_t c = 0; c < cfg.model.out_channels; ++c) {
        Volume out;
        out.d = vols[0].d;
        out.h = vols[0].h;
        out.w = vols[0].w;
        out.spacing = vols[0].spacing;
        out.modality = "prob_ch" + std::to_string(c);
        out.voxels.assign(prob.data() + c * out.numel(), prob.data() + (c + 1) * out.numel());
        write_volume(out_dir + "/prob_ch" + std::to_string(c) + ".hwav", out);
    }
}

std::string run_phantom(const PhantomOptions& opt) {
    if (opt.count < 1) throw ConfigError("phantom: count must be >= 1");
    opt.spec.validate();
    fs::create_directories(opt.out_dir);
    Manifest manifest;
    for (int i = 0; i < opt.count; ++i) {
        const std::string case_id = "case" + std::to_string(i);
        const CaseRecord rec = generate_phantom(opt.spec, opt.seed + uint64_t(i), case_id);
        ManifestEntry e;
        e.case_id = case_id;
        for (size_t m = 0; m < rec.images.size(); ++m) {
            const std::string img = opt.out_dir + "/" + case_id + "_mod" + std::to_string(m) + ".hwav";
            const std::string msk = opt.out_dir + "/" + case_id + "_mask" + std::to_string(m) + ".hwav";
            write_volume(img, rec.images[m]);
            write_volume(msk, rec.masks[m]);
            e.image_paths.push_back(img);
            e.mask_paths.push_back(msk);
        }
        manifest.entries.push_back(std::move(e));
    }
    manifest = split_dataset(manifest, opt.seed);
    const std::string manifest_path = opt.out_dir + "/manifest.txt";
    save_manifest(manifest_path, manifest);
    std::cout << "manifest=" << manifest_path << "\n";
    return manifest_path;
}

std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& report_path) {
    cfg.validate();
    if (cfg.manifest_path.empty()) throw ConfigError("ablate: data.manifest is required");
    const Manifest manifest = load_manifest(cfg.manifest_path);
    auto train_cases = load_split(manifest, "train");
    auto val_cases = load_split(manifest, "val");
    auto test_cases = load_split(manifest, "test");
    if (train_cases.empty()) throw DataError("ablate: no training cases in manifest");
    const auto& eval_cases = !test_cases.empty() ? test_cases : (!val_cases.empty() ? val_cases : train_cases);

    const bool flag_rows[4][3] = {
        {false, false, false}, {false, false, true}, {false, true, true}, {true, true, true}};
    std::vector<AblationRow> rows;
    std::vector<std::pair<std::string, MetricReport>> table;
    for (const auto& flags : flag_rows) {
        RunConfig row_cfg = cfg;
        row_cfg.model.hwa = flags[0];
        row_cfg.model.sgc = flags[1];
        row_cfg.model.tfm = flags[2];
        ModelParamsT<float> params = ModelParamsT<float>::init(row_cfg.model, cfg.train.seed);
        train_on_cases(params, train_cases, val_cases, row_cfg.train, "");
        MetricReport rep = evaluate_cases(params, eval_cases, cfg.roi, cfg.overlap);
        rows.push_back({flags[0], flags[1], flags[2], rep});
        table.emplace_back(flags_label(flags[0], flags[1], flags[2]), std::move(rep));
    }
    std::vector<std::string> channels;
    for (int64_t c = 0; c < cfg.model.out_channels; ++c) channels.push_back("ch" + std::to_string(c));
    std::cout << format_report_table(table, channels);
    if (!report_path.empty()) write_report_tsv(report_path, table, channels);
    return rows;
}

}  // namespace hwau
