#include "hwau/config.hpp"

#include <fstream>

#include <json.hpp>

namespace hwau {

using nlohmann::json;

namespace {

json model_to_json(const ModelConfig& m) {
    return json{{"in_channels", m.in_channels},
                {"out_channels", m.out_channels},
                {"base_width", m.base_width},
                {"ssm_state_size", m.ssm_state_size},
                {"attention_budget", m.attention_budget},
                {"allow_pooled_attention", m.allow_pooled_attention},
                {"hwa", m.hwa},
                {"sgc", m.sgc},
                {"tfm", m.tfm}};
}

json train_to_json(const TrainConfig& t) {
    return json{{"lr", t.lr0},
                {"weight_decay", t.weight_decay},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"crop", {t.crop[0], t.crop[1], t.crop[2]}},
                {"warmup_fraction", t.warmup_fraction},
                {"flip_prob", t.flip_prob},
                {"intensity_prob", t.intensity_prob},
                {"lambda_dice", t.lambda_dice},
                {"lambda_focal", t.lambda_focal},
                {"focal_gamma", t.focal_gamma},
                {"focal_alpha", t.focal_alpha},
                {"dice_smooth", t.dice_smooth},
                {"grad_clip", t.grad_clip},
                {"seed", t.seed},
                {"steps_per_epoch", t.steps_per_epoch}};
}

json config_to_json(const RunConfig& c) {
    return json{{"model", model_to_json(c.model)},
                {"train", train_to_json(c.train)},
                {"data", {{"manifest", c.manifest_path}, {"out_dir", c.out_dir}}},
                {"infer", {{"roi", {c.roi[0], c.roi[1], c.roi[2]}}, {"overlap", c.overlap}}}};
}

// Overlays user values onto the defaults; every user key must exist in the
// defaults with a compatible type.
void strict_merge(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config: expected object at " + (path.empty() ? "root" : path));
    for (const auto& [key, value] : user.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("config: unknown key '" + where + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            strict_merge(slot, value, where);
        } else if (slot.is_array()) {
            if (!value.is_array() || value.size() != slot.size())
                throw ConfigError("config: '" + where + "' must be an array of " +
                                  std::to_string(slot.size()) + " numbers");
            slot = value;
        } else if (slot.is_boolean()) {
            if (!value.is_boolean()) throw ConfigError("config: '" + where + "' must be a boolean");
            slot = value;
        } else if (slot.is_string()) {
            if (!value.is_string()) throw ConfigError("config: '" + where + "' must be a string");
            slot = value;
        } else if (slot.is_number()) {
            if (!value.is_number()) throw ConfigError("config: '" + where + "' must be a number");
            slot = value;
        } else {
            slot = value;
        }
    }
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    json merged = config_to_json(c);
    strict_merge(merged, j, "");
    const json& m = merged["model"];
    c.model.in_channels = m["in_channels"].get<int64_t>();
    c.model.out_channels = m["out_channels"].get<int64_t>();
    c.model.base_width = m["base_width"].get<int64_t>();
    c.model.ssm_state_size = m["ssm_state_size"].get<int64_t>();
    c.model.attention_budget = m["attention_budget"].get<int64_t>();
    c.model.allow_pooled_attention = m["allow_pooled_attention"].get<bool>();
    c.model.hwa = m["hwa"].get<bool>();
    c.model.sgc = m["sgc"].get<bool>();
    c.model.tfm = m["tfm"].get<bool>();
    const json& t = merged["train"];
    c.train.lr0 = t["lr"].get<float>();
    c.train.weight_decay = t["weight_decay"].get<float>();
    c.train.epochs = t["epochs"].get<int>();
    c.train.batch_size = t["batch_size"].get<int>();
    for (int a = 0; a < 3; ++a) c.train.crop[size_t(a)] = t["crop"][size_t(a)].get<int64_t>();
    c.train.warmup_fraction = t["warmup_fraction"].get<double>();
    c.train.flip_prob = t["flip_prob"].get<float>();
    c.train.intensity_prob = t["intensity_prob"].get<float>();
    c.train.lambda_dice = t["lambda_dice"].get<float>();
    c.train.lambda_focal = t["lambda_focal"].get<float>();
    c.train.focal_gamma = t["focal_gamma"].get<float>();
    c.train.focal_alpha = t["focal_alpha"].get<float>();
    c.train.dice_smooth = t["dice_smooth"].get<float>();
    c.train.grad_clip = t["grad_clip"].get<float>();
    c.train.seed = t["seed"].get<uint64_t>();
    c.train.steps_per_epoch = t["steps_per_epoch"].get<int>();
    c.manifest_path = merged["data"]["manifest"].get<std::string>();
    c.out_dir = merged["data"]["out_dir"].get<std::string>();
    for (int a = 0; a < 3; ++a) c.roi[size_t(a)] = merged["infer"]["roi"][size_t(a)].get<int64_t>();
    c.overlap = merged["infer"]["overlap"].get<double>();
    return c;
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

std::string RunConfig::to_json_string() const { return config_to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

RunConfig RunConfig::load_file(const std::string& path, const std::vector<std::string>& dot_overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    RunConfig c = from_json_string(text);
    for (const auto& o : dot_overrides) c.apply_override(o);
    c.validate();
    return c;
}

void RunConfig::apply_override(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key.path=value, got '" + spec + "'");
    const std::string keypath = spec.substr(0, eq);
    const std::string value_text = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::parse_error&) {
        value = value_text;  // bare strings are allowed
    }
    // rebuild a nested object {a:{b:value}} and strict-merge it
    json patch = value;
    size_t end = keypath.size();
    std::vector<std::string> parts;
    size_t start = 0;
    while (start < end) {
        const size_t dot = keypath.find('.', start);
        if (dot == std::string::npos) {
            parts.push_back(keypath.substr(start));
            break;
        }
        parts.push_back(keypath.substr(start, dot - start));
        start = dot + 1;
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};

    json merged = config_to_json(*this);
    strict_merge(merged, patch, "");
    *this = config_from_json(merged);
}

uint64_t RunConfig::hash() const {
    const std::string s = to_json_string();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("infer: overlap must be in [0,1)");
    for (int64_t e : roi)
        if (e < ModelConfig::kSpatialMultiple || e % ModelConfig::kSpatialMultiple != 0)
            throw ConfigError("infer: roi extents must be positive multiples of 16");
}

}  // namespace hwau
