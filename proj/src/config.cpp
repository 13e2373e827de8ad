#include "pat/config.hpp"

#include <algorithm>
#include <fstream>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

using nlohmann::json;

std::string init_mode_name(PromptInitMode m) {
    switch (m) {
        case PromptInitMode::Text: return "text";
        case PromptInitMode::Random: return "random";
        case PromptInitMode::SupportAverage: return "support_avg";
    }
    return "text";
}

PromptInitMode init_mode_from_name(const std::string& s) {
    if (s == "text") return PromptInitMode::Text;
    if (s == "random") return PromptInitMode::Random;
    if (s == "support_avg") return PromptInitMode::SupportAverage;
    throw ConfigError("unknown prompt init mode '" + s + "' (text, random, support_avg)");
}

void apply_toggle(ModelConfig& m, const std::string& name) {
    if (name == "fg") {
        m.use_fg_prompts = false;
    } else if (name == "bg") {
        m.use_bg_prompts = false;
    } else if (name == "spt") {
        m.use_spt = false;
    } else if (name == "pmg") {
        m.use_pmg = false;
    } else if (name == "gauss") {
        m.suppression.enabled = false;
    } else if (name == "text") {
        m.init_mode = PromptInitMode::Random;
    } else {
        throw ConfigError("unknown toggle '" + name + "' (fg, bg, spt, pmg, gauss, text)");
    }
}

ModelConfig variant_config(ModelConfig base, const std::string& variant) {
    base.use_fg_prompts = base.use_bg_prompts = base.use_spt = base.use_pmg = true;
    if (variant == "full") return base;
    base.use_bg_prompts = false;
    base.use_pmg = false;
    if (variant == "fg_spt") return base;
    base.use_spt = false;
    if (variant == "fg") return base;
    base.use_fg_prompts = false;
    if (variant == "baseline") return base;
    throw ConfigError("unknown variant '" + variant + "' (baseline, fg, fg_spt, full)");
}

void TrainConfig::validate() const {
    model.validate();
    if (shots != 1 && shots != 5) throw ConfigError("shots must be 1 or 5");
    if (!(lr >= 0)) throw ConfigError("lr must be non-negative");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
    if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be non-negative");
    if (!(crop_min_scale > 0 && crop_min_scale <= 1)) throw ConfigError("crop_min_scale must be in (0, 1]");
    for (const auto& s : seen)
        if (std::find(unseen.begin(), unseen.end(), s) != unseen.end()) {
            throw ConfigError("class '" + s + "' is listed as both seen and unseen");
        }
}

json to_json(const TrainConfig& c) {
    const ModelConfig& m = c.model;
    const EncoderConfig& e = m.encoder;
    return json{
        {"lr", c.lr},
        {"momentum", c.momentum},
        {"grad_clip", c.grad_clip},
        {"episodes", c.episodes},
        {"shots", c.shots},
        {"seen", c.seen},
        {"unseen", c.unseen},
        {"seed", c.seed},
        {"augment", c.augment},
        {"crop_min_scale", c.crop_min_scale},
        {"image_size", e.image_size},
        {"patch_size", e.patch_size},
        {"channels", e.channels},
        {"d", e.d},
        {"n_blocks", e.n_blocks},
        {"n_heads", e.n_heads},
        {"mlp_ratio", e.mlp_ratio},
        {"L", e.enhanced_blocks},
        {"n_fg", m.n_fg},
        {"n_bg", m.n_bg},
        {"text_dim", m.text_dim},
        {"use_fg_prompts", m.use_fg_prompts},
        {"use_bg_prompts", m.use_bg_prompts},
        {"use_spt", m.use_spt},
        {"use_pmg", m.use_pmg},
        {"top_k", m.suppression.top_k},
        {"radius", m.suppression.radius},
        {"sigma", m.suppression.sigma},
        {"suppression", m.suppression.enabled},
        {"bias_log_base", m.log_base == LogBase::Ten ? "10" : "e"},
        {"normalize_affinity", m.normalize_affinity},
        {"init", init_mode_name(m.init_mode)},
        {"temperature", m.temperature},
        {"alpha", m.alpha},
        {"beta", m.beta},
        {"zeroshot", m.zeroshot},
        {"zeroshot_scale", m.zeroshot_scale},
        {"embeddings", m.embeddings},
    };
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    TrainConfig c;
    const json defaults = to_json(c);
    for (const auto& [k, v] : j.items())
        if (!defaults.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    json merged = defaults;
    merged.update(j);
    ModelConfig& m = c.model;
    EncoderConfig& e = m.encoder;
    try {
        c.lr = merged.at("lr").get<double>();
        c.momentum = merged.at("momentum").get<double>();
        c.grad_clip = merged.at("grad_clip").get<double>();
        c.episodes = merged.at("episodes").get<std::size_t>();
        c.shots = merged.at("shots").get<int>();
        c.seen = merged.at("seen").get<std::vector<std::string>>();
        c.unseen = merged.at("unseen").get<std::vector<std::string>>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.augment = merged.at("augment").get<bool>();
        c.crop_min_scale = merged.at("crop_min_scale").get<double>();
        e.image_size = merged.at("image_size").get<std::size_t>();
        e.patch_size = merged.at("patch_size").get<std::size_t>();
        e.channels = merged.at("channels").get<std::size_t>();
        e.d = merged.at("d").get<std::size_t>();
        e.n_blocks = merged.at("n_blocks").get<std::size_t>();
        e.n_heads = merged.at("n_heads").get<std::size_t>();
        e.mlp_ratio = merged.at("mlp_ratio").get<double>();
        e.enhanced_blocks = merged.at("L").get<std::size_t>();
        m.n_fg = merged.at("n_fg").get<std::size_t>();
        m.n_bg = merged.at("n_bg").get<std::size_t>();
        m.text_dim = merged.at("text_dim").get<std::size_t>();
        m.use_fg_prompts = merged.at("use_fg_prompts").get<bool>();
        m.use_bg_prompts = merged.at("use_bg_prompts").get<bool>();
        m.use_spt = merged.at("use_spt").get<bool>();
        m.use_pmg = merged.at("use_pmg").get<bool>();
        m.suppression.top_k = merged.at("top_k").get<std::size_t>();
        m.suppression.radius = merged.at("radius").get<std::size_t>();
        m.suppression.sigma = merged.at("sigma").get<double>();
        m.suppression.enabled = merged.at("suppression").get<bool>();
        const std::string base = merged.at("bias_log_base").get<std::string>();
        if (base != "10" && base != "e") throw ConfigError("bias_log_base must be \"10\" or \"e\"");
        m.log_base = base == "10" ? LogBase::Ten : LogBase::E;
        m.normalize_affinity = merged.at("normalize_affinity").get<bool>();
        m.init_mode = init_mode_from_name(merged.at("init").get<std::string>());
        m.temperature = merged.at("temperature").get<double>();
        m.alpha = merged.at("alpha").get<double>();
        m.beta = merged.at("beta").get<double>();
        m.zeroshot = merged.at("zeroshot").get<bool>();
        m.zeroshot_scale = merged.at("zeroshot_scale").get<double>();
        m.embeddings = merged.at("embeddings").get<std::string>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("bad config value: ") + ex.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ParseError(path, ex.byte, ex.what());
    }
    return train_config_from_json(j);
}

void save_train_config(const std::string& path, const TrainConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path);
    out << to_json(cfg).dump(2) << "\n";
}

}  // namespace PAT_ABI
}  // namespace pat
