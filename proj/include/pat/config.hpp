#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pat/model.hpp"

namespace pat {
inline namespace PAT_ABI {

struct TrainConfig {
    ModelConfig model;
    double lr = 1e-3;
    double momentum = 0.9;
    double grad_clip = 1.0;  // global L2 norm cap per step; 0 disables
    std::size_t episodes = 2000;
    int shots = 1;
    std::vector<std::string> seen;
    std::vector<std::string> unseen;
    std::uint64_t seed = 0;
    bool augment = true;
    double crop_min_scale = 0.8;

    void validate() const;
};

// Flat JSON: every TrainConfig and ModelConfig field at the top level.
// Unknown keys are rejected.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);
void save_train_config(const std::string& path, const TrainConfig& cfg);

// Switches one component off: fg, bg, spt, pmg, gauss, text.
void apply_toggle(ModelConfig& m, const std::string& name);

// Ablation ladder: baseline (no prompts, prototype matching), fg (FG prompts
// only), fg_spt (FG prompts with whole-mask transfer), full.
ModelConfig variant_config(ModelConfig base, const std::string& variant);

std::string init_mode_name(PromptInitMode m);
PromptInitMode init_mode_from_name(const std::string& s);

}  // namespace PAT_ABI
}  // namespace pat
