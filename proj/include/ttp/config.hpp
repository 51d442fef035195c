#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttp/backbone.hpp"
#include "ttp/data.hpp"
#include "ttp/model.hpp"
#include "ttp/trainer.hpp"

namespace ttp {

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or "levir"
    std::string train_dir;
    std::string eval_dir;
    std::size_t tile_size = 0;  // 0 keeps whole images
    std::size_t tile_stride = 0;
    SynthConfig synthetic;
    std::size_t train_count = 64;
    std::size_t eval_count = 32;
    std::uint64_t eval_seed_offset = 1;  // eval split uses synthetic.seed + offset
};

/// Resolved run configuration. The JSON document is the source of truth;
/// this struct is its typed view.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "runs/default";
    ModelConfig model;
    TrainConfig training;
    DataConfig data;
    std::size_t n_seeds = 5;
};

/// Every key with its default value.
nlohmann::json default_config_json();

/// Overlays `user` onto the defaults. Unknown keys and type mismatches throw
/// ConfigError naming the dotted key.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& user);
/// "training.batch_size=4" style override. Values parse as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig parse_config(const nlohmann::json& doc);
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Training and evaluation splits described by the data section.
std::vector<BitemporalSample> load_split(const DataConfig& data, bool eval_split);

}  // namespace ttp
