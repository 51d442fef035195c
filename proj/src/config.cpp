#include "ttp/config.hpp"

#include <fstream>

namespace ttp {

using nlohmann::json;

namespace {

bool compatible(const json& def, const json& val) {
    if (def.is_null()) return val.is_null() || val.is_number();
    if (def.is_number_float()) return val.is_number();
    if (def.is_number_unsigned() || def.is_number_integer()) return val.is_number_unsigned() || val.is_number_integer();
    if (def.is_array()) return val.is_array();
    return def.type() == val.type();
}

void merge_into(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (const auto& [key, val] : user.items()) {
        const std::string dotted = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            merge_into(slot, val, dotted);
        } else if (!compatible(slot, val)) {
            throw ConfigError("config key '" + dotted + "' expects " + std::string(slot.type_name()) + ", got " +
                              val.type_name());
        } else {
            if ((slot.is_number_unsigned() || slot.is_number_integer()) && val.is_number_integer() && val.get<long long>() < 0) {
                throw ConfigError("config key '" + dotted + "' must be non-negative");
            }
            slot = val;
        }
    }
}

template <typename T>
T get(const json& j, const char* key) {
    return j.at(key).get<T>();
}

}  // namespace

json default_config_json() {
    const BackboneConfig b;
    const SynthConfig s;
    const AugmentConfig a;
    const TrainConfig t;
    const DataConfig d;
    return {
        {"seed", 0},
        {"output_dir", "runs/default"},
        {"backbone",
         {{"image_size", b.image_size},
          {"patch_size", b.patch_size},
          {"embed_dim", b.embed_dim},
          {"depth", b.depth},
          {"num_heads", b.num_heads},
          {"window_size", b.window_size},
          {"global_layers", b.global_layers},
          {"lora_rank", b.lora_rank},
          {"mlp_ratio", b.mlp_ratio}}},
        {"head", {{"d_head", 8}, {"up_channels", 0}}},
        {"gate", {{"proj2_init_std", 0.0}}},
        {"training",
         {{"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"base_lr", t.base_lr},
          {"warmup_steps", nullptr},
          {"min_lr", nullptr},
          {"weight_decay", t.adamw.weight_decay},
          {"beta1", t.adamw.beta1},
          {"beta2", t.adamw.beta2},
          {"eps", t.adamw.eps},
          {"augment", t.augment},
          {"full_res_loss", t.full_res_loss},
          {"eval_every", t.eval_every}}},
        {"data",
         {{"source", d.source},
          {"train_dir", d.train_dir},
          {"eval_dir", d.eval_dir},
          {"tile_size", d.tile_size},
          {"tile_stride", d.tile_stride},
          {"train_count", d.train_count},
          {"eval_count", d.eval_count},
          {"eval_seed_offset", d.eval_seed_offset},
          {"synthetic",
           {{"canvas", s.canvas},
            {"min_shapes", s.min_shapes},
            {"max_shapes", s.max_shapes},
            {"min_extent", s.min_extent},
            {"max_extent", s.max_extent},
            {"rectangles", s.rectangles},
            {"ellipses", s.ellipses},
            {"change_fraction", s.change_fraction},
            {"brightness_delta", s.brightness_delta},
            {"contrast_min", s.contrast_min},
            {"contrast_max", s.contrast_max},
            {"noise_sigma", s.noise_sigma},
            {"seed", s.seed}}},
          {"augmentation",
           {{"geometric", a.geometric},
            {"photometric", a.photometric},
            {"rotate_prob", a.rotate_prob},
            {"flip_prob", a.flip_prob},
            {"crop_prob", a.crop_prob},
            {"crop_min_scale", a.crop_min_scale},
            {"photometric_prob", a.photometric_prob},
            {"brightness_delta", a.brightness_delta},
            {"contrast_min", a.contrast_min},
            {"contrast_max", a.contrast_max},
            {"saturation_min", a.saturation_min},
            {"saturation_max", a.saturation_max}}}}},
        {"ablation", {{"use_ttg", true}, {"use_multilevel", true}, {"use_lora", true}, {"n_seeds", 5}}},
    };
}

json merge_config(const json& base, const json& user) {
    json out = base;
    merge_into(out, user, "");
    return out;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    // Build a nested patch and reuse the merge checks.
    json patch = value;
    std::size_t end = key.size();
    while (true) {
        const auto dot = key.rfind('.', end - 1);
        const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                            end - (dot == std::string::npos ? 0 : dot + 1));
        if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
        patch = json{{part, patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_into(doc, patch, "");
}

RunConfig parse_config(const json& doc) {
    // Re-merge so documents built by hand get the same key checks.
    const json j = merge_config(default_config_json(), doc);
    RunConfig rc;
    rc.seed = get<std::uint64_t>(j, "seed");
    rc.output_dir = get<std::string>(j, "output_dir");

    const json& b = j.at("backbone");
    BackboneConfig& bc = rc.model.backbone;
    bc.image_size = get<std::size_t>(b, "image_size");
    bc.patch_size = get<std::size_t>(b, "patch_size");
    bc.embed_dim = get<std::size_t>(b, "embed_dim");
    bc.depth = get<std::size_t>(b, "depth");
    bc.num_heads = get<std::size_t>(b, "num_heads");
    bc.window_size = get<std::size_t>(b, "window_size");
    bc.global_layers = get<std::vector<std::size_t>>(b, "global_layers");
    bc.lora_rank = get<std::size_t>(b, "lora_rank");
    bc.mlp_ratio = get<std::size_t>(b, "mlp_ratio");
    bc.validate();

    rc.model.d_head = get<std::size_t>(j.at("head"), "d_head");
    rc.model.up_channels = get<std::size_t>(j.at("head"), "up_channels");
    if (rc.model.d_head == 0) throw ConfigError("head.d_head must be positive");
    rc.model.gate_proj2_std = get<double>(j.at("gate"), "proj2_init_std");
    if (rc.model.gate_proj2_std < 0.0) throw ConfigError("gate.proj2_init_std must be non-negative");

    const json& ab = j.at("ablation");
    rc.model.flags.use_ttg = get<bool>(ab, "use_ttg");
    rc.model.flags.use_multilevel = get<bool>(ab, "use_multilevel");
    rc.model.flags.use_lora = get<bool>(ab, "use_lora");
    rc.n_seeds = get<std::size_t>(ab, "n_seeds");
    if (rc.n_seeds == 0) throw ConfigError("ablation.n_seeds must be at least 1");
    rc.model.seed = rc.seed;

    const json& t = j.at("training");
    TrainConfig& tc = rc.training;
    tc.batch_size = get<std::size_t>(t, "batch_size");
    tc.max_epochs = get<std::size_t>(t, "max_epochs");
    tc.base_lr = get<double>(t, "base_lr");
    if (!t.at("warmup_steps").is_null()) tc.warmup_steps = get<std::size_t>(t, "warmup_steps");
    if (!t.at("min_lr").is_null()) tc.min_lr = get<double>(t, "min_lr");
    tc.adamw.weight_decay = get<double>(t, "weight_decay");
    tc.adamw.beta1 = get<double>(t, "beta1");
    tc.adamw.beta2 = get<double>(t, "beta2");
    tc.adamw.eps = get<double>(t, "eps");
    tc.augment = get<bool>(t, "augment");
    tc.full_res_loss = get<bool>(t, "full_res_loss");
    tc.eval_every = get<std::size_t>(t, "eval_every");
    tc.seed = rc.seed;
    tc.output_dir = rc.output_dir;
    tc.run_config = j;
    try {
        tc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("training: ") + e.what());
    }

    const json& d = j.at("data");
    DataConfig& dc = rc.data;
    dc.source = get<std::string>(d, "source");
    if (dc.source != "synthetic" && dc.source != "levir") {
        throw ConfigError("data.source must be \"synthetic\" or \"levir\", got \"" + dc.source + "\"");
    }
    dc.train_dir = get<std::string>(d, "train_dir");
    dc.eval_dir = get<std::string>(d, "eval_dir");
    dc.tile_size = get<std::size_t>(d, "tile_size");
    dc.tile_stride = get<std::size_t>(d, "tile_stride");
    dc.train_count = get<std::size_t>(d, "train_count");
    dc.eval_count = get<std::size_t>(d, "eval_count");
    dc.eval_seed_offset = get<std::uint64_t>(d, "eval_seed_offset");
    const json& s = d.at("synthetic");
    SynthConfig& sc = dc.synthetic;
    sc.canvas = get<std::size_t>(s, "canvas");
    sc.min_shapes = get<std::size_t>(s, "min_shapes");
    sc.max_shapes = get<std::size_t>(s, "max_shapes");
    sc.min_extent = get<double>(s, "min_extent");
    sc.max_extent = get<double>(s, "max_extent");
    sc.rectangles = get<bool>(s, "rectangles");
    sc.ellipses = get<bool>(s, "ellipses");
    sc.change_fraction = get<double>(s, "change_fraction");
    sc.brightness_delta = get<double>(s, "brightness_delta");
    sc.contrast_min = get<double>(s, "contrast_min");
    sc.contrast_max = get<double>(s, "contrast_max");
    sc.noise_sigma = get<double>(s, "noise_sigma");
    sc.seed = get<std::uint64_t>(s, "seed");
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data.synthetic: ") + e.what());
    }
    const json& a = d.at("augmentation");
    AugmentConfig& ac = rc.training.augmentation;
    ac.geometric = get<bool>(a, "geometric");
    ac.photometric = get<bool>(a, "photometric");
    ac.rotate_prob = get<double>(a, "rotate_prob");
    ac.flip_prob = get<double>(a, "flip_prob");
    ac.crop_prob = get<double>(a, "crop_prob");
    ac.crop_min_scale = get<double>(a, "crop_min_scale");
    ac.photometric_prob = get<double>(a, "photometric_prob");
    ac.brightness_delta = get<double>(a, "brightness_delta");
    ac.contrast_min = get<double>(a, "contrast_min");
    ac.contrast_max = get<double>(a, "contrast_max");
    ac.saturation_min = get<double>(a, "saturation_min");
    ac.saturation_max = get<double>(a, "saturation_max");
    if (!(ac.crop_min_scale > 0.0 && ac.crop_min_scale <= 1.0)) {
        throw ConfigError("data.augmentation.crop_min_scale must lie in (0, 1]");
    }
    if (dc.source == "synthetic" && sc.canvas != bc.image_size && dc.tile_size == 0) {
        throw ConfigError("data.synthetic.canvas (" + std::to_string(sc.canvas) + ") differs from backbone.image_size (" +
                          std::to_string(bc.image_size) + ")");
    }
    if (dc.tile_size != 0 && dc.tile_size != bc.image_size) {
        throw ConfigError("data.tile_size must equal backbone.image_size when tiling");
    }
    return rc;
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

std::vector<BitemporalSample> load_split(const DataConfig& data, bool eval_split) {
    std::vector<BitemporalSample> samples;
    if (data.source == "synthetic") {
        SynthConfig sc = data.synthetic;
        if (eval_split) sc.seed += data.eval_seed_offset;
        const std::size_t n = eval_split ? data.eval_count : data.train_count;
        if (n == 0) return {};
        samples = synth_generate(sc, n);
    } else {
        const std::string& dir = eval_split ? data.eval_dir : data.train_dir;
        if (dir.empty()) throw ConfigError(std::string("data.") + (eval_split ? "eval_dir" : "train_dir") + " is not set");
        samples = load_levir_dir(dir);
    }
    if (data.tile_size == 0) return samples;
    std::vector<BitemporalSample> tiles;
    const std::size_t stride = data.tile_stride ? data.tile_stride : data.tile_size;
    for (const auto& s : samples) {
        for (auto& t : tile(s, data.tile_size, stride)) tiles.push_back(std::move(t));
    }
    return tiles;
}

}  // namespace ttp
