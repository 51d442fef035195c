#include "ttp/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "ttp/ablation.hpp"
#include "ttp/config.hpp"
#include "ttp/ops.hpp"
#include "ttp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttp {

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& a, bool require_config) {
    auto* opt = cmd->add_option("-c,--config", a.path, "JSON config file");
    if (require_config) opt->required();
    cmd->add_option("--set", a.overrides, "Override a config value, e.g. training.batch_size=4")->allow_extra_args(false);
    cmd->add_option("--seed", a.seed, "Seed for model init, shuffling and augmentation");
    cmd->add_option("-o,--output", a.output_dir, "Output directory (overrides output_dir)");
}

json resolve_config(const json& base_doc, const ConfigArgs& a) {
    json doc = merge_config(default_config_json(), base_doc);
    for (const auto& o : a.overrides) apply_override(doc, o);
    if (a.seed) doc["seed"] = *a.seed;
    if (!a.output_dir.empty()) doc["output_dir"] = a.output_dir;
    return doc;
}

json read_args_config(const ConfigArgs& a) {
    return resolve_config(a.path.empty() ? json::object() : load_config_file(a.path), a);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct LoadedModel {
    RunConfig cfg;
    std::optional<TtpModel> model;
};

LoadedModel load_model(const fs::path& checkpoint, const std::optional<json>& config) {
    const auto info = read_checkpoint_manifest(checkpoint);
    LoadedModel lm;
    json doc;
    if (config) {
        doc = *config;
    } else {
        if (!info.manifest.contains("config")) throw ParamMismatchError("checkpoint manifest has no config");
        try {
            doc = merge_config(default_config_json(), info.manifest.at("config"));
        } catch (const ConfigError& e) {
            throw ParamMismatchError(std::string("checkpoint config is not valid here: ") + e.what());
        }
    }
    lm.cfg = parse_config(doc);
    lm.model.emplace(lm.cfg.model);
    load_checkpoint(checkpoint, *lm.model);
    return lm;
}

// Probability map at the input resolution; larger inputs are covered by
// model-sized tiles with the last row/column clamped to the edge.
std::vector<double> predict_probability(const TtpModel& model, const Image& img0, const Image& img1) {
    const std::size_t s = model.config().backbone.image_size;
    if (img0.height < s || img0.width < s) {
        throw DatasetError("input " + std::to_string(img0.height) + "x" + std::to_string(img0.width) +
                           " is smaller than the model input " + std::to_string(s));
    }
    NoGradGuard no_grad;
    std::vector<double> prob(img0.height * img0.width, 0.0);
    for (auto y : tile_offsets(img0.height, s, s)) {
        for (auto x : tile_offsets(img0.width, s, s)) {
            BitemporalSample t;
            t.img0 = Image(3, s, s);
            t.img1 = Image(3, s, s);
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t yy = 0; yy < s; ++yy) {
                    for (std::size_t xx = 0; xx < s; ++xx) {
                        t.img0.at(c, yy, xx) = img0.at(c, y + yy, x + xx);
                        t.img1.at(c, yy, xx) = img1.at(c, y + yy, x + xx);
                    }
                }
            }
            const std::vector<BitemporalSample> batch{t};
            const Tensor logits = model.forward_logits(stack_images(batch, {0}, 0), stack_images(batch, {0}, 1));
            const Tensor p = sigmoid(bilinear_resize(logits, s, s));
            const auto pd = p.data();
            for (std::size_t yy = 0; yy < s; ++yy) {
                for (std::size_t xx = 0; xx < s; ++xx) prob[(y + yy) * img0.width + x + xx] = pd[yy * s + xx];
            }
        }
    }
    return prob;
}

int cmd_train(const ConfigArgs& a, std::ostream& out) {
    const json doc = read_args_config(a);
    RunConfig cfg = parse_config(doc);
    const auto train_set = load_split(cfg.data, false);
    if (train_set.empty()) throw DatasetError("training split is empty");
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.json", doc.dump(2) + "\n");

    TtpModel model(cfg.model);
    out << "trainable parameters: " << model.trainable_parameters().count() << " of " << model.parameters().count()
        << "\n";
    train(model, cfg.training, train_set, [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " loss " << r.loss << " lr " << r.lr;
        if (r.metrics) out << " F1 " << r.metrics->f1;
        out << std::endl;
    });
    out << "checkpoint: " << (dir / "checkpoint").string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& csv_path,
             const ConfigArgs& a, std::ostream& out) {
    std::optional<json> doc;
    if (!a.path.empty() || !a.overrides.empty()) doc = read_args_config(a);
    LoadedModel lm = load_model(checkpoint, doc);
    std::vector<BitemporalSample> data;
    if (!data_dir.empty()) {
        DataConfig dc = lm.cfg.data;
        dc.source = "levir";
        dc.eval_dir = data_dir;
        data = load_split(dc, true);
    } else {
        data = load_split(lm.cfg.data, true);
    }
    if (data.empty()) throw DatasetError("evaluation set is empty");
    const MetricReport m = compute(evaluate(*lm.model, data, lm.cfg.training.batch_size));
    const std::vector<ReportRow> rows{{"TTP", m}};
    write_metrics_table(out, rows);
    const fs::path csv = csv_path.empty() ? fs::path(checkpoint) / "eval.csv" : fs::path(csv_path);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    std::ofstream f(csv);
    if (!f) throw std::runtime_error("cannot write " + csv.string());
    write_metrics_csv(f, rows);
    return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& pairs, const std::string& out_dir,
                double threshold, std::ostream& out) {
    if (pairs.empty() || pairs.size() % 2 != 0) throw CLI::ValidationError("--pair", "expects BEFORE AFTER paths");
    LoadedModel lm = load_model(checkpoint, std::nullopt);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < pairs.size(); i += 2) {
        Image img0;
        Image img1;
        try {
            img0 = read_rgb(pairs[i]);
            img1 = read_rgb(pairs[i + 1]);
        } catch (const ImageIoError& e) {
            throw DatasetError(e.what());
        }
        if (img0.height != img1.height || img0.width != img1.width) {
            throw DatasetError("pair size mismatch: " + pairs[i] + " is " + std::to_string(img0.height) + "x" +
                               std::to_string(img0.width) + ", " + pairs[i + 1] + " is " +
                               std::to_string(img1.height) + "x" + std::to_string(img1.width));
        }
        const auto prob = predict_probability(*lm.model, img0, img1);
        Mask mask(img0.height, img0.width);
        for (std::size_t j = 0; j < prob.size(); ++j) mask.values[j] = prob[j] >= threshold ? 1 : 0;
        const std::string stem = fs::path(pairs[i]).stem().string();
        write_mask(fs::path(out_dir) / (stem + "_mask.png"), mask);
        write_gray(fs::path(out_dir) / (stem + "_prob.png"), img0.height, img0.width, prob);
        out << stem << ": " << mask.count() << " changed pixels\n";
    }
    return kExitOk;
}

int cmd_ablate(const ConfigArgs& a, std::ostream& out) {
    const json doc = read_args_config(a);
    const RunConfig cfg = parse_config(doc);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.json", doc.dump(2) + "\n");
    const AblationReport report = run_ablation(cfg, [&](const AblationRun& r) {
        out << r.variant << " seed " << r.seed << " trainable " << r.trainable << " F1 " << r.metrics.f1 << std::endl;
    });
    std::ostringstream md;
    write_ablation_markdown(md, report);
    std::ostringstream csv;
    write_ablation_runs_csv(csv, report);
    write_text(dir / "ablation.md", md.str());
    write_text(dir / "ablation_runs.csv", csv.str());
    out << md.str();
    return kExitOk;
}

int cmd_synth(const ConfigArgs& a, const std::string& split, const std::string& out_dir, std::ostream& out) {
    const RunConfig cfg = parse_config(read_args_config(a));
    DataConfig dc = cfg.data;
    dc.source = "synthetic";
    dc.tile_size = 0;
    const auto samples = load_split(dc, split == "eval");
    write_levir_dir(out_dir, samples);
    out << "wrote " << samples.size() << " pairs to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bitemporal change detection with a frozen ViT, adapters and exchange gates", "ttp"};
    app.require_subcommand(1);

    ConfigArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics.csv and config.json");
    add_config_flags(train_cmd, train_args, false);

    ConfigArgs eval_args;
    std::string eval_ckpt;
    std::string eval_data;
    std::string eval_csv;
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
    eval_cmd->add_option("--data", eval_data, "LEVIR-style directory (default: eval split of the config)");
    eval_cmd->add_option("--out", eval_csv, "CSV path (default: <checkpoint>/eval.csv)");
    add_config_flags(eval_cmd, eval_args, false);

    std::string pred_ckpt;
    std::vector<std::string> pred_pairs;
    std::string pred_out;
    double threshold = 0.5;
    std::optional<std::uint64_t> pred_seed;
    auto* pred_cmd = app.add_subcommand("predict", "Write change masks and probability maps for image pairs");
    pred_cmd->add_option("--checkpoint", pred_ckpt, "Checkpoint directory")->required();
    pred_cmd->add_option("--pair", pred_pairs, "BEFORE AFTER image paths (repeatable)")->required()->expected(2)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    pred_cmd->add_option("-o,--out", pred_out, "Output directory")->required();
    pred_cmd->add_option("--threshold", threshold, "Probability threshold")->check(CLI::Range(0.0, 1.0));
    pred_cmd->add_option("--seed", pred_seed, "Accepted for uniformity; prediction is deterministic");

    ConfigArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the four ablation variants over several seeds");
    add_config_flags(ablate_cmd, ablate_args, false);

    ConfigArgs synth_args;
    std::string synth_split = "train";
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Export a synthetic split in LEVIR layout");
    add_config_flags(synth_cmd, synth_args, false);
    synth_cmd->add_option("--split", synth_split, "train or eval")->check(CLI::IsMember({"train", "eval"}));
    synth_cmd->add_option("--out", synth_out, "Destination directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out);
        if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_csv, eval_args, out);
        if (*pred_cmd) return cmd_predict(pred_ckpt, pred_pairs, pred_out, threshold, out);
        if (*ablate_cmd) return cmd_ablate(ablate_args, out);
        if (*synth_cmd) return cmd_synth(synth_args, synth_split, synth_out, out);
    } catch (const ParamMismatchError& e) {
        err << "error: checkpoint mismatch: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const NumericError& e) {
        err << "error: numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        err << "error: config: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DatasetError& e) {
        err << "error: data: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace ttp
