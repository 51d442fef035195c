#include "ttp/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace ttp {

std::vector<AblationVariant> ablation_variants() {
    return {
        {"TTP", {true, true, true}},
        {"TTP (w/o ttg)", {false, true, true}},
        {"TTP (w/o ttg, ml)", {false, false, true}},
        {"TTP (w/o ttg, ml, tuning)", {false, false, false}},
    };
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport run_ablation(const RunConfig& cfg, const std::function<void(const AblationRun&)>& on_run) {
    const auto train_set = load_split(cfg.data, false);
    const auto eval_set = load_split(cfg.data, true);
    if (train_set.empty() || eval_set.empty()) throw DatasetError("ablation needs non-empty train and eval splits");

    AblationReport report;
    for (const auto& variant : ablation_variants()) {
        AblationRow row;
        row.variant = variant;
        std::vector<double> p, r, f1, iou, oa;
        for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
            ModelConfig mc = cfg.model;
            mc.flags = variant.flags;
            mc.seed = cfg.seed + k;
            TrainConfig tc = cfg.training;
            tc.seed = mc.seed;
            tc.output_dir.reset();
            tc.eval_every = 0;
            TtpModel model(mc);
            const History h = train(model, tc, train_set);

            AblationRun run;
            run.variant = variant.name;
            run.seed = mc.seed;
            run.trainable = model.trainable_parameters().count();
            run.final_loss = h.epochs.back().loss;
            run.metrics = compute(evaluate(model, eval_set, tc.batch_size));
            row.trainable = run.trainable;
            p.push_back(run.metrics.precision);
            r.push_back(run.metrics.recall);
            f1.push_back(run.metrics.f1);
            iou.push_back(run.metrics.iou);
            oa.push_back(run.metrics.oa);
            report.runs.push_back(run);
            if (on_run) on_run(run);
        }
        row.median = {median(p), median(r), median(f1), median(iou), median(oa)};
        report.rows.push_back(row);
    }
    return report;
}

void write_ablation_runs_csv(std::ostream& out, const AblationReport& report) {
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    out << "variant,seed,trainable,final_loss,P,R,F1,IoU,OA\n";
    for (const auto& run : report.runs) {
        const auto& m = run.metrics;
        out << '"' << run.variant << "\"," << run.seed << ',' << run.trainable << ',' << run.final_loss << ','
            << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.iou << ',' << m.oa << '\n';
    }
    out.precision(old);
}

void write_ablation_markdown(std::ostream& out, const AblationReport& report) {
    out << "| Method | Trainable | P | R | F1 | IoU | OA |\n";
    out << "|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& row : report.rows) {
        const auto& m = row.median;
        char buf[160];
        std::snprintf(buf, sizeof buf, "| %s | %zu | %.1f | %.1f | %.1f | %.1f | %.1f |\n", row.variant.name.c_str(),
                      row.trainable, m.precision, m.recall, m.f1, m.iou, m.oa);
        out << buf;
    }
}

}  // namespace ttp
