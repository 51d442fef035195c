#include "ttp/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <limits>

namespace ttp {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
}

ConfusionCounts accumulate(const Mask& pred, const Mask& gt, ConfusionCounts counts) {
    if (pred.height != gt.height || pred.width != gt.width || pred.values.size() != gt.values.size()) {
        throw MetricsError("mask shapes differ: " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                           " vs " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const auto p = pred.values[i];
        const auto g = gt.values[i];
        if (p > 1 || g > 1) throw MetricsError("mask values must be 0 or 1");
        if (p && g) {
            ++counts.tp;
        } else if (p) {
            ++counts.fp;
        } else if (g) {
            ++counts.fn;
        } else {
            ++counts.tn;
        }
    }
    return counts;
}

ConfusionCounts accumulate(const std::vector<Mask>& preds, const std::vector<Mask>& gts, ConfusionCounts counts) {
    if (preds.size() != gts.size()) throw MetricsError("prediction and label counts differ");
    for (std::size_t i = 0; i < preds.size(); ++i) counts = accumulate(preds[i], gts[i], counts);
    return counts;
}

double f1_from_pr(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double iou_from_f1(double f1) {
    const double f = f1 / 100.0;
    return 100.0 * f / (2.0 - f);
}

MetricReport compute(const ConfusionCounts& c) {
    if (c.total() == 0) throw MetricsError("no pixels were accumulated");
    MetricReport m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    // Straight from counts, 2tp / (2tp + fp + fn), equal to 2PR/(P+R).
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    m.iou = ratio(c.tp, c.tp + c.fp + c.fn);
    m.oa = ratio(c.tp + c.tn, c.total());
    return m;
}

std::string format_row(const MetricReport& m) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%6.1f %6.1f %6.1f %6.1f %6.1f", m.precision, m.recall, m.f1, m.iou, m.oa);
    return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << "name,P,R,F1,IoU,OA\n";
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        out << r.name << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.iou << ',' << m.oa << '\n';
    }
    out.precision(old);
}

void write_metrics_table(std::ostream& out, const std::vector<ReportRow>& rows) {
    std::size_t width = 6;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    out << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right << "      P      R     F1    IoU     OA\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << ' ' << format_row(r.metrics)
            << '\n';
    }
}

}  // namespace ttp
