#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttp/image.hpp"

namespace ttp {

class MetricsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pixel confusion counts with "change" as the positive class.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& merge(const ConfusionCounts& other);
    bool operator==(const ConfusionCounts&) const = default;
};

/// All values are percentages at full precision.
struct MetricReport {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double iou = 0;
    double oa = 0;
};

ConfusionCounts accumulate(const Mask& pred, const Mask& gt, ConfusionCounts counts = {});
ConfusionCounts accumulate(const std::vector<Mask>& preds, const std::vector<Mask>& gts, ConfusionCounts counts = {});
MetricReport compute(const ConfusionCounts& c);

/// Both take and return percentages; 0 when undefined.
double f1_from_pr(double precision, double recall);
double iou_from_f1(double f1);

struct ReportRow {
    std::string name;
    MetricReport metrics;
};

/// Columns: name, P, R, F1, IoU, OA (full precision).
void write_metrics_csv(std::ostream& out, const std::vector<ReportRow>& rows);
/// Aligned text table rounded to one decimal.
void write_metrics_table(std::ostream& out, const std::vector<ReportRow>& rows);
std::string format_row(const MetricReport& m);

}  // namespace ttp
