#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anatpaste::eval {

/// label: 0 normal, 1 abnormal. `group` optionally tags abnormal entries with
/// a stratum (e.g. lesion size); untagged entries belong to every stratum.
struct LabeledScore {
    std::string id;
    double score = 0.0;
    int label = 0;
    std::string group;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    /// Predicting abnormal iff score > threshold reproduces this point.
    double threshold = 0.0;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct MetricsReport {
    std::optional<double> auc;  // absent when only one class is present
    double accuracy = 0.0;
    double f1 = 0.0;
    double threshold = 0.0;
    Confusion confusion;
};

struct F1Choice {
    double threshold = 0.0;
    double f1 = 0.0;
};

/// Points from (0,0) to (1,1), one per distinct score. Throws SingleClass
/// unless both labels occur.
std::vector<RocPoint> roc_curve(std::span<const LabeledScore> data);

/// Trapezoidal area under roc_curve (ties receive half credit).
double auc(std::span<const LabeledScore> data);

/// Best F1 over thresholds at -inf and midway between consecutive distinct
/// scores; the lowest threshold wins ties. Throws UndefinedF1 without abnormal entries.
F1Choice best_f1_threshold(std::span<const LabeledScore> data);

Confusion confusion_at(std::span<const LabeledScore> data, double threshold);

/// F1 = 2TP / (2TP + FP + FN), or 0 when that denominator is 0.
double f1_score(const Confusion& c) noexcept;

MetricsReport metrics_at(std::span<const LabeledScore> data, double threshold);

/// One report per abnormal group tag, each over that group's abnormal
/// entries plus every untagged entry.
std::map<std::string, MetricsReport> metrics_by_group(std::span<const LabeledScore> data, double threshold);

}  // namespace anatpaste::eval
