#include "anatpaste/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "anatpaste/error.hpp"

namespace anatpaste::eval {

namespace {

void validate(std::span<const LabeledScore> data) {
    for (const auto& e : data) {
        if (!std::isfinite(e.score)) throw Error(Errc::InvalidArgument, "non-finite score for id '" + e.id + "'");
        if (e.label != 0 && e.label != 1) throw Error(Errc::InvalidArgument, "label must be 0 or 1 for id '" + e.id + "'");
    }
}

// A threshold t with lo <= t < hi, preferring the midpoint.
double between(double hi, double lo) noexcept {
    const double mid = 0.5 * (hi + lo);
    return (mid >= hi || mid < lo) ? lo : mid;
}

std::vector<std::size_t> order_by_score(std::span<const LabeledScore> data, bool descending) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? data[a].score > data[b].score : data[a].score < data[b].score;
    });
    return idx;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const LabeledScore> data) {
    validate(data);
    const auto positives = static_cast<std::size_t>(
        std::count_if(data.begin(), data.end(), [](const LabeledScore& e) { return e.label == 1; }));
    const std::size_t negatives = data.size() - positives;
    if (positives == 0 || negatives == 0) throw Error(Errc::SingleClass, "ROC needs both normal and abnormal entries");

    const auto idx = order_by_score(data, true);
    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, data[idx.front()].score});
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double s = data[idx[i]].score;
        while (i < idx.size() && data[idx[i]].score == s) {
            (data[idx[i]].label == 1 ? tp : fp) += 1;
            ++i;
        }
        const double threshold =
            i < idx.size() ? between(s, data[idx[i]].score) : -std::numeric_limits<double>::infinity();
        points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives), threshold});
    }
    return points;
}

double auc(std::span<const LabeledScore> data) {
    const auto points = roc_curve(data);
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
    }
    return area;
}

Confusion confusion_at(std::span<const LabeledScore> data, double threshold) {
    validate(data);
    Confusion c;
    for (const auto& e : data) {
        const bool predicted = e.score > threshold;
        if (e.label == 1) {
            (predicted ? c.tp : c.fn) += 1;
        } else {
            (predicted ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

double f1_score(const Confusion& c) noexcept {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

F1Choice best_f1_threshold(std::span<const LabeledScore> data) {
    validate(data);
    const auto positives = static_cast<std::size_t>(
        std::count_if(data.begin(), data.end(), [](const LabeledScore& e) { return e.label == 1; }));
    if (positives == 0) throw Error(Errc::UndefinedF1, "F1 needs at least one abnormal entry");
    const std::size_t negatives = data.size() - positives;

    // Sweep thresholds upward; entries at or below the threshold become negatives.
    const auto idx = order_by_score(data, false);
    Confusion c{positives, negatives, 0, 0};
    F1Choice best{-std::numeric_limits<double>::infinity(), f1_score(c)};
    std::size_t best_num = 2 * c.tp;
    std::size_t best_den = 2 * c.tp + c.fp + c.fn;
    for (std::size_t i = 0; i < idx.size();) {
        const double s = data[idx[i]].score;
        while (i < idx.size() && data[idx[i]].score == s) {
            if (data[idx[i]].label == 1) {
                --c.tp;
                ++c.fn;
            } else {
                --c.fp;
                ++c.tn;
            }
            ++i;
        }
        if (i == idx.size()) break;
        const std::size_t num = 2 * c.tp;
        const std::size_t den = 2 * c.tp + c.fp + c.fn;
        // num/den > best_num/best_den, compared exactly; 0/0 counts as 0.
        const bool better = den != 0 && (best_den == 0 ? num > 0 : num * best_den > best_num * den);
        if (better) {
            best_num = num;
            best_den = den;
            best = {between(data[idx[i]].score, s), f1_score(c)};
        }
    }
    return best;
}

MetricsReport metrics_at(std::span<const LabeledScore> data, double threshold) {
    MetricsReport r;
    r.threshold = threshold;
    r.confusion = confusion_at(data, threshold);
    const std::size_t n = r.confusion.total();
    r.accuracy = n == 0 ? 0.0 : static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(n);
    r.f1 = f1_score(r.confusion);
    const bool both = r.confusion.tp + r.confusion.fn > 0 && r.confusion.fp + r.confusion.tn > 0;
    if (both) r.auc = auc(data);
    return r;
}

std::map<std::string, MetricsReport> metrics_by_group(std::span<const LabeledScore> data, double threshold) {
    std::set<std::string> groups;
    for (const auto& e : data) {
        if (e.label == 1 && !e.group.empty()) groups.insert(e.group);
    }
    std::map<std::string, MetricsReport> out;
    for (const auto& g : groups) {
        std::vector<LabeledScore> subset;
        for (const auto& e : data) {
            if (e.group.empty() || e.group == g) subset.push_back(e);
        }
        out.emplace(g, metrics_at(subset, threshold));
    }
    return out;
}

}  // namespace anatpaste::eval
