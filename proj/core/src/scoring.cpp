#include "anatpaste/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "anatpaste/error.hpp"

namespace anatpaste::kde {

KdeModel KdeModel::fit(std::span<const FeatureVector> references, double bandwidth) {
    if (references.empty()) throw Error(Errc::EmptyReferenceSet, "KDE needs at least one reference");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw Error(Errc::InvalidArgument, "KDE bandwidth must be positive");
    }
    KdeModel m;
    m.count_ = references.size();
    m.dim_ = references.front().size();
    m.bandwidth_ = bandwidth;
    for (const auto& r : references) {
        if (r.size() != m.dim_) throw Error(Errc::InvalidDimensions, "reference features have differing dimensions");
    }

    const double n = static_cast<double>(m.count_);
    m.mean_.assign(m.dim_, 0.0);
    m.std_.assign(m.dim_, 0.0);
    for (const auto& r : references) {
        for (std::size_t j = 0; j < m.dim_; ++j) m.mean_[j] += r[j];
    }
    for (double& v : m.mean_) v /= n;
    for (const auto& r : references) {
        for (std::size_t j = 0; j < m.dim_; ++j) {
            const double d = r[j] - m.mean_[j];
            m.std_[j] += d * d;
        }
    }
    double largest = 0.0;
    for (double& v : m.std_) {
        v = std::sqrt(v / n);
        largest = std::max(largest, v);
    }
    const double floor = std::max(kStdFloor, kRelativeStdFloor * largest);
    for (double& v : m.std_) v = std::max(v, floor);

    m.refs_.reserve(m.count_ * m.dim_);
    for (const auto& r : references) {
        for (std::size_t j = 0; j < m.dim_; ++j) m.refs_.push_back((r[j] - m.mean_[j]) / m.std_[j]);
    }
    return m;
}

std::span<const double> KdeModel::reference(std::size_t i) const {
    return std::span<const double>(refs_).subspan(i * dim_, dim_);
}

FeatureVector KdeModel::standardize(std::span<const double> z) const {
    if (z.size() != dim_) {
        throw Error(Errc::InvalidDimensions, "query has dimension " + std::to_string(z.size()) +
                                                 ", model expects " + std::to_string(dim_));
    }
    FeatureVector out(dim_);
    for (std::size_t j = 0; j < dim_; ++j) out[j] = (z[j] - mean_[j]) / std_[j];
    return out;
}

double KdeModel::density(std::span<const double> z) const {
    const FeatureVector q = standardize(z);
    const double inv_h2 = 1.0 / (bandwidth_ * bandwidth_);
    double sum = 0.0;
    for (std::size_t i = 0; i < count_; ++i) {
        const double* r = refs_.data() + i * dim_;
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double d = q[j] - r[j];
            d2 += d * d;
        }
        sum += std::exp(-0.5 * d2 * inv_h2);
    }
    return sum / static_cast<double>(count_);
}

double KdeModel::log_density(std::span<const double> z) const {
    const FeatureVector q = standardize(z);
    const double inv_h2 = 1.0 / (bandwidth_ * bandwidth_);
    std::vector<double> exponents(count_);
    for (std::size_t i = 0; i < count_; ++i) {
        const double* r = refs_.data() + i * dim_;
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double d = q[j] - r[j];
            d2 += d * d;
        }
        exponents[i] = -0.5 * d2 * inv_h2;
    }
    const double top = *std::max_element(exponents.begin(), exponents.end());
    double sum = 0.0;
    for (double e : exponents) sum += std::exp(e - top);
    return top + std::log(sum) - std::log(static_cast<double>(count_));
}

double raw_score_from_log_density(double log_density) noexcept { return -log_density; }

Normalization normalization_of(std::span<const ScoreEntry> entries) {
    if (entries.empty()) throw Error(Errc::EmptyQuerySet, "no scores to normalize");
    Normalization n{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& e : entries) {
        n.min = std::min(n.min, e.raw);
        n.max = std::max(n.max, e.raw);
    }
    return n;
}

double normalize(double raw, const Normalization& n) noexcept {
    if (!(n.max > n.min)) return 0.0;
    return std::clamp((raw - n.min) / (n.max - n.min), 0.0, 1.0);
}

ScoreSet anomaly_scores(const KdeModel& model, std::span<const std::string> ids,
                        std::span<const FeatureVector> queries, const std::optional<Normalization>& frozen) {
    if (queries.empty()) throw Error(Errc::EmptyQuerySet, "no queries to score");
    if (ids.size() != queries.size()) throw Error(Errc::InvalidDimensions, "ids and queries differ in length");
    ScoreSet set;
    set.entries.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        ScoreEntry e;
        e.id = ids[i];
        e.log_density = model.log_density(queries[i]);
        e.raw = raw_score_from_log_density(e.log_density);
        set.entries.push_back(std::move(e));
    }
    set.normalization = frozen ? *frozen : normalization_of(set.entries);
    for (auto& e : set.entries) e.anomaly_score = normalize(e.raw, set.normalization);
    return set;
}

ScoreSet ensemble_average(std::span<const ScoreSet> sets) {
    if (sets.empty()) throw Error(Errc::MisalignedEnsemble, "ensemble needs at least one score set");
    const ScoreSet& first = sets.front();
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < first.entries.size(); ++i) {
        if (!position.emplace(first.entries[i].id, i).second) {
            throw Error(Errc::MisalignedEnsemble, "duplicate id '" + first.entries[i].id + "'");
        }
    }
    // Accumulate offsets from the first set so identical inputs average exactly.
    ScoreSet out;
    out.entries = first.entries;
    std::vector<ScoreEntry> delta(first.entries.size());
    for (const ScoreSet& s : sets) {
        if (s.entries.size() != first.entries.size()) {
            throw Error(Errc::MisalignedEnsemble, "score sets differ in size");
        }
        std::vector<bool> seen(first.entries.size(), false);
        for (const ScoreEntry& e : s.entries) {
            auto it = position.find(e.id);
            if (it == position.end() || seen[it->second]) {
                throw Error(Errc::MisalignedEnsemble, "id '" + e.id + "' does not align across score sets");
            }
            seen[it->second] = true;
            const ScoreEntry& base = first.entries[it->second];
            ScoreEntry& d = delta[it->second];
            d.anomaly_score += e.anomaly_score - base.anomaly_score;
            d.raw += e.raw - base.raw;
            d.log_density += e.log_density - base.log_density;
        }
    }
    const double k = static_cast<double>(sets.size());
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        out.entries[i].anomaly_score += delta[i].anomaly_score / k;
        out.entries[i].raw += delta[i].raw / k;
        out.entries[i].log_density += delta[i].log_density / k;
    }
    out.normalization = {0.0, 1.0};
    return out;
}

}  // namespace anatpaste::kde
