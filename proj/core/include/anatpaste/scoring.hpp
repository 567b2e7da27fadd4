#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anatpaste::kde {

using FeatureVector = std::vector<double>;

/// Gaussian kernel density over a standardized reference set:
/// A(z) = (1/N) * sum_i exp(-||(z - z_i) / h||^2 / 2), so A lies in (0, 1].
class KdeModel {
public:
    /// Per-dimension std is floored at max(kStdFloor, kRelativeStdFloor * largest std).
    /// Without the relative term a unit that never fires on the references
    /// would turn any activation on a query into an unbounded distance.
    static constexpr double kStdFloor = 1e-8;
    static constexpr double kRelativeStdFloor = 0.01;

    /// Throws EmptyReferenceSet for no references, InvalidArgument for a
    /// non-positive bandwidth and InvalidDimensions for ragged input.
    static KdeModel fit(std::span<const FeatureVector> references, double bandwidth = 1.0);

    std::size_t size() const noexcept { return count_; }
    std::size_t dimension() const noexcept { return dim_; }
    double bandwidth() const noexcept { return bandwidth_; }
    const std::vector<double>& mean() const noexcept { return mean_; }
    const std::vector<double>& stddev() const noexcept { return std_; }
    /// Standardized reference i; the bandwidth is applied at evaluation time.
    std::span<const double> reference(std::size_t i) const;

    /// z mapped with the stored per-dimension mean and std.
    FeatureVector standardize(std::span<const double> z) const;

    /// A(z) summed directly; can underflow to 0 far from every reference.
    double density(std::span<const double> z) const;
    /// log A(z) via log-sum-exp; finite everywhere.
    double log_density(std::span<const double> z) const;

private:
    std::size_t count_ = 0;
    std::size_t dim_ = 0;
    double bandwidth_ = 1.0;
    std::vector<double> mean_;
    std::vector<double> std_;
    std::vector<double> refs_;  // count_ x dim_, standardized
};

struct ScoreEntry {
    std::string id;
    double log_density = 0.0;
    double raw = 0.0;            // -log A(z), finite even where A underflows
    double anomaly_score = 0.0;  // min-max normalized raw, in [0,1]
};

struct Normalization {
    double min = 0.0;
    double max = 0.0;
};

struct ScoreSet {
    std::vector<ScoreEntry> entries;
    Normalization normalization;
};

/// -log A from log A. Working in log space keeps distinct far-away queries
/// distinct; an additive floor on A would tie them all at its logarithm.
double raw_score_from_log_density(double log_density) noexcept;

/// Min and max of the raw scores.
Normalization normalization_of(std::span<const ScoreEntry> entries);

/// (raw - min) / (max - min) clamped to [0,1]; 0 when max == min.
double normalize(double raw, const Normalization& n) noexcept;

/// Scores queries against the model. Normalization uses the query population
/// unless `frozen` supplies bounds (e.g. from a validation set).
ScoreSet anomaly_scores(const KdeModel& model, std::span<const std::string> ids,
                        std::span<const FeatureVector> queries,
                        const std::optional<Normalization>& frozen = std::nullopt);

/// Per-id mean of anomaly_score (and raw) across aligned score sets. Entries
/// are matched by id; every set must carry the same ids. Output keeps the id
/// order of the first set; averaging identical sets returns them unchanged.
ScoreSet ensemble_average(std::span<const ScoreSet> sets);

}  // namespace anatpaste::kde
