#pragma once

// End-to-end experiment: train the pair classifier, embed with its last hidden
// layer, score validation and test images by kernel density against the
// training normals, pick the best-F1 threshold on validation and report test
// metrics per run and for the ensemble of runs.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "anatpaste/classifier.hpp"
#include "anatpaste/metrics.hpp"
#include "anatpaste/scoring.hpp"
#include "config.hpp"

namespace anatpaste::app {

struct Split {
    std::vector<std::string> ids;
    std::vector<GrayImage> images;
    std::vector<int> labels;
    std::vector<std::string> groups;  // lesion stratum of abnormal phantoms

    std::size_t size() const noexcept { return ids.size(); }
};

struct Corpus {
    Split train;
    Split val;
    Split test;
    std::string manifest;  // phantom corpora only
};

using Logger = std::function<void(std::string_view)>;

/// Generates the phantom corpus or reads the configured directories. Each
/// directory holds manifest.csv and images/<id>.png (or .pgm).
Corpus load_corpus(const PipelineConfig& cfg);

/// Throws InvalidArgument when two splits share an id.
void check_disjoint(const Corpus& corpus);

struct RunResult {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    nn::TrainResult training;
    std::vector<nn::FeatureVector> train_embedding;
    std::vector<nn::FeatureVector> val_embedding;
    std::vector<nn::FeatureVector> test_embedding;
    kde::ScoreSet val_scores;
    kde::ScoreSet test_scores;
    eval::MetricsReport val_report;
    eval::MetricsReport test_report;
    std::map<std::string, eval::MetricsReport> test_groups;
};

struct EnsembleResult {
    kde::ScoreSet val_scores;
    kde::ScoreSet test_scores;
    eval::MetricsReport val_report;
    eval::MetricsReport test_report;
    std::map<std::string, eval::MetricsReport> test_groups;
};

struct PipelineResult {
    std::vector<RunResult> runs;
    EnsembleResult ensemble;
};

std::vector<nn::FeatureVector> embed(const nn::MlpModel& model, const std::vector<nn::FeatureVector>& descriptors,
                                     std::size_t workers);

/// Labels and groups of a split joined to a score set by position.
std::vector<eval::LabeledScore> labeled(const kde::ScoreSet& scores, const Split& split);

PipelineResult run_pipeline(const PipelineConfig& cfg, const Corpus& corpus, const Logger& log = {});

/// Writes config.txt, manifest.csv, run_XX/ and ensemble/ directories and the
/// summary files under `dir`.
void write_artifacts(const std::string& dir, const PipelineConfig& cfg, const Corpus& corpus,
                     const PipelineResult& result);

/// Metrics as `key: value` lines and as CSV with one row per scope.
std::string metrics_text(const eval::MetricsReport& report,
                         const std::map<std::string, eval::MetricsReport>& groups);
std::string metrics_csv(const eval::MetricsReport& report, const std::map<std::string, eval::MetricsReport>& groups);

}  // namespace anatpaste::app
