#pragma once

// Text tables exchanged between subcommands. Doubles are written in the
// shortest form that parses back to the same value.

#include <string>
#include <vector>

#include "anatpaste/classifier.hpp"
#include "anatpaste/metrics.hpp"
#include "anatpaste/scoring.hpp"

namespace anatpaste::app {

struct FeatureTable {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
};

struct ScoreRow {
    std::string id;
    double raw = 0.0;
    double score = 0.0;
    int label = 0;
};

/// Header `id,f0,f1,...`.
std::string features_csv(const FeatureTable& table);
FeatureTable parse_features_csv(std::string_view text);

/// Header `id,raw,score,label`; label is 0, 1, or -1 when unknown.
std::string scores_csv(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> parse_scores_csv(std::string_view text);

/// Header `epoch,lr,mean_loss,loss_terms,batches`.
std::string train_log_csv(const std::vector<nn::EpochLog>& log);

std::string roc_csv(const std::vector<eval::RocPoint>& roc);

/// Splits on commas; no quoting is supported because no field needs it.
std::vector<std::string_view> split_csv_line(std::string_view line);

double parse_double_field(std::string_view field, std::size_t line_no);

std::string read_file(const std::string& path);
/// Writes through a temporary name and renames, so readers never see a partial file.
void write_file(const std::string& path, std::string_view content);

}  // namespace anatpaste::app
