#pragma once

// Flat `key = value` configuration covering every stage of the pipeline.
// Keys carry a section prefix (seg., aug., train., kde., eval., phantom.,
// data.); unknown keys are rejected.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "anatpaste/augment.hpp"
#include "anatpaste/classifier.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/phantom.hpp"

namespace anatpaste::app {

enum class NormalizationSource { query, validation };

struct DataConfig {
    std::string source = "phantom";  // phantom | dirs
    std::string train_dir;
    std::string val_dir;
    std::string test_dir;
    std::size_t n_train = 400;
    std::size_t n_val_normal = 100;
    std::size_t n_val_abnormal = 100;
    std::size_t n_test_normal = 100;
    std::size_t n_test_abnormal = 100;
};

struct SegSettings {
    int clahe_tiles = 8;
    double clahe_clip = 2.0;
    int open_radius = -1;  // -1: scale the default with the image size
    int dilate_radius = -1;
    double min_component_fraction = 0.02;
    int connectivity = 8;
    img::Polarity polarity = img::Polarity::below;

    seg::SegConfig resolve(int width, int height) const;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::size_t runs = 5;
    std::size_t parallel = 1;
    std::string out = "anatpaste_run";

    DataConfig data;
    phantom::PhantomConfig phantom;
    SegSettings seg;
    aug::Augmenter augment;
    nn::Descriptor descriptor;
    nn::TrainConfig train;
    bool select_best_val = false;
    double kde_bandwidth = 1.0;
    NormalizationSource normalization = NormalizationSource::query;
    bool write_features = true;
    bool group_metrics = true;

    /// Applies one assignment; throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Every key with its current value, one `key = value` per line, in a fixed order.
    /// Without execution keys, `parallel` and `out` are omitted; they never change results.
    std::string to_text(bool execution_keys = true) const;
    /// Cross-field checks (delegates to each module's validate()).
    void validate() const;
};

/// All known keys in documentation order.
std::vector<std::string> config_keys();

PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::string& path);

}  // namespace anatpaste::app
