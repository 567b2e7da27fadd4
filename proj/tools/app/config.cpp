#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "anatpaste/error.hpp"

namespace anatpaste::app {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw Error(Errc::ConfigError, fmt::format("{} = '{}': expected {}", key, value, expected));
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v == "inf") return std::numeric_limits<double>::infinity();
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || std::isnan(out)) bad_value(key, v, "a number");
    return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
    Int out{};
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
    std::vector<std::string_view> parts;
    while (!v.empty()) {
        const auto comma = v.find(',');
        parts.push_back(trim(v.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return parts;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

struct Key {
    std::string name;
    std::function<void(PipelineConfig&, std::string_view)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define AP_DOUBLE(KEY, FIELD)                                                                   \
    Key{KEY, [](PipelineConfig& c, std::string_view v) { c.FIELD = to_double(KEY, v); },         \
        [](const PipelineConfig& c) { return fmt_double(c.FIELD); }}
#define AP_INT(KEY, FIELD, TYPE)                                                                \
    Key{KEY, [](PipelineConfig& c, std::string_view v) { c.FIELD = to_int<TYPE>(KEY, v); },      \
        [](const PipelineConfig& c) { return fmt::format("{}", c.FIELD); }}
#define AP_BOOL(KEY, FIELD)                                                                     \
    Key{KEY, [](PipelineConfig& c, std::string_view v) { c.FIELD = to_bool(KEY, v); },           \
        [](const PipelineConfig& c) { return std::string(c.FIELD ? "true" : "false"); }}
#define AP_STRING(KEY, FIELD)                                                                   \
    Key{KEY, [](PipelineConfig& c, std::string_view v) { c.FIELD = std::string(v); },            \
        [](const PipelineConfig& c) { return c.FIELD; }}

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = {
        AP_INT("seed", seed, std::uint64_t),
        AP_INT("runs", runs, std::size_t),
        AP_INT("parallel", parallel, std::size_t),
        AP_STRING("out", out),

        AP_STRING("data.source", data.source),
        AP_STRING("data.train_dir", data.train_dir),
        AP_STRING("data.val_dir", data.val_dir),
        AP_STRING("data.test_dir", data.test_dir),
        AP_INT("data.n_train", data.n_train, std::size_t),
        AP_INT("data.n_val_normal", data.n_val_normal, std::size_t),
        AP_INT("data.n_val_abnormal", data.n_val_abnormal, std::size_t),
        AP_INT("data.n_test_normal", data.n_test_normal, std::size_t),
        AP_INT("data.n_test_abnormal", data.n_test_abnormal, std::size_t),

        AP_INT("phantom.seed", phantom.seed, std::uint64_t),
        AP_INT("phantom.width", phantom.width, int),
        AP_INT("phantom.height", phantom.height, int),
        AP_DOUBLE("phantom.background_level", phantom.background_level),
        AP_DOUBLE("phantom.body_level", phantom.body_level),
        AP_DOUBLE("phantom.lung_level", phantom.lung_level),
        AP_BOOL("phantom.rib_texture", phantom.rib_texture),
        AP_DOUBLE("phantom.rib_amplitude", phantom.rib_amplitude),
        AP_DOUBLE("phantom.noise_sigma", phantom.noise_sigma),
        AP_INT("phantom.lesion_count_min", phantom.lesion_count_min, int),
        AP_INT("phantom.lesion_count_max", phantom.lesion_count_max, int),
        AP_DOUBLE("phantom.lesion_amplitude_min", phantom.lesion_amplitude.lo),
        AP_DOUBLE("phantom.lesion_amplitude_max", phantom.lesion_amplitude.hi),
        AP_DOUBLE("phantom.lesion_radius_min", phantom.lesion_radius.lo),
        AP_DOUBLE("phantom.lesion_radius_max", phantom.lesion_radius.hi),

        AP_INT("seg.clahe_tiles", seg.clahe_tiles, int),
        AP_DOUBLE("seg.clahe_clip", seg.clahe_clip),
        Key{"seg.open_radius",
            [](PipelineConfig& c, std::string_view v) { c.seg.open_radius = v == "auto" ? -1 : to_int<int>("seg.open_radius", v); },
            [](const PipelineConfig& c) { return c.seg.open_radius < 0 ? std::string("auto") : std::to_string(c.seg.open_radius); }},
        Key{"seg.dilate_radius",
            [](PipelineConfig& c, std::string_view v) { c.seg.dilate_radius = v == "auto" ? -1 : to_int<int>("seg.dilate_radius", v); },
            [](const PipelineConfig& c) { return c.seg.dilate_radius < 0 ? std::string("auto") : std::to_string(c.seg.dilate_radius); }},
        AP_DOUBLE("seg.min_component_fraction", seg.min_component_fraction),
        AP_INT("seg.connectivity", seg.connectivity, int),
        Key{"seg.polarity",
            [](PipelineConfig& c, std::string_view v) {
                if (v == "below") c.seg.polarity = img::Polarity::below;
                else if (v == "above") c.seg.polarity = img::Polarity::above;
                else bad_value("seg.polarity", v, "below or above");
            },
            [](const PipelineConfig& c) { return std::string(c.seg.polarity == img::Polarity::below ? "below" : "above"); }},

        Key{"aug.mode",
            [](PipelineConfig& c, std::string_view v) {
                try {
                    c.augment.mode = aug::parse_mode(v);
                } catch (const Error&) {
                    bad_value("aug.mode", v, "anat, anat-noseg, anat-noblur or cutpaste-scar");
                }
            },
            [](const PipelineConfig& c) { return std::string(aug::to_string(c.augment.mode)); }},
        AP_DOUBLE("aug.area_ratio_min", augment.anat.area_ratio_min),
        AP_DOUBLE("aug.area_ratio_max", augment.anat.area_ratio_max),
        AP_DOUBLE("aug.aspect_min", augment.anat.aspect_min),
        AP_DOUBLE("aug.aspect_max", augment.anat.aspect_max),
        AP_DOUBLE("aug.fill_min", augment.anat.fill_min),
        AP_DOUBLE("aug.fill_max", augment.anat.fill_max),
        AP_DOUBLE("aug.blur_radius_min", augment.anat.blur_radius_min),
        AP_DOUBLE("aug.blur_radius_max", augment.anat.blur_radius_max),
        Key{"aug.shapes",
            [](PipelineConfig& c, std::string_view v) {
                std::vector<img::ShapeKind> kinds;
                for (auto part : split_list(v)) {
                    if (part == "ellipse") kinds.push_back(img::ShapeKind::ellipse);
                    else if (part == "rectangle") kinds.push_back(img::ShapeKind::rectangle);
                    else bad_value("aug.shapes", v, "a comma list of ellipse, rectangle");
                }
                c.augment.anat.shape_kinds = kinds;
            },
            [](const PipelineConfig& c) {
                std::vector<std::string> names;
                for (auto k : c.augment.anat.shape_kinds) names.push_back(k == img::ShapeKind::ellipse ? "ellipse" : "rectangle");
                return fmt::format("{}", fmt::join(names, ","));
            }},
        AP_INT("aug.max_placement_attempts", augment.anat.max_placement_attempts, int),
        AP_INT("aug.max_crop_attempts", augment.anat.max_crop_attempts, int),
        AP_INT("aug.scar_width_min", augment.scar.width_min, int),
        AP_INT("aug.scar_width_max", augment.scar.width_max, int),
        AP_INT("aug.scar_length_min", augment.scar.length_min, int),
        AP_INT("aug.scar_length_max", augment.scar.length_max, int),
        AP_DOUBLE("aug.scar_max_rotation", augment.scar.max_rotation_deg),

        AP_INT("train.epochs", train.epochs, std::size_t),
        AP_INT("train.batch_size", train.batch_size, std::size_t),
        Key{"train.batch_counting",
            [](PipelineConfig& c, std::string_view v) {
                if (v == "normals") c.train.batch_counting = nn::BatchCounting::normals;
                else if (v == "samples") c.train.batch_counting = nn::BatchCounting::samples;
                else bad_value("train.batch_counting", v, "normals or samples");
            },
            [](const PipelineConfig& c) {
                return std::string(c.train.batch_counting == nn::BatchCounting::normals ? "normals" : "samples");
            }},
        AP_BOOL("train.standardize_inputs", train.standardize_inputs),
        AP_DOUBLE("train.input_std_floor", train.input_std_floor),
        AP_DOUBLE("train.lr", train.base_lr),
        AP_DOUBLE("train.momentum", train.momentum),
        AP_DOUBLE("train.weight_decay", train.weight_decay),
        Key{"train.hidden",
            [](PipelineConfig& c, std::string_view v) {
                std::vector<std::size_t> sizes;
                for (auto part : split_list(v)) sizes.push_back(to_int<std::size_t>("train.hidden", part));
                if (sizes.empty()) bad_value("train.hidden", v, "a comma list of layer widths");
                c.train.hidden = sizes;
            },
            [](const PipelineConfig& c) { return fmt::format("{}", fmt::join(c.train.hidden, ",")); }},
        AP_INT("train.grid", descriptor.grid_size, int),
        AP_INT("train.bins", descriptor.histogram_bins, int),
        AP_BOOL("train.select_best_val", select_best_val),

        AP_DOUBLE("kde.bandwidth", kde_bandwidth),
        Key{"kde.normalization",
            [](PipelineConfig& c, std::string_view v) {
                if (v == "query") c.normalization = NormalizationSource::query;
                else if (v == "validation") c.normalization = NormalizationSource::validation;
                else bad_value("kde.normalization", v, "query or validation");
            },
            [](const PipelineConfig& c) {
                return std::string(c.normalization == NormalizationSource::query ? "query" : "validation");
            }},

        AP_BOOL("eval.write_features", write_features),
        AP_BOOL("eval.group_metrics", group_metrics),
    };
    return keys;
}

#undef AP_DOUBLE
#undef AP_INT
#undef AP_BOOL
#undef AP_STRING

}  // namespace

seg::SegConfig SegSettings::resolve(int width, int height) const {
    seg::SegConfig cfg = seg::SegConfig::defaults_for(width, height);
    cfg.clahe = {clahe_tiles, clahe_tiles, clahe_clip};
    if (open_radius >= 0) cfg.open_radius = open_radius;
    if (dilate_radius >= 0) cfg.dilate_radius = dilate_radius;
    cfg.min_component_fraction = min_component_fraction;
    cfg.connectivity = connectivity == 4 ? img::Connectivity::four : img::Connectivity::eight;
    cfg.polarity = polarity;
    return cfg;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
    for (const Key& k : key_table()) {
        if (k.name == key) {
            k.set(*this, trim(value));
            return;
        }
    }
    throw Error(Errc::ConfigError, fmt::format("unknown configuration key '{}'", key));
}

std::string PipelineConfig::to_text(bool execution_keys) const {
    std::string out;
    for (const Key& k : key_table()) {
        if (!execution_keys && (k.name == "parallel" || k.name == "out")) continue;
        out += fmt::format("{} = {}\n", k.name, k.get(*this));
    }
    return out;
}

void PipelineConfig::validate() const {
    auto wrap = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            if (e.code() == Errc::ConfigError) throw;
            throw Error(Errc::ConfigError, std::string(e.detail()));
        }
    };
    if (runs < 1) throw Error(Errc::ConfigError, "runs must be >= 1");
    if (parallel < 1) throw Error(Errc::ConfigError, "parallel must be >= 1");
    if (data.source != "phantom" && data.source != "dirs") {
        throw Error(Errc::ConfigError, "data.source must be phantom or dirs");
    }
    if (data.source == "dirs" && (data.train_dir.empty() || data.val_dir.empty() || data.test_dir.empty())) {
        throw Error(Errc::ConfigError, "data.source = dirs needs data.train_dir, data.val_dir and data.test_dir");
    }
    if (seg.connectivity != 4 && seg.connectivity != 8) throw Error(Errc::ConfigError, "seg.connectivity must be 4 or 8");
    if (seg.clahe_tiles < 1) throw Error(Errc::ConfigError, "seg.clahe_tiles must be >= 1");
    if (!(kde_bandwidth > 0.0)) throw Error(Errc::ConfigError, "kde.bandwidth must be > 0");
    if (descriptor.grid_size < 1 || descriptor.histogram_bins < 1) {
        throw Error(Errc::ConfigError, "train.grid and train.bins must be >= 1");
    }
    wrap([&] { phantom.validate(); });
    wrap([&] { seg.resolve(256, 256).validate(); });
    wrap([&] { augment.anat.validate(); });
    wrap([&] { augment.scar.validate(); });
    wrap([&] { train.validate(); });
}

std::vector<std::string> config_keys() {
    std::vector<std::string> names;
    for (const Key& k : key_table()) names.push_back(k.name);
    return names;
}

PipelineConfig parse_config(std::string_view text) {
    PipelineConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(Errc::ConfigError, fmt::format("line {}: expected 'key = value'", line_no));
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(Errc::ConfigError, fmt::format("line {}: {}", line_no, e.detail()));
        }
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, fmt::format("cannot open config file '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace anatpaste::app
