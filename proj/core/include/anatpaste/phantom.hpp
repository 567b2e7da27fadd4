#pragma once

// Synthetic chest-radiograph-like images with ground-truth lung and lesion
// masks. Normal and abnormal samples drawn for the same (seed, index) share
// geometry, texture and noise, so they differ only where lesions were added.

#include <cstdint>
#include <string>
#include <vector>

#include "anatpaste/image.hpp"

namespace anatpaste::phantom {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct PhantomConfig {
    int width = 256;
    int height = 256;
    // Geometry as fractions of width (x) and height (y).
    Range body_half_x{0.40, 0.46};
    Range body_half_y{0.42, 0.47};
    Range lung_half_x{0.12, 0.15};
    Range lung_half_y{0.26, 0.31};
    Range lung_offset_x{0.19, 0.22};  // lung center distance from the body midline
    Range center_jitter{-0.02, 0.02};
    double background_level = 0.05;
    double body_level = 0.75;
    double lung_level = 0.25;
    bool rib_texture = true;
    double rib_amplitude = 0.04;
    double rib_period = 22.0;  // pixels at 256 rows, scaled with height
    double noise_sigma = 0.02;
    int lesion_count_min = 1;
    int lesion_count_max = 3;
    Range lesion_amplitude{0.3, 0.5};
    Range lesion_radius{8.0, 20.0};  // pixels
    std::uint64_t seed = 0;
    int max_attempts = 64;

    void validate() const;
};

enum class SampleClass { normal, abnormal };

std::string_view to_string(SampleClass c) noexcept;

struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double half_x = 0.0;
    double half_y = 0.0;
};

/// Gaussian bump with sigma = radius / 2; its ground truth is the disk of
/// `radius` intersected with the lungs.
struct Lesion {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    double amplitude = 0.0;
};

struct PhantomSample {
    std::string id;
    std::uint64_t index = 0;
    std::uint64_t seed = 0;  // per-sample seed derived from (cfg.seed, index)
    SampleClass sample_class = SampleClass::normal;
    int label = 0;
    GrayImage image;
    BinaryMask gt_lung;
    BinaryMask gt_lesion;
    Ellipse body;
    Ellipse lungs[2];
    std::vector<Lesion> lesions;
};

/// Throws GenerationFailed if no feasible geometry or lesion placement is
/// found within cfg.max_attempts draws.
PhantomSample generate(const PhantomConfig& cfg, std::uint64_t index, SampleClass sample_class);

/// Normals take indices first_index..first_index+n_normal-1, abnormals follow.
std::vector<PhantomSample> generate_corpus(const PhantomConfig& cfg, std::size_t n_normal,
                                           std::size_t n_abnormal, std::uint64_t first_index = 0,
                                           std::size_t workers = 1);

/// Lesion size stratum used for grouped metrics ("small" below 14 px radius).
std::string lesion_stratum(const PhantomSample& sample);

/// Manifest CSV: id,class,seed,label,lesion_count,lesions where lesions is a
/// ';'-separated list of cx:cy:radius:amplitude.
std::string manifest_csv(const std::vector<PhantomSample>& samples);

}  // namespace anatpaste::phantom
