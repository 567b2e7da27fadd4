#pragma once

#include <cstddef>
#include <optional>

#include "anatpaste/image.hpp"
#include "anatpaste/imgcore.hpp"

namespace anatpaste::seg {

struct SegConfig {
    img::ClaheParams clahe{};
    int open_radius = 2;
    int dilate_radius = 6;
    /// Components smaller than this fraction of the frame are dropped.
    double min_component_fraction = 0.02;
    img::Connectivity connectivity = img::Connectivity::eight;
    img::Polarity polarity = img::Polarity::below;

    /// Defaults with radii scaled linearly by min(width, height) / 256.
    static SegConfig defaults_for(int width, int height);
    void validate() const;
};

struct SegSnapshots {
    GrayImage equalized;
    BinaryMask binarized;
    BinaryMask opened;
    BinaryMask cleared;
    BinaryMask dilated;
};

struct SegResult {
    BinaryMask mask;
    std::optional<SegSnapshots> snapshots;
    std::size_t components_kept = 0;
    bool degenerate = false;
};

/// Lung-field mask: CLAHE, Otsu binarization, opening, border clearing,
/// dilation, then removal of components smaller than the size threshold.
/// A constant image yields an empty mask flagged as degenerate.
SegResult segment_lungs(const GrayImage& img, const SegConfig& cfg, bool keep_snapshots = false);

/// Union of the components whose size is at least `min_size` pixels.
BinaryMask filter_small_components(const LabelMap& labels, std::size_t min_size);

}  // namespace anatpaste::seg
