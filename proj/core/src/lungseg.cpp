#include "anatpaste/lungseg.hpp"

#include <algorithm>
#include <cmath>

#include "anatpaste/error.hpp"

namespace anatpaste::seg {

SegConfig SegConfig::defaults_for(int width, int height) {
    SegConfig cfg;
    const double scale = std::min(width, height) / 256.0;
    cfg.open_radius = static_cast<int>(std::lround(2 * scale));
    cfg.dilate_radius = static_cast<int>(std::lround(6 * scale));
    return cfg;
}

void SegConfig::validate() const {
    if (!(min_component_fraction > 0.0 && min_component_fraction < 1.0)) {
        throw Error(Errc::InvalidArgument, "min_component_fraction must lie in (0,1)");
    }
    if (open_radius < 0 || dilate_radius < 0) {
        throw Error(Errc::InvalidArgument, "morphology radii must be >= 0");
    }
    if (clahe.tiles_x < 1 || clahe.tiles_y < 1 || !(clahe.clip_limit > 0.0)) {
        throw Error(Errc::InvalidArgument, "invalid CLAHE parameters");
    }
}

BinaryMask filter_small_components(const LabelMap& labels, std::size_t min_size) {
    BinaryMask out(labels.width, labels.height);
    auto dst = out.pixels();
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const auto l = static_cast<std::size_t>(labels.labels[i]);
        if (l != 0 && labels.component_sizes[l] >= min_size) dst[i] = 1;
    }
    return out;
}

SegResult segment_lungs(const GrayImage& img, const SegConfig& cfg, bool keep_snapshots) {
    if (img.empty()) throw Error(Errc::InvalidDimensions, "segment_lungs: empty image");
    cfg.validate();

    SegResult result;
    GrayImage equalized = img::clahe(img, cfg.clahe);
    int threshold = 0;
    try {
        threshold = img::otsu_threshold(equalized);
    } catch (const Error& e) {
        if (e.code() != Errc::Degenerate) throw;
        result.mask = BinaryMask(img.width(), img.height());
        result.degenerate = true;
        return result;
    }

    BinaryMask binarized = img::binarize(equalized, threshold, cfg.polarity);
    BinaryMask opened = img::morph_open(binarized, img::StructuringElement::disk(cfg.open_radius));
    BinaryMask cleared = img::clear_border(opened, cfg.connectivity);
    BinaryMask dilated = img::dilate(cleared, img::StructuringElement::disk(cfg.dilate_radius));

    const LabelMap labels = img::connected_components(dilated, cfg.connectivity);
    const double frame = static_cast<double>(img.width()) * img.height();
    const auto min_size = static_cast<std::size_t>(std::ceil(cfg.min_component_fraction * frame));
    result.mask = filter_small_components(labels, min_size);
    result.components_kept = static_cast<std::size_t>(
        std::count_if(labels.component_sizes.begin() + 1, labels.component_sizes.end(),
                      [&](std::size_t s) { return s >= min_size; }));

    if (keep_snapshots) {
        result.snapshots = SegSnapshots{std::move(equalized), std::move(binarized), std::move(opened),
                                        std::move(cleared), std::move(dilated)};
    }
    return result;
}

}  // namespace anatpaste::seg
