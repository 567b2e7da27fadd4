#include "anatpaste/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "anatpaste/error.hpp"

namespace anatpaste::aug {

void AnatPasteConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::InvalidArgument, "AnatPasteConfig: " + what); };
    if (!(area_ratio_min > 0.0 && area_ratio_min <= area_ratio_max && area_ratio_max <= 1.0)) {
        bad("area ratio range must satisfy 0 < min <= max <= 1");
    }
    if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) bad("aspect range must be positive");
    if (!(fill_min >= 0.0 && fill_min <= fill_max && fill_max <= 1.0)) bad("fill range must lie in [0,1]");
    if (!(blur_radius_min >= 0.0 && blur_radius_min <= blur_radius_max && std::isfinite(blur_radius_max))) {
        bad("blur radius range must lie in [0,inf)");
    }
    if (shape_kinds.empty()) bad("no shape kinds enabled");
    if (max_placement_attempts < 1 || max_crop_attempts < 1) bad("attempt limits must be >= 1");
}

void ScarConfig::validate() const {
    if (width_min < 1 || width_min > width_max || length_min < 1 || length_min > length_max ||
        !(max_rotation_deg >= 0.0) || max_attempts < 1) {
        throw Error(Errc::InvalidArgument, "ScarConfig: invalid ranges");
    }
}

GrayImage crop_to_frame_patch(const GrayImage& img, const Rect& src, int dst_x, int dst_y) {
    const int w = img.width();
    const int h = img.height();
    const Rect dst{dst_x, dst_y, src.width, src.height};
    if (!src.inside(w, h) || !dst.inside(w, h)) {
        throw Error(Errc::InvalidPlacement, "crop_to_frame_patch: rectangle leaves the frame");
    }
    GrayImage out(w, h);
    for (int dy = 0; dy < src.height; ++dy) {
        auto from = img.pixels().subspan(static_cast<std::size_t>(src.y + dy) * static_cast<std::size_t>(w) +
                                             static_cast<std::size_t>(src.x),
                                         static_cast<std::size_t>(src.width));
        auto to = out.pixels().subspan(static_cast<std::size_t>(dst_y + dy) * static_cast<std::size_t>(w) +
                                           static_cast<std::size_t>(dst_x),
                                       static_cast<std::size_t>(src.width));
        std::copy(from.begin(), from.end(), to.begin());
    }
    return out;
}

GrayImage make_blur_shape(const img::Shape& shape, double fill, double blur_radius, int width,
                          int height) {
    GrayImage raster = img::rasterize_shape(shape, fill, width, height);
    if (blur_radius == 0.0) return raster;
    const auto kernel = img::gaussian_kernel(blur_radius);
    const int half = static_cast<int>(kernel.size() / 2);
    const auto [lo, hi] = std::minmax_element(raster.pixels().begin(), raster.pixels().end());

    // Outside the support grown by the kernel half-width the blur is exactly
    // zero, as long as the reflected border does not wrap more than once.
    img::PixelRect window{0, 0, width - 1, height - 1};
    if (half < std::min(width, height)) {
        const img::PixelRect b = shape.pixel_bounds();
        window = {b.x0 - half, b.y0 - half, b.x1 + half, b.y1 + half};
    }
    return img::gaussian_blur_window(raster, blur_radius, window, *lo, *hi);
}

GrayImage compose(const GrayImage& normal, const GrayImage& patch, const GrayImage& mask) {
    if (!normal.same_shape(patch) || !normal.same_shape(mask)) {
        throw Error(Errc::InvalidDimensions, "compose: operand dimensions differ");
    }
    GrayImage out(normal.width(), normal.height());
    auto n = normal.pixels();
    auto p = patch.pixels();
    auto m = mask.pixels();
    auto o = out.pixels();
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (!(m[i] >= 0.0 && m[i] <= 1.0)) throw Error(Errc::InvalidArgument, "compose: mask outside [0,1]");
        o[i] = std::clamp(n[i] * (1.0 - m[i]) + p[i] * m[i], 0.0, 1.0);
    }
    return out;
}

namespace {

bool touches_lung(const img::Shape& shape, const BinaryMask& lung) {
    const img::PixelRect b = shape.pixel_bounds();
    for (int y = b.y0; y <= b.y1; ++y) {
        for (int x = b.x0; x <= b.x1; ++x) {
            if (lung.at(x, y) && shape.contains(x, y)) return true;
        }
    }
    return false;
}

}  // namespace

PastePlacement sample_placement(const GrayImage& img, const BinaryMask& lung,
                                const AnatPasteConfig& cfg, Rng& rng, Ablation ablation) {
    cfg.validate();
    if (img.empty()) throw Error(Errc::InvalidDimensions, "anat_paste: empty image");
    const bool constrain = ablation != Ablation::no_segmentation;
    if (constrain) {
        if (lung.width() != img.width() || lung.height() != img.height()) {
            throw Error(Errc::InvalidDimensions, "anat_paste: lung mask and image differ in size");
        }
        if (!lung.any()) throw Error(Errc::NoLungRegion, "anat_paste: lung mask is empty");
    }

    const int w = img.width();
    const int h = img.height();
    const double frame = static_cast<double>(w) * h;
    for (int crop = 0; crop < cfg.max_crop_attempts; ++crop) {
        const double area = rng.uniform(cfg.area_ratio_min, cfg.area_ratio_max) * frame;
        const double aspect = rng.log_uniform(cfg.aspect_min, cfg.aspect_max);
        const int cw = static_cast<int>(std::lround(std::sqrt(area * aspect)));
        const int ch = static_cast<int>(std::lround(std::sqrt(area / aspect)));
        // A shape with half axes >= 1 strictly inside needs at least 4 pixels per side.
        if (cw < 4 || ch < 4 || cw > w || ch > h) continue;
        PastePlacement p;
        p.src = {static_cast<int>(rng.uniform_int(0, w - cw)), static_cast<int>(rng.uniform_int(0, h - ch)), cw, ch};
        for (int attempt = 0; attempt < cfg.max_placement_attempts; ++attempt) {
            p.dst = {static_cast<int>(rng.uniform_int(0, w - cw)), static_cast<int>(rng.uniform_int(0, h - ch)), cw, ch};
            const auto kind_index = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(cfg.shape_kinds.size()) - 1));
            p.shape.kind = cfg.shape_kinds[kind_index];
            p.shape.half_a = rng.uniform(1.0, (cw - 2) / 2.0);
            p.shape.half_b = rng.uniform(1.0, (ch - 2) / 2.0);
            // Half a pixel of clearance keeps the bounding box strictly inside.
            p.shape.cx = rng.uniform(p.dst.x + p.shape.half_a + 0.5, p.dst.x + cw - 1.5 - p.shape.half_a);
            p.shape.cy = rng.uniform(p.dst.y + p.shape.half_b + 0.5, p.dst.y + ch - 1.5 - p.shape.half_b);
            if (constrain && !touches_lung(p.shape, lung)) continue;
            p.fill = rng.uniform(cfg.fill_min, cfg.fill_max);
            p.blur_radius = rng.uniform(cfg.blur_radius_min, cfg.blur_radius_max);
            return p;
        }
    }
    throw Error(Errc::NoValidPlacement, "anat_paste: no placement satisfied the lung and size constraints");
}

AugmentOutcome apply_placement(const GrayImage& img, const BinaryMask& lung,
                               const PastePlacement& placement, Ablation ablation) {
    const int w = img.width();
    const int h = img.height();
    const bool use_lung = ablation != Ablation::no_segmentation;
    if (use_lung && (lung.width() != w || lung.height() != h)) {
        throw Error(Errc::InvalidDimensions, "anat_paste: lung mask and image differ in size");
    }
    AugmentOutcome out;
    out.patch_src_rect = placement.src;
    out.patch_dst_rect = placement.dst;
    out.shape = placement.shape;
    out.fill_value = placement.fill;
    out.blur_radius = ablation == Ablation::no_blur ? 0.0 : placement.blur_radius;

    const GrayImage patch = crop_to_frame_patch(img, placement.src, placement.dst.x, placement.dst.y);
    out.soft_mask = make_blur_shape(placement.shape, placement.fill, out.blur_radius, w, h);
    if (use_lung) {
        auto m = out.soft_mask.pixels();
        auto l = lung.pixels();
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!l[i]) m[i] = 0.0;
        }
    }
    out.anomaly_image = compose(img, patch, out.soft_mask);
    return out;
}

AugmentOutcome anat_paste_ablated(const GrayImage& img, const BinaryMask& lung,
                                  const AnatPasteConfig& cfg, Rng& rng, Ablation ablation) {
    const PastePlacement placement = sample_placement(img, lung, cfg, rng, ablation);
    return apply_placement(img, lung, placement, ablation);
}

AugmentOutcome anat_paste(const GrayImage& img, const BinaryMask& lung, const AnatPasteConfig& cfg,
                          Rng& rng) {
    return anat_paste_ablated(img, lung, cfg, rng, Ablation::none);
}

AugmentOutcome cut_paste_scar(const GrayImage& img, const ScarConfig& cfg, Rng& rng) {
    cfg.validate();
    if (img.empty()) throw Error(Errc::InvalidDimensions, "cut_paste_scar: empty image");
    const int w = img.width();
    const int h = img.height();

    const int sw = static_cast<int>(rng.uniform_int(cfg.width_min, cfg.width_max));
    const int sl = static_cast<int>(rng.uniform_int(cfg.length_min, cfg.length_max));
    const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    if (sw > w || sl > h) throw Error(Errc::NoValidPlacement, "cut_paste_scar: scar larger than the frame");

    const double theta = angle * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double ex = 0.5 * (std::abs(cos_t) * sw + std::abs(sin_t) * sl);
    const double ey = 0.5 * (std::abs(sin_t) * sw + std::abs(cos_t) * sl);
    const double off_x = 0.5 * (sw - 1);
    const double off_y = 0.5 * (sl - 1);

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const Rect src{static_cast<int>(rng.uniform_int(0, w - sw)), static_cast<int>(rng.uniform_int(0, h - sl)), sw, sl};
        const auto lo_x = static_cast<std::int64_t>(std::ceil(ex - off_x));
        const auto hi_x = static_cast<std::int64_t>(std::floor(w - 1 - ex - off_x));
        const auto lo_y = static_cast<std::int64_t>(std::ceil(ey - off_y));
        const auto hi_y = static_cast<std::int64_t>(std::floor(h - 1 - ey - off_y));
        if (lo_x > hi_x || lo_y > hi_y) continue;
        const double cx = static_cast<double>(rng.uniform_int(lo_x, hi_x)) + off_x;
        const double cy = static_cast<double>(rng.uniform_int(lo_y, hi_y)) + off_y;

        AugmentOutcome out;
        out.anomaly_image = img;
        out.soft_mask = GrayImage(w, h);
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - ex)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + ex)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - ey)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + ey)));
        int bx0 = w, by0 = h, bx1 = -1, by1 = -1;  // bounding box of the pixels written
        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                const double dx = px - cx;
                const double dy = py - cy;
                // Inverse rotation back into the strip's own frame, nearest neighbor.
                const double u = cos_t * dx + sin_t * dy + off_x;
                const double v = -sin_t * dx + cos_t * dy + off_y;
                const long iu = std::lround(u);
                const long iv = std::lround(v);
                if (iu < 0 || iv < 0 || iu >= sw || iv >= sl) continue;
                out.anomaly_image.at(px, py) = img.at(src.x + static_cast<int>(iu), src.y + static_cast<int>(iv));
                out.soft_mask.at(px, py) = 1.0;
                bx0 = std::min(bx0, px);
                bx1 = std::max(bx1, px);
                by0 = std::min(by0, py);
                by1 = std::max(by1, py);
            }
        }
        out.patch_src_rect = src;
        out.patch_dst_rect = {bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1};
        out.shape = {img::ShapeKind::rectangle, cx, cy, 0.5 * sw, 0.5 * sl};
        out.fill_value = 1.0;
        out.blur_radius = 0.0;
        out.rotation_deg = angle;
        return out;
    }
    throw Error(Errc::NoValidPlacement, "cut_paste_scar: placement attempts exhausted");
}

Mode parse_mode(std::string_view text) {
    if (text == "anat") return Mode::anat;
    if (text == "anat-noseg") return Mode::anat_noseg;
    if (text == "anat-noblur") return Mode::anat_noblur;
    if (text == "cutpaste-scar") return Mode::cutpaste_scar;
    throw Error(Errc::InvalidArgument, "unknown augmentation mode '" + std::string(text) + "'");
}

std::string_view to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::anat: return "anat";
        case Mode::anat_noseg: return "anat-noseg";
        case Mode::anat_noblur: return "anat-noblur";
        case Mode::cutpaste_scar: return "cutpaste-scar";
    }
    return "anat";
}

AugmentOutcome Augmenter::operator()(const GrayImage& img, const BinaryMask& lung, Rng& rng) const {
    switch (mode) {
        case Mode::anat: return anat_paste(img, lung, anat, rng);
        case Mode::anat_noseg: return anat_paste_ablated(img, lung, anat, rng, Ablation::no_segmentation);
        case Mode::anat_noblur: return anat_paste_ablated(img, lung, anat, rng, Ablation::no_blur);
        case Mode::cutpaste_scar: return cut_paste_scar(img, scar, rng);
    }
    throw Error(Errc::InvalidArgument, "unknown augmentation mode");
}

}  // namespace anatpaste::aug
