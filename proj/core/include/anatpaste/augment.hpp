#pragma once

#include <string_view>
#include <vector>

#include "anatpaste/image.hpp"
#include "anatpaste/imgcore.hpp"
#include "anatpaste/rng.hpp"

namespace anatpaste::aug {

/// Axis-aligned pixel rectangle with top-left corner (x, y).
struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool inside(int frame_w, int frame_h) const noexcept {
        return width >= 1 && height >= 1 && x >= 0 && y >= 0 && x + width <= frame_w &&
               y + height <= frame_h;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct AnatPasteConfig {
    double area_ratio_min = 0.02;
    double area_ratio_max = 0.15;
    double aspect_min = 0.3;  // width / height, sampled log-uniformly
    double aspect_max = 3.3;
    double fill_min = 0.59;
    double fill_max = 1.0;
    double blur_radius_min = 0.0;
    double blur_radius_max = 15.0;
    std::vector<img::ShapeKind> shape_kinds{img::ShapeKind::ellipse, img::ShapeKind::rectangle};
    int max_placement_attempts = 100;
    int max_crop_attempts = 10;

    void validate() const;
};

/// CutPaste-Scar: a thin rotated strip cut from one place and hard-pasted elsewhere.
struct ScarConfig {
    int width_min = 2;
    int width_max = 16;
    int length_min = 10;
    int length_max = 25;
    double max_rotation_deg = 45.0;
    int max_attempts = 100;

    void validate() const;
};

enum class Ablation { none, no_segmentation, no_blur };

/// Every sampled quantity of one AnatPaste draw.
struct PastePlacement {
    Rect src;
    Rect dst;
    img::Shape shape;
    double fill = 1.0;
    double blur_radius = 0.0;
};

struct AugmentOutcome {
    GrayImage anomaly_image;
    GrayImage soft_mask;
    Rect patch_src_rect;
    Rect patch_dst_rect;
    img::Shape shape;
    double fill_value = 0.0;
    double blur_radius = 0.0;
    double rotation_deg = 0.0;  // CutPaste-Scar only

    friend bool operator==(const AugmentOutcome& a, const AugmentOutcome& b) {
        return a.anomaly_image == b.anomaly_image && a.soft_mask == b.soft_mask &&
               a.patch_src_rect == b.patch_src_rect && a.patch_dst_rect == b.patch_dst_rect &&
               a.shape.kind == b.shape.kind && a.shape.cx == b.shape.cx && a.shape.cy == b.shape.cy &&
               a.shape.half_a == b.shape.half_a && a.shape.half_b == b.shape.half_b &&
               a.fill_value == b.fill_value && a.blur_radius == b.blur_radius &&
               a.rotation_deg == b.rotation_deg;
    }
};

/// Full-frame image that is zero except for `src` translated to (dst_x, dst_y).
GrayImage crop_to_frame_patch(const GrayImage& img, const Rect& src, int dst_x, int dst_y);

/// Shape drawn at `fill` and blurred; values stay within [0, fill].
GrayImage make_blur_shape(const img::Shape& shape, double fill, double blur_radius, int width,
                          int height);

/// normal * (1 - mask) + patch * mask, clamped to [0,1].
GrayImage compose(const GrayImage& normal, const GrayImage& patch, const GrayImage& mask);

/// Draws crop, paste position, shape, fill and blur radius. The shape's
/// bounding box lies strictly inside the pasted rectangle and, unless the
/// ablation drops segmentation, its un-blurred support touches the lung.
PastePlacement sample_placement(const GrayImage& img, const BinaryMask& lung,
                                const AnatPasteConfig& cfg, Rng& rng,
                                Ablation ablation = Ablation::none);

/// Renders a placement; the deterministic half of anat_paste.
AugmentOutcome apply_placement(const GrayImage& img, const BinaryMask& lung,
                               const PastePlacement& placement, Ablation ablation = Ablation::none);

AugmentOutcome anat_paste(const GrayImage& img, const BinaryMask& lung, const AnatPasteConfig& cfg,
                          Rng& rng);

AugmentOutcome anat_paste_ablated(const GrayImage& img, const BinaryMask& lung,
                                  const AnatPasteConfig& cfg, Rng& rng, Ablation ablation);

AugmentOutcome cut_paste_scar(const GrayImage& img, const ScarConfig& cfg, Rng& rng);

enum class Mode { anat, anat_noseg, anat_noblur, cutpaste_scar };

Mode parse_mode(std::string_view text);
std::string_view to_string(Mode mode) noexcept;

/// Bundles a mode with its configuration so training code can treat every
/// augmentation the same way.
struct Augmenter {
    Mode mode = Mode::anat;
    AnatPasteConfig anat{};
    ScarConfig scar{};

    AugmentOutcome operator()(const GrayImage& img, const BinaryMask& lung, Rng& rng) const;
    /// Whether this mode needs a lung mask.
    bool needs_lung() const noexcept { return mode == Mode::anat || mode == Mode::anat_noblur; }
};

}  // namespace anatpaste::aug
