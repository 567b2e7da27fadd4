#pragma once

// Pixel-level primitives composed by lung segmentation, augmentation and the
// phantom generator. Everything here is a pure function of its arguments.

#include <limits>
#include <vector>

#include "anatpaste/image.hpp"

namespace anatpaste::img {

inline constexpr int kHistogramBins = 256;

/// Bin of an intensity on the 256-bin uniform histogram over [0,1].
int intensity_bin(double value) noexcept;

enum class Connectivity { four = 4, eight = 8 };
enum class Polarity { below, above };

struct StructuringElement {
    enum class Shape { disk, square };
    Shape shape = Shape::disk;
    int radius = 0;

    static StructuringElement disk(int r) { return {Shape::disk, r}; }
    static StructuringElement square(int r) { return {Shape::square, r}; }
};

struct ClaheParams {
    int tiles_x = 8;
    int tiles_y = 8;
    /// Multiple of the uniform bin height; +inf disables clipping.
    double clip_limit = 2.0;
};

/// Contrast-limited adaptive histogram equalization with bilinear blending of
/// the per-tile transfer functions. The image is reflected up to a multiple of
/// the tile grid and cropped back afterwards. A tile whose histogram occupies a
/// single bin maps every intensity to itself.
GrayImage clahe(const GrayImage& img, const ClaheParams& params = {});

/// Otsu's threshold on the 256-bin histogram; returns the last bin of the
/// lower class. Ties go to the lowest bin. Throws Degenerate if no split has
/// positive between-class variance.
int otsu_threshold(const GrayImage& img);

BinaryMask binarize(const GrayImage& img, int threshold_bin, Polarity polarity);

// Pixels outside the frame count as background for both erosion and dilation.
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask morph_open(const BinaryMask& mask, const StructuringElement& se);

LabelMap connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::eight);

/// Removes every component that has at least one pixel on the frame border.
BinaryMask clear_border(const BinaryMask& mask, Connectivity conn = Connectivity::eight);

/// Normalized 1-D kernel for `radius`: sigma = radius/3, half-width ceil(radius).
std::vector<double> gaussian_kernel(double radius);

/// Separable Gaussian blur with symmetric reflection at the border. Radius 0
/// returns the input unchanged. Output is clamped to [min(img), max(img)].
GrayImage gaussian_blur(const GrayImage& img, double radius);

struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = -1;  // inclusive
    int y1 = -1;  // inclusive
    bool empty() const noexcept { return x1 < x0 || y1 < y0; }
};

/// Same arithmetic as gaussian_blur, but only pixels inside `window` are
/// computed; the rest of the output is zero. Bit-identical to the full blur
/// inside the window, and equal to it everywhere when the input is zero
/// farther than ceil(radius) from the window.
GrayImage gaussian_blur_window(const GrayImage& img, double radius, PixelRect window,
                               double clamp_lo, double clamp_hi);

enum class ShapeKind { ellipse, rectangle };

struct Shape {
    ShapeKind kind = ShapeKind::ellipse;
    double cx = 0.0;
    double cy = 0.0;
    double half_a = 1.0;  // along x
    double half_b = 1.0;  // along y

    bool contains(double px, double py) const noexcept;
    /// Integer pixel bounds of all pixels that can satisfy contains().
    PixelRect pixel_bounds() const noexcept;
};

/// Draws `shape` at value `fill` on a zero image of size width x height.
/// Throws InvalidPlacement if the shape's bounding box leaves the frame.
GrayImage rasterize_shape(const Shape& shape, double fill, int width, int height);

/// Dice overlap 2|A∩B|/(|A|+|B|); 1 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

}  // namespace anatpaste::img

namespace anatpaste::img {

/// Transfer function of one CLAHE tile (exposed for inspection and tests).
struct ClaheTileMap {
    bool identity = false;
    std::vector<double> lut;  // kHistogramBins entries unless identity
    double apply(double value) const noexcept {
        return identity ? value : lut[static_cast<std::size_t>(intensity_bin(value))];
    }
};

/// Per-tile transfer functions in row-major tile order (tiles_x * tiles_y).
std::vector<ClaheTileMap> clahe_tile_maps(const GrayImage& img, const ClaheParams& params = {});

}  // namespace anatpaste::img
