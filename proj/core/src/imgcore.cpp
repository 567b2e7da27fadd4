#include "anatpaste/imgcore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "anatpaste/error.hpp"

namespace anatpaste::img {

namespace {

// Symmetric reflection (…2 1 0 | 0 1 2 … n-1 | n-1 n-2 …), valid for any i.
int reflect(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

void require_non_empty(const GrayImage& img, const char* op) {
    if (img.empty()) throw Error(Errc::InvalidDimensions, std::string(op) + ": empty image");
}

std::array<std::int64_t, kHistogramBins> histogram(const GrayImage& img) {
    std::array<std::int64_t, kHistogramBins> hist{};
    for (double v : img.pixels()) ++hist[static_cast<std::size_t>(intensity_bin(v))];
    return hist;
}

// Horizontal half-widths of a structuring element, one per row offset -r..r.
std::vector<int> row_half_widths(const StructuringElement& se) {
    const int r = se.radius;
    std::vector<int> widths(static_cast<std::size_t>(2 * r + 1));
    for (int dy = -r; dy <= r; ++dy) {
        int w = r;
        if (se.shape == StructuringElement::Shape::disk) {
            while (w > 0 && w * w + dy * dy > r * r) --w;
        }
        widths[static_cast<std::size_t>(dy + r)] = w;
    }
    return widths;
}

// Prefix sums of foreground counts per row; row y occupies [y*(W+1), (y+1)*(W+1)).
std::vector<int> row_prefix_sums(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<int> sums(static_cast<std::size_t>(h) * static_cast<std::size_t>(w + 1), 0);
    for (int y = 0; y < h; ++y) {
        int* row = sums.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(w + 1);
        for (int x = 0; x < w; ++x) row[x + 1] = row[x] + (mask.at(x, y) ? 1 : 0);
    }
    return sums;
}

class DisjointSets {
public:
    std::int32_t make() {
        parent_.push_back(static_cast<std::int32_t>(parent_.size()));
        return parent_.back();
    }
    std::int32_t find(std::int32_t a) {
        while (parent_[static_cast<std::size_t>(a)] != a) {
            auto& p = parent_[static_cast<std::size_t>(a)];
            p = parent_[static_cast<std::size_t>(p)];
            a = p;
        }
        return a;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent_[static_cast<std::size_t>(a)] = b;
    }

private:
    std::vector<std::int32_t> parent_;
};

}  // namespace

int intensity_bin(double value) noexcept {
    if (!(value > 0.0)) return 0;
    const double scaled = std::floor(value * kHistogramBins);
    return scaled >= kHistogramBins - 1 ? kHistogramBins - 1 : static_cast<int>(scaled);
}

// ---------------------------------------------------------------------------
// CLAHE
// ---------------------------------------------------------------------------

namespace {

void check_clahe_params(const ClaheParams& p) {
    if (p.tiles_x < 1 || p.tiles_y < 1) {
        throw Error(Errc::InvalidArgument, "clahe: tile grid must be at least 1x1");
    }
    if (!(p.clip_limit > 0.0)) throw Error(Errc::InvalidArgument, "clahe: clip limit must be > 0");
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

std::vector<ClaheTileMap> clahe_tile_maps(const GrayImage& img, const ClaheParams& params) {
    require_non_empty(img, "clahe");
    check_clahe_params(params);

    const int w = img.width();
    const int h = img.height();
    const int tile_w = ceil_div(w, params.tiles_x);
    const int tile_h = ceil_div(h, params.tiles_y);
    const double tile_pixels = static_cast<double>(tile_w) * tile_h;
    const bool clip = std::isfinite(params.clip_limit);
    const double limit = params.clip_limit * tile_pixels / kHistogramBins;

    std::vector<ClaheTileMap> maps(static_cast<std::size_t>(params.tiles_x * params.tiles_y));
    for (int ty = 0; ty < params.tiles_y; ++ty) {
        for (int tx = 0; tx < params.tiles_x; ++tx) {
            std::array<double, kHistogramBins> hist{};
            for (int py = ty * tile_h; py < (ty + 1) * tile_h; ++py) {
                const int sy = reflect(py, h);
                for (int px = tx * tile_w; px < (tx + 1) * tile_w; ++px) {
                    hist[static_cast<std::size_t>(intensity_bin(img.at(reflect(px, w), sy)))] += 1.0;
                }
            }
            ClaheTileMap& map = maps[static_cast<std::size_t>(ty * params.tiles_x + tx)];
            const auto occupied = std::count_if(hist.begin(), hist.end(), [](double c) { return c > 0; });
            if (occupied <= 1) {
                map.identity = true;
                continue;
            }
            if (clip) {
                double excess = 0.0;
                for (double& c : hist) {
                    if (c > limit) {
                        excess += c - limit;
                        c = limit;
                    }
                }
                const double share = excess / kHistogramBins;
                for (double& c : hist) c += share;
            }
            std::array<double, kHistogramBins> cdf{};
            std::partial_sum(hist.begin(), hist.end(), cdf.begin());
            const double total = cdf.back();
            const auto first = static_cast<std::size_t>(
                std::find_if(hist.begin(), hist.end(), [](double c) { return c > 0; }) - hist.begin());
            const double cdf_min = cdf[first] / total;
            if (!(1.0 - cdf_min > 0.0)) {
                map.identity = true;
                continue;
            }
            map.lut.resize(kHistogramBins);
            for (std::size_t b = 0; b < kHistogramBins; ++b) {
                const double v = (cdf[b] / total - cdf_min) / (1.0 - cdf_min);
                map.lut[b] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return maps;
}

GrayImage clahe(const GrayImage& img, const ClaheParams& params) {
    const auto maps = clahe_tile_maps(img, params);
    const int w = img.width();
    const int h = img.height();
    const int tile_w = ceil_div(w, params.tiles_x);
    const int tile_h = ceil_div(h, params.tiles_y);

    // Tile-grid coordinate of a pixel center, split into two neighbor tiles
    // and a blend weight; clamped at the outer half tiles.
    auto locate = [](int p, int tile, int tiles, int& i0, int& i1, double& frac) {
        const double g = (p + 0.5) / tile - 0.5;
        if (g <= 0.0) {
            i0 = i1 = 0;
            frac = 0.0;
        } else if (g >= tiles - 1) {
            i0 = i1 = tiles - 1;
            frac = 0.0;
        } else {
            i0 = static_cast<int>(std::floor(g));
            i1 = i0 + 1;
            frac = g - i0;
        }
    };

    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        int ty0, ty1;
        double fy;
        locate(y, tile_h, params.tiles_y, ty0, ty1, fy);
        for (int x = 0; x < w; ++x) {
            int tx0, tx1;
            double fx;
            locate(x, tile_w, params.tiles_x, tx0, tx1, fx);
            const double v = img.at(x, y);
            auto map_at = [&](int tx, int ty) {
                return maps[static_cast<std::size_t>(ty * params.tiles_x + tx)].apply(v);
            };
            const double top = (1.0 - fx) * map_at(tx0, ty0) + fx * map_at(tx1, ty0);
            const double bottom = (1.0 - fx) * map_at(tx0, ty1) + fx * map_at(tx1, ty1);
            out.at(x, y) = std::clamp((1.0 - fy) * top + fy * bottom, 0.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Otsu
// ---------------------------------------------------------------------------

int otsu_threshold(const GrayImage& img) {
    require_non_empty(img, "otsu_threshold");
    using boost::multiprecision::int256_t;

    const auto hist = histogram(img);
    std::int64_t total = 0;
    std::int64_t weighted_total = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
        total += hist[static_cast<std::size_t>(b)];
        weighted_total += b * hist[static_cast<std::size_t>(b)];
    }

    // Between-class variance for a split at t is a^2 / (n0 * n1 * N^2) with
    // a = N*S0 - n0*S. Candidates are compared exactly as a^2 * n0' * n1'.
    int best = -1;
    int256_t best_num = 0;
    int256_t best_den = 1;
    std::int64_t n0 = 0;
    std::int64_t s0 = 0;
    for (int t = 0; t < kHistogramBins - 1; ++t) {
        n0 += hist[static_cast<std::size_t>(t)];
        s0 += t * hist[static_cast<std::size_t>(t)];
        const std::int64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const int256_t a = int256_t(total) * s0 - int256_t(n0) * weighted_total;
        const int256_t num = a * a;
        const int256_t den = int256_t(n0) * int256_t(n1);
        if (num == 0) continue;
        if (best < 0 || num * best_den > best_num * den) {
            best = t;
            best_num = num;
            best_den = den;
        }
    }
    if (best < 0) throw Error(Errc::Degenerate, "otsu_threshold: histogram has a single occupied bin");
    return best;
}

BinaryMask binarize(const GrayImage& img, int threshold_bin, Polarity polarity) {
    require_non_empty(img, "binarize");
    if (threshold_bin < 0 || threshold_bin >= kHistogramBins) {
        throw Error(Errc::InvalidArgument, "binarize: threshold bin out of range");
    }
    BinaryMask out(img.width(), img.height());
    auto src = img.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const bool low = intensity_bin(src[i]) <= threshold_bin;
        dst[i] = (polarity == Polarity::below ? low : !low) ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Morphology
// ---------------------------------------------------------------------------

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    if (se.radius < 0) throw Error(Errc::InvalidArgument, "structuring element radius < 0");
    if (se.radius == 0) return mask;
    const int w = mask.width();
    const int h = mask.height();
    const int r = se.radius;
    const auto widths = row_half_widths(se);
    const auto sums = row_prefix_sums(mask);
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool hit = false;
            for (int dy = -r; dy <= r && !hit; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                const int hw = widths[static_cast<std::size_t>(dy + r)];
                const int lo = std::max(0, x - hw);
                const int hi = std::min(w - 1, x + hw);
                const int* row = sums.data() + static_cast<std::size_t>(yy) * static_cast<std::size_t>(w + 1);
                hit = row[hi + 1] - row[lo] > 0;
            }
            if (hit) out.set(x, y, true);
        }
    }
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    if (se.radius < 0) throw Error(Errc::InvalidArgument, "structuring element radius < 0");
    if (se.radius == 0) return mask;
    const int w = mask.width();
    const int h = mask.height();
    const int r = se.radius;
    const auto widths = row_half_widths(se);
    const auto sums = row_prefix_sums(mask);
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            bool keep = true;
            for (int dy = -r; dy <= r && keep; ++dy) {
                const int yy = y + dy;
                const int hw = widths[static_cast<std::size_t>(dy + r)];
                if (yy < 0 || yy >= h || x - hw < 0 || x + hw >= w) {
                    keep = false;
                    break;
                }
                const int* row = sums.data() + static_cast<std::size_t>(yy) * static_cast<std::size_t>(w + 1);
                keep = row[x + hw + 1] - row[x - hw] == 2 * hw + 1;
            }
            if (keep) out.set(x, y, true);
        }
    }
    return out;
}

BinaryMask morph_open(const BinaryMask& mask, const StructuringElement& se) {
    return dilate(erode(mask, se), se);
}

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

LabelMap connected_components(const BinaryMask& mask, Connectivity conn) {
    const int w = mask.width();
    const int h = mask.height();
    LabelMap out;
    out.width = w;
    out.height = h;
    out.labels.assign(mask.size(), 0);
    out.component_sizes.assign(1, 0);

    // First pass: provisional labels from already-visited neighbors.
    DisjointSets sets;
    sets.make();  // provisional label 0 is background
    std::vector<std::int32_t> provisional(mask.size(), 0);
    auto idx = [w](int x, int y) {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            std::int32_t label = 0;
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || ny < 0 || nx >= w) return;
                const std::int32_t n = provisional[idx(nx, ny)];
                if (n == 0) return;
                if (label == 0) {
                    label = n;
                } else {
                    sets.unite(label, n);
                }
            };
            visit(x - 1, y);
            visit(x, y - 1);
            if (conn == Connectivity::eight) {
                visit(x - 1, y - 1);
                visit(x + 1, y - 1);
            }
            if (label == 0) label = sets.make();
            provisional[idx(x, y)] = label;
        }
    }

    // Second pass: resolve roots and renumber in raster order of first pixel.
    std::vector<std::int32_t> final_label(static_cast<std::size_t>(sets.make()), 0);
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        if (provisional[i] == 0) continue;
        const auto root = static_cast<std::size_t>(sets.find(provisional[i]));
        if (final_label[root] == 0) {
            final_label[root] = static_cast<std::int32_t>(out.component_sizes.size());
            out.component_sizes.push_back(0);
        }
        out.labels[i] = final_label[root];
        ++out.component_sizes[static_cast<std::size_t>(final_label[root])];
    }
    return out;
}

BinaryMask clear_border(const BinaryMask& mask, Connectivity conn) {
    const int w = mask.width();
    const int h = mask.height();
    const LabelMap labels = connected_components(mask, conn);
    std::vector<bool> touches(labels.component_sizes.size(), false);
    for (int x = 0; x < w; ++x) {
        touches[static_cast<std::size_t>(labels.at(x, 0))] = true;
        touches[static_cast<std::size_t>(labels.at(x, h - 1))] = true;
    }
    for (int y = 0; y < h; ++y) {
        touches[static_cast<std::size_t>(labels.at(0, y))] = true;
        touches[static_cast<std::size_t>(labels.at(w - 1, y))] = true;
    }
    BinaryMask out(w, h);
    auto dst = out.pixels();
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const auto l = labels.labels[i];
        if (l != 0 && !touches[static_cast<std::size_t>(l)]) dst[i] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Blur
// ---------------------------------------------------------------------------

std::vector<double> gaussian_kernel(double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw Error(Errc::InvalidArgument, "gaussian blur radius must be finite and >= 0");
    }
    if (radius == 0.0) return {1.0};
    const int half = static_cast<int>(std::ceil(radius));
    const double sigma = radius / 3.0;
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int k = -half; k <= half; ++k) {
        const double v = std::exp(-(static_cast<double>(k) * k) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(k + half)] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;
    return kernel;
}

GrayImage gaussian_blur_window(const GrayImage& img, double radius, PixelRect window,
                               double clamp_lo, double clamp_hi) {
    require_non_empty(img, "gaussian_blur");
    const auto kernel = gaussian_kernel(radius);
    const int half = static_cast<int>(kernel.size() / 2);
    const int w = img.width();
    const int h = img.height();
    GrayImage out(w, h);

    window.x0 = std::max(window.x0, 0);
    window.y0 = std::max(window.y0, 0);
    window.x1 = std::min(window.x1, w - 1);
    window.y1 = std::min(window.y1, h - 1);
    if (window.empty()) return out;

    int row_lo = h;
    int row_hi = -1;
    for (int y = window.y0; y <= window.y1; ++y) {
        for (int k = -half; k <= half; ++k) {
            const int r = reflect(y + k, h);
            row_lo = std::min(row_lo, r);
            row_hi = std::max(row_hi, r);
        }
    }

    const int cols = window.x1 - window.x0 + 1;
    std::vector<double> tmp(static_cast<std::size_t>(row_hi - row_lo + 1) * static_cast<std::size_t>(cols));
    std::vector<int> col_index(static_cast<std::size_t>(cols) * kernel.size());
    for (int x = window.x0; x <= window.x1; ++x) {
        for (int k = -half; k <= half; ++k) {
            col_index[static_cast<std::size_t>(x - window.x0) * kernel.size() +
                      static_cast<std::size_t>(k + half)] = reflect(x + k, w);
        }
    }
    for (int r = row_lo; r <= row_hi; ++r) {
        double* dst = tmp.data() + static_cast<std::size_t>(r - row_lo) * static_cast<std::size_t>(cols);
        for (int c = 0; c < cols; ++c) {
            const int* src_cols = col_index.data() + static_cast<std::size_t>(c) * kernel.size();
            double acc = 0.0;
            for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * img.at(src_cols[k], r);
            dst[c] = acc;
        }
    }
    for (int y = window.y0; y <= window.y1; ++y) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k) {
                const int r = reflect(y + k, h) - row_lo;
                acc += kernel[static_cast<std::size_t>(k + half)] *
                       tmp[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
            }
            out.at(window.x0 + c, y) = std::clamp(acc, clamp_lo, clamp_hi);
        }
    }
    return out;
}

GrayImage gaussian_blur(const GrayImage& img, double radius) {
    require_non_empty(img, "gaussian_blur");
    gaussian_kernel(radius);  // validates
    if (radius == 0.0) return img;
    const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
    return gaussian_blur_window(img, radius, {0, 0, img.width() - 1, img.height() - 1}, *lo, *hi);
}

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

bool Shape::contains(double px, double py) const noexcept {
    const double dx = px - cx;
    const double dy = py - cy;
    if (kind == ShapeKind::rectangle) return std::abs(dx) <= half_a && std::abs(dy) <= half_b;
    const double u = dx / half_a;
    const double v = dy / half_b;
    return u * u + v * v <= 1.0;
}

PixelRect Shape::pixel_bounds() const noexcept {
    return {static_cast<int>(std::ceil(cx - half_a)), static_cast<int>(std::ceil(cy - half_b)),
            static_cast<int>(std::floor(cx + half_a)), static_cast<int>(std::floor(cy + half_b))};
}

GrayImage rasterize_shape(const Shape& shape, double fill, int width, int height) {
    if (width < 1 || height < 1) throw Error(Errc::InvalidDimensions, "rasterize_shape: empty frame");
    if (!(shape.half_a >= 1.0) || !(shape.half_b >= 1.0)) {
        throw Error(Errc::InvalidArgument, "rasterize_shape: half axes must be >= 1");
    }
    if (!(fill >= 0.0 && fill <= 1.0)) throw Error(Errc::InvalidArgument, "rasterize_shape: fill outside [0,1]");
    if (shape.cx - shape.half_a < 0.0 || shape.cy - shape.half_b < 0.0 ||
        shape.cx + shape.half_a > width - 1 || shape.cy + shape.half_b > height - 1) {
        throw Error(Errc::InvalidPlacement, "rasterize_shape: bounding box leaves the frame");
    }
    GrayImage out(width, height);
    const PixelRect b = shape.pixel_bounds();
    for (int y = b.y0; y <= b.y1; ++y) {
        for (int x = b.x0; x <= b.x1; ++x) {
            if (shape.contains(x, y)) out.at(x, y) = fill;
        }
    }
    return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw Error(Errc::InvalidDimensions, "dice: mask shapes differ");
    std::size_t inter = 0;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) inter += (pa[i] && pb[i]) ? 1 : 0;
    const std::size_t total = a.count() + b.count();
    return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace anatpaste::img
