#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anatpaste/error.hpp"
#include "anatpaste/imgcore.hpp"
#include "anatpaste/rng.hpp"
#include "support/oracles.hpp"

namespace {

using namespace anatpaste;
using img::Connectivity;
using img::StructuringElement;

GrayImage constant(int w, int h, double v) { return GrayImage(w, h, v); }

TEST(IntensityBin, EdgesAndInterior) {
    EXPECT_EQ(img::intensity_bin(0.0), 0);
    EXPECT_EQ(img::intensity_bin(1.0), 255);
    EXPECT_EQ(img::intensity_bin(0.5), 128);
    EXPECT_EQ(img::intensity_bin(std::nextafter(0.5, 0.0)), 127);
    EXPECT_EQ(img::intensity_bin(255.0 / 256.0), 255);
}

TEST(Otsu, MatchesExactRationalSearch) {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        GrayImage im = oracle::random_image(rng, 24, 17);
        // Bimodal images exercise the interior of the search as well.
        if (trial % 2) {
            for (double& v : im.pixels()) v = v < 0.5 ? 0.2 * v : 0.6 + 0.4 * v;
        }
        const auto expected = oracle::otsu(im);
        ASSERT_TRUE(expected.has_value());
        EXPECT_EQ(img::otsu_threshold(im), *expected) << "trial " << trial;
    }
}

TEST(Otsu, TwoLevelImageSplitsBetweenLevels) {
    GrayImage im(10, 10, 0.1);
    for (int x = 0; x < 10; ++x) im.at(x, 0) = 0.9;
    const int t = img::otsu_threshold(im);
    EXPECT_GE(t, img::intensity_bin(0.1));
    EXPECT_LT(t, img::intensity_bin(0.9));
    // Ties between equally good splits resolve to the lowest bin.
    EXPECT_EQ(t, img::intensity_bin(0.1));
}

TEST(Otsu, ConstantImageIsDegenerate) {
    try {
        img::otsu_threshold(constant(8, 8, 0.4));
        FAIL() << "expected Degenerate";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Degenerate);
    }
}

TEST(Binarize, PolarityIsComplementary) {
    Rng rng(3);
    const GrayImage im = oracle::random_image(rng, 13, 9);
    const BinaryMask lo = img::binarize(im, 100, img::Polarity::below);
    const BinaryMask hi = img::binarize(im, 100, img::Polarity::above);
    for (int y = 0; y < im.height(); ++y) {
        for (int x = 0; x < im.width(); ++x) {
            EXPECT_NE(lo.at(x, y), hi.at(x, y));
            EXPECT_EQ(lo.at(x, y), img::intensity_bin(im.at(x, y)) <= 100);
        }
    }
}

TEST(Components, MatchFloodFillOracleBothConnectivities) {
    Rng rng(5);
    for (int trial = 0; trial < 60; ++trial) {
        const BinaryMask m = oracle::random_mask(rng, 20 + trial % 7, 15 + trial % 5);
        for (int conn : {4, 8}) {
            int count = 0;
            const auto expected = oracle::flood_fill(m, conn, &count);
            const LabelMap got = img::connected_components(m, static_cast<Connectivity>(conn));
            EXPECT_EQ(static_cast<int>(got.component_count()), count);
            EXPECT_TRUE(oracle::same_partition(got.labels, expected));
            // Labels are numbered in raster order of first appearance, so they coincide.
            EXPECT_EQ(got.labels, expected);
            for (int l = 1; l <= count; ++l) {
                const auto size = std::count(expected.begin(), expected.end(), l);
                EXPECT_EQ(got.component_sizes[static_cast<std::size_t>(l)], static_cast<std::size_t>(size));
            }
        }
    }
}

TEST(Components, DiagonalPixelsDependOnConnectivity) {
    BinaryMask m(3, 3);
    m.set(0, 0, true);
    m.set(1, 1, true);
    m.set(2, 2, true);
    EXPECT_EQ(img::connected_components(m, Connectivity::eight).component_count(), 1u);
    EXPECT_EQ(img::connected_components(m, Connectivity::four).component_count(), 3u);
}

TEST(ClearBorder, RemovesExactlyBorderComponents) {
    Rng rng(8);
    for (int trial = 0; trial < 60; ++trial) {
        const BinaryMask m = oracle::random_mask(rng, 18, 22, 0.2);
        for (int conn : {4, 8}) {
            EXPECT_EQ(img::clear_border(m, static_cast<Connectivity>(conn)), oracle::clear_border(m, conn));
        }
    }
}

TEST(Morphology, MatchesBruteForceDefinitions) {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const BinaryMask m = oracle::random_mask(rng, 21, 16);
        for (int r : {0, 1, 2, 4}) {
            for (auto se : {StructuringElement::disk(r), StructuringElement::square(r)}) {
                EXPECT_EQ(img::erode(m, se), oracle::erode(m, se));
                EXPECT_EQ(img::dilate(m, se), oracle::dilate(m, se));
                EXPECT_EQ(img::morph_open(m, se), oracle::dilate(oracle::erode(m, se), se));
            }
        }
    }
}

TEST(Morphology, OpeningRemovesSpeckleKeepsBlock) {
    BinaryMask m(20, 20);
    for (int y = 5; y < 15; ++y) {
        for (int x = 5; x < 15; ++x) m.set(x, y, true);
    }
    m.set(1, 18, true);
    const BinaryMask opened = img::morph_open(m, StructuringElement::disk(1));
    EXPECT_FALSE(opened.at(1, 18));
    EXPECT_TRUE(opened.at(5, 5) || opened.at(6, 6));
    EXPECT_TRUE(opened.at(10, 10));
}

TEST(Clahe, ConstantImageIsUnchanged) {
    const GrayImage im = constant(32, 24, 0.37);
    EXPECT_EQ(img::clahe(im), im);
}

TEST(Clahe, SingleTileWithoutClipIsGlobalEqualization) {
    Rng rng(12);
    GrayImage im(32, 32);
    for (double& v : im.pixels()) v = 0.3 + 0.2 * rng.uniform();
    const GrayImage out = img::clahe(im, {1, 1, std::numeric_limits<double>::infinity()});
    // Global histogram equalization, computed from first principles.
    std::array<double, 256> hist{};
    for (double v : im.pixels()) hist[static_cast<std::size_t>(oracle::bin_of(v))] += 1.0;
    std::array<double, 256> cdf{};
    double run = 0.0;
    for (std::size_t b = 0; b < 256; ++b) cdf[b] = (run += hist[b]) / 1024.0;
    double cdf_min = 0.0;
    for (std::size_t b = 0; b < 256; ++b) {
        if (hist[b] > 0) {
            cdf_min = cdf[b];
            break;
        }
    }
    for (std::size_t i = 0; i < im.pixels().size(); ++i) {
        const auto b = static_cast<std::size_t>(oracle::bin_of(im.pixels()[i]));
        EXPECT_NEAR(out.pixels()[i], (cdf[b] - cdf_min) / (1.0 - cdf_min), 1e-12);
    }
}

TEST(Clahe, ClippedMapIsMonotoneAndBounded) {
    Rng rng(13);
    const GrayImage im = oracle::random_image(rng, 64, 48);
    for (const auto& map : img::clahe_tile_maps(im, {4, 3, 2.0})) {
        ASSERT_FALSE(map.identity);
        for (std::size_t b = 1; b < map.lut.size(); ++b) EXPECT_LE(map.lut[b - 1], map.lut[b]);
        EXPECT_GE(map.lut.front(), 0.0);
        EXPECT_LE(map.lut.back(), 1.0 + 1e-12);
    }
    const GrayImage out = img::clahe(im, {4, 3, 2.0});
    for (double v : out.pixels()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Clahe, NonDivisibleSizesAreSupported) {
    Rng rng(14);
    const GrayImage im = oracle::random_image(rng, 37, 29);
    const GrayImage out = img::clahe(im, {8, 8, 2.0});
    EXPECT_EQ(out.width(), 37);
    EXPECT_EQ(out.height(), 29);
}

TEST(GaussianKernel, NormalizedSymmetricWithExpectedWidth) {
    for (double r : {0.5, 1.0, 3.0, 7.3, 15.0}) {
        const auto k = img::gaussian_kernel(r);
        EXPECT_EQ(k.size(), static_cast<std::size_t>(2 * std::ceil(r) + 1));
        EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
        for (std::size_t i = 0; i < k.size(); ++i) EXPECT_DOUBLE_EQ(k[i], k[k.size() - 1 - i]);
        const double sigma = r / 3.0;
        const std::size_t c = k.size() / 2;
        EXPECT_NEAR(k[c + 1] / k[c], std::exp(-1.0 / (2 * sigma * sigma)), 1e-12);
    }
}

TEST(GaussianBlur, RadiusZeroIsIdentity) {
    Rng rng(15);
    const GrayImage im = oracle::random_image(rng, 9, 11);
    EXPECT_EQ(img::gaussian_blur(im, 0.0), im);
}

TEST(GaussianBlur, MatchesDirect2dConvolutionWithReflection) {
    Rng rng(16);
    const GrayImage im = oracle::random_image(rng, 17, 13);
    const double r = 4.0;
    const auto k = img::gaussian_kernel(r);
    const int half = static_cast<int>(k.size() / 2);
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    const GrayImage out = img::gaussian_blur(im, r);
    for (int y = 0; y < im.height(); ++y) {
        for (int x = 0; x < im.width(); ++x) {
            double acc = 0.0;
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx) {
                    acc += k[static_cast<std::size_t>(dy + half)] * k[static_cast<std::size_t>(dx + half)] *
                           im.at(reflect(x + dx, im.width()), reflect(y + dy, im.height()));
                }
            }
            EXPECT_NEAR(out.at(x, y), acc, 1e-12);
        }
    }
}

TEST(GaussianBlur, WindowAgreesWithFullBlurInsideWindow) {
    Rng rng(17);
    const GrayImage im = oracle::random_image(rng, 30, 25);
    const GrayImage full = img::gaussian_blur(im, 3.5);
    const auto [lo, hi] = std::minmax_element(im.pixels().begin(), im.pixels().end());
    const img::PixelRect win{4, 6, 20, 19};
    const GrayImage part = img::gaussian_blur_window(im, 3.5, win, *lo, *hi);
    for (int y = 0; y < im.height(); ++y) {
        for (int x = 0; x < im.width(); ++x) {
            const bool in = x >= win.x0 && x <= win.x1 && y >= win.y0 && y <= win.y1;
            EXPECT_EQ(part.at(x, y), in ? full.at(x, y) : 0.0);
        }
    }
}

TEST(Shapes, RasterizeFillsExactlyContainedPixels) {
    const img::Shape ellipse{img::ShapeKind::ellipse, 10.3, 8.7, 4.5, 2.5};
    const img::Shape rect{img::ShapeKind::rectangle, 10.0, 8.0, 3.0, 5.0};
    for (const auto& s : {ellipse, rect}) {
        const GrayImage r = img::rasterize_shape(s, 0.7, 24, 20);
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 24; ++x) EXPECT_EQ(r.at(x, y), s.contains(x, y) ? 0.7 : 0.0);
        }
    }
    EXPECT_THROW(img::rasterize_shape({img::ShapeKind::ellipse, 1.0, 1.0, 4.0, 4.0}, 1.0, 24, 20), Error);
}

TEST(Dice, KnownOverlaps) {
    BinaryMask a(4, 1), b(4, 1);
    a.set(0, 0, true);
    a.set(1, 0, true);
    b.set(1, 0, true);
    b.set(2, 0, true);
    EXPECT_DOUBLE_EQ(img::dice(a, b), 0.5);
    EXPECT_DOUBLE_EQ(img::dice(a, a), 1.0);
    EXPECT_DOUBLE_EQ(img::dice(BinaryMask(4, 1), BinaryMask(4, 1)), 1.0);
}

}  // namespace
