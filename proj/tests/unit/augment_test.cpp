#include <gtest/gtest.h>

#include <cmath>

#include "anatpaste/augment.hpp"
#include "anatpaste/error.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/phantom.hpp"
#include "support/oracles.hpp"

namespace {

using namespace anatpaste;

struct Fixture {
    GrayImage image;
    BinaryMask lung;
};

Fixture phantom_fixture(std::uint64_t index) {
    const auto s = phantom::generate({}, index, phantom::SampleClass::normal);
    return {s.image, seg::segment_lungs(s.image, seg::SegConfig::defaults_for(256, 256)).mask};
}

TEST(Compose, ZeroMaskReturnsNormalOneMaskReturnsPatch) {
    Rng rng(1);
    const GrayImage n = oracle::random_image(rng, 16, 12);
    const GrayImage p = oracle::random_image(rng, 16, 12);
    EXPECT_EQ(aug::compose(n, p, GrayImage(16, 12, 0.0)), n);
    EXPECT_EQ(aug::compose(n, p, GrayImage(16, 12, 1.0)), p);
}

TEST(Compose, MatchesPerPixelFormula) {
    Rng rng(2);
    const GrayImage n = oracle::random_image(rng, 16, 12);
    const GrayImage p = oracle::random_image(rng, 16, 12);
    const GrayImage m = oracle::random_image(rng, 16, 12);
    const GrayImage out = aug::compose(n, p, m);
    for (std::size_t i = 0; i < out.pixels().size(); ++i) {
        const double expected = n.pixels()[i] * (1 - m.pixels()[i]) + p.pixels()[i] * m.pixels()[i];
        EXPECT_NEAR(out.pixels()[i], expected, 1e-12);
    }
}

TEST(Compose, RejectsMismatchedOperands) {
    EXPECT_THROW(aug::compose(GrayImage(4, 4), GrayImage(4, 5), GrayImage(4, 4)), Error);
    GrayImage bad(4, 4);
    bad.at(1, 1) = 1.5;
    EXPECT_THROW(aug::compose(GrayImage(4, 4), GrayImage(4, 4), bad), Error);
}

TEST(CropToFramePatch, IsATranslatedCopy) {
    Rng rng(3);
    const GrayImage im = oracle::random_image(rng, 20, 15);
    const aug::Rect src{2, 3, 5, 4};
    const GrayImage patch = aug::crop_to_frame_patch(im, src, 12, 9);
    for (int y = 0; y < 15; ++y) {
        for (int x = 0; x < 20; ++x) {
            const bool in = x >= 12 && x < 17 && y >= 9 && y < 13;
            EXPECT_EQ(patch.at(x, y), in ? im.at(x - 10, y - 6) : 0.0);
        }
    }
    EXPECT_THROW(aug::crop_to_frame_patch(im, src, 17, 0), Error);
}

TEST(MakeBlurShape, ValuesStayWithinFillAndWindowMatchesFullBlur) {
    const img::Shape s{img::ShapeKind::ellipse, 30.0, 25.0, 8.0, 5.0};
    for (double r : {0.0, 2.0, 9.5}) {
        const GrayImage m = aug::make_blur_shape(s, 0.8, r, 64, 48);
        const GrayImage full = img::gaussian_blur(img::rasterize_shape(s, 0.8, 64, 48), r);
        for (std::size_t i = 0; i < m.pixels().size(); ++i) {
            EXPECT_GE(m.pixels()[i], 0.0);
            EXPECT_LE(m.pixels()[i], 0.8);
            EXPECT_EQ(m.pixels()[i], full.pixels()[i]);
        }
    }
}

TEST(AnatPaste, SupportInsideLungAndOffMaskUnchanged) {
    const auto fx = phantom_fixture(1);
    aug::AnatPasteConfig cfg;
    for (std::uint64_t k = 0; k < 40; ++k) {
        Rng rng = Rng::derive(7, {k});
        const auto o = aug::anat_paste(fx.image, fx.lung, cfg, rng);
        for (int y = 0; y < 256; ++y) {
            for (int x = 0; x < 256; ++x) {
                const double m = o.soft_mask.at(x, y);
                if (m > 0.0) {
                    EXPECT_TRUE(fx.lung.at(x, y));
                } else {
                    EXPECT_EQ(o.anomaly_image.at(x, y), fx.image.at(x, y));
                }
            }
        }
        EXPECT_GE(o.fill_value, 0.59);
        EXPECT_LE(o.fill_value, 1.0);
        EXPECT_GE(o.blur_radius, 0.0);
        EXPECT_LE(o.blur_radius, 15.0);
        EXPECT_GT(o.soft_mask.pixels().size(), 0u);
    }
}

TEST(AnatPaste, PlacementGeometryHonorsConfig) {
    const auto fx = phantom_fixture(2);
    aug::AnatPasteConfig cfg;
    for (std::uint64_t k = 0; k < 100; ++k) {
        Rng rng = Rng::derive(9, {k});
        const auto p = aug::sample_placement(fx.image, fx.lung, cfg, rng);
        EXPECT_TRUE(p.src.inside(256, 256));
        EXPECT_TRUE(p.dst.inside(256, 256));
        EXPECT_EQ(p.src.width, p.dst.width);
        EXPECT_EQ(p.src.height, p.dst.height);
        const double area = static_cast<double>(p.src.width) * p.src.height / (256.0 * 256.0);
        // Rounding the sides to whole pixels moves the ratio slightly.
        EXPECT_GT(area, 0.02 * 0.8);
        EXPECT_LT(area, 0.15 * 1.25);
        const img::PixelRect b = p.shape.pixel_bounds();
        EXPECT_GT(b.x0, p.dst.x - 1);
        EXPECT_LT(b.x1, p.dst.x + p.dst.width);
        EXPECT_GT(b.y0, p.dst.y - 1);
        EXPECT_LT(b.y1, p.dst.y + p.dst.height);
    }
}

TEST(AnatPaste, SameSeedSameOutcome) {
    const auto fx = phantom_fixture(3);
    Rng a = Rng::derive(5, {1}), b = Rng::derive(5, {1});
    EXPECT_EQ(aug::anat_paste(fx.image, fx.lung, {}, a), aug::anat_paste(fx.image, fx.lung, {}, b));
}

TEST(AnatPaste, EmptyLungIsAnError) {
    const auto fx = phantom_fixture(4);
    Rng rng(1);
    try {
        aug::anat_paste(fx.image, BinaryMask(256, 256), {}, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoLungRegion);
    }
}

TEST(AnatPaste, LungOutsideEveryFeasibleShapeExhaustsAttempts) {
    const auto fx = phantom_fixture(5);
    BinaryMask corner(256, 256);
    corner.set(0, 0, true);
    aug::AnatPasteConfig cfg;
    cfg.max_placement_attempts = 5;
    Rng rng(1);
    try {
        aug::anat_paste(fx.image, corner, cfg, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoValidPlacement);
    }
}

TEST(AnatPasteAblation, NoSegmentationCanLeaveTheLung) {
    const auto fx = phantom_fixture(6);
    // A shape placed on the body between the lungs.
    aug::PastePlacement p;
    p.src = {10, 10, 40, 40};
    p.dst = {108, 200, 40, 40};
    p.shape = {img::ShapeKind::rectangle, 127.5, 219.5, 10.0, 10.0};
    p.fill = 1.0;
    p.blur_radius = 3.0;
    const auto full = aug::apply_placement(fx.image, fx.lung, p);
    const auto noseg = aug::apply_placement(fx.image, fx.lung, p, aug::Ablation::no_segmentation);
    bool outside = false;
    for (int y = 0; y < 256; ++y) {
        for (int x = 0; x < 256; ++x) {
            if (noseg.soft_mask.at(x, y) > 0.0 && !fx.lung.at(x, y)) outside = true;
            if (full.soft_mask.at(x, y) > 0.0) {
                EXPECT_TRUE(fx.lung.at(x, y));
            }
        }
    }
    EXPECT_TRUE(outside);
}

TEST(AnatPasteAblation, NoBlurGivesTwoLevelMask) {
    const auto fx = phantom_fixture(7);
    for (std::uint64_t k = 0; k < 20; ++k) {
        Rng rng = Rng::derive(3, {k});
        const auto o = aug::anat_paste_ablated(fx.image, fx.lung, {}, rng, aug::Ablation::no_blur);
        EXPECT_EQ(o.blur_radius, 0.0);
        for (double v : o.soft_mask.pixels()) EXPECT_TRUE(v == 0.0 || v == o.fill_value);
    }
}

TEST(CutPasteScar, BinaryMaskAndCopiedPixels) {
    const auto fx = phantom_fixture(8);
    aug::ScarConfig cfg;
    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng = Rng::derive(4, {k});
        const auto o = aug::cut_paste_scar(fx.image, cfg, rng);
        EXPECT_LE(std::abs(o.rotation_deg), 45.0);
        std::size_t support = 0;
        for (int y = 0; y < 256; ++y) {
            for (int x = 0; x < 256; ++x) {
                const double m = o.soft_mask.at(x, y);
                EXPECT_TRUE(m == 0.0 || m == 1.0);
                if (m == 0.0) {
                    EXPECT_EQ(o.anomaly_image.at(x, y), fx.image.at(x, y));
                }
                support += m == 1.0;
            }
        }
        const int sw = o.patch_src_rect.width, sl = o.patch_src_rect.height;
        EXPECT_GE(sw, 2);
        EXPECT_LE(sw, 16);
        EXPECT_GE(sl, 10);
        EXPECT_LE(sl, 25);
        EXPECT_GT(support, 0u);
    }
}

TEST(CutPasteScar, ZeroRotationIsAnExactTranslation) {
    Rng img_rng(5);
    const GrayImage im = oracle::random_image(img_rng, 64, 64);
    aug::ScarConfig cfg;
    cfg.max_rotation_deg = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        Rng rng = Rng::derive(6, {k});
        const auto o = aug::cut_paste_scar(im, cfg, rng);
        const auto& s = o.patch_src_rect;
        const auto& d = o.patch_dst_rect;
        ASSERT_EQ(d.width, s.width);
        ASSERT_EQ(d.height, s.height);
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) EXPECT_EQ(o.anomaly_image.at(d.x + x, d.y + y), im.at(s.x + x, s.y + y));
        }
        EXPECT_EQ(o.soft_mask.pixels().size(), im.pixels().size());
    }
}

TEST(Modes, ParseAndPrintRoundTrip) {
    for (auto m : {aug::Mode::anat, aug::Mode::anat_noseg, aug::Mode::anat_noblur, aug::Mode::cutpaste_scar}) {
        EXPECT_EQ(aug::parse_mode(aug::to_string(m)), m);
    }
    EXPECT_THROW(aug::parse_mode("cutpaste"), Error);
    EXPECT_TRUE(aug::Augmenter{aug::Mode::anat}.needs_lung());
    EXPECT_FALSE(aug::Augmenter{aug::Mode::anat_noseg}.needs_lung());
    EXPECT_FALSE(aug::Augmenter{aug::Mode::cutpaste_scar}.needs_lung());
}

}  // namespace
