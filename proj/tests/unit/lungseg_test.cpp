#include <gtest/gtest.h>

#include "anatpaste/error.hpp"
#include "anatpaste/imgcore.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/phantom.hpp"

namespace {

using namespace anatpaste;

TEST(SegConfig, RadiiScaleWithFrame) {
    const auto full = seg::SegConfig::defaults_for(256, 256);
    EXPECT_EQ(full.open_radius, 2);
    EXPECT_EQ(full.dilate_radius, 6);
    const auto big = seg::SegConfig::defaults_for(512, 640);
    EXPECT_EQ(big.open_radius, 4);
    EXPECT_EQ(big.dilate_radius, 12);
}

TEST(SegConfig, RejectsInvalidValues) {
    seg::SegConfig c;
    c.open_radius = -1;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.min_component_fraction = 1.5;
    EXPECT_THROW(c.validate(), Error);
}

TEST(SegmentLungs, ConstantImageIsDegenerateEmptyMask) {
    const auto r = seg::segment_lungs(GrayImage(64, 64, 0.5), seg::SegConfig::defaults_for(64, 64));
    EXPECT_TRUE(r.degenerate);
    EXPECT_FALSE(r.mask.any());
}

TEST(SegmentLungs, PhantomsReachHighDice) {
    phantom::PhantomConfig pc;
    for (std::uint64_t i = 0; i < 8; ++i) {
        const auto s = phantom::generate(pc, i, i % 2 ? phantom::SampleClass::abnormal : phantom::SampleClass::normal);
        const auto r = seg::segment_lungs(s.image, seg::SegConfig::defaults_for(256, 256));
        EXPECT_FALSE(r.degenerate);
        EXPECT_EQ(r.components_kept, 2u) << s.id;
        EXPECT_GE(img::dice(r.mask, s.gt_lung), 0.8) << s.id;
    }
}

TEST(SegmentLungs, SnapshotsFollowStageOrder) {
    const auto s = phantom::generate({}, 3, phantom::SampleClass::normal);
    const auto cfg = seg::SegConfig::defaults_for(256, 256);
    const auto r = seg::segment_lungs(s.image, cfg, true);
    ASSERT_TRUE(r.snapshots.has_value());
    const auto& snap = *r.snapshots;
    EXPECT_TRUE(snap.opened.subset_of(snap.binarized));
    EXPECT_TRUE(snap.cleared.subset_of(snap.opened));
    EXPECT_TRUE(snap.cleared.subset_of(snap.dilated));
    EXPECT_TRUE(r.mask.subset_of(snap.dilated));
    EXPECT_EQ(snap.equalized, img::clahe(s.image, cfg.clahe));
    EXPECT_FALSE(seg::segment_lungs(s.image, cfg, false).snapshots.has_value());
}

TEST(SegmentLungs, BorderTouchingDarkRegionIsRemoved) {
    // Dark background frame around a bright body with one dark interior blob.
    GrayImage im(64, 64, 0.05);
    for (int y = 8; y < 56; ++y) {
        for (int x = 8; x < 56; ++x) im.at(x, y) = 0.8;
    }
    for (int y = 20; y < 44; ++y) {
        for (int x = 20; x < 40; ++x) im.at(x, y) = 0.2;
    }
    seg::SegConfig cfg = seg::SegConfig::defaults_for(64, 64);
    const auto r = seg::segment_lungs(im, cfg);
    EXPECT_FALSE(r.mask.at(0, 0));
    EXPECT_TRUE(r.mask.at(30, 30));
    EXPECT_EQ(r.components_kept, 1u);
}

TEST(FilterSmallComponents, KeepsOnlyLargeOnes) {
    BinaryMask m(10, 10);
    for (int x = 0; x < 5; ++x) m.set(x, 0, true);
    m.set(8, 8, true);
    const auto labels = img::connected_components(m);
    const BinaryMask kept = seg::filter_small_components(labels, 2);
    EXPECT_EQ(kept.count(), 5u);
    EXPECT_FALSE(kept.at(8, 8));
    EXPECT_EQ(seg::filter_small_components(labels, 1), m);
}

}  // namespace
