#include "lvmesh/align.hpp"
#include "support.hpp"

using namespace lvtest;

namespace {

LabelVolume slab(int nx, int ny, int nz) {
    Grid g;
    g.dims = {nx, ny, nz};
    g.spacing = Vec3(0.5, 2.0, 3.0);
    g.origin = Vec3(10, -4, 0);
    return LabelVolume(g);
}

FrameSequence frames_for(const std::vector<LabelVolume> &masks) {
    FrameSequence f;
    for (const LabelVolume &m : masks) {
        ImageVolume v(m.grid);
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(m.data[i]) * 10.0f;
        f.frames.push_back(v);
    }
    return f;
}

} // namespace

TEST(Align, CentroidOfSingleVoxel) {
    LabelVolume m = slab(8, 8, 2);
    m.at(3, 5, 1) = kLvPool;
    const auto c = align::centroid2d(m, 1);
    ASSERT_TRUE(c);
    EXPECT_DOUBLE_EQ(c->x, 10 + 3 * 0.5);
    EXPECT_DOUBLE_EQ(c->y, -4 + 5 * 2.0);
    EXPECT_FALSE(align::centroid2d(m, 0));
}

TEST(Align, CentroidOfDisk) {
    LabelVolume m = slab(21, 21, 1);
    for (int j = 0; j < 21; ++j)
        for (int i = 0; i < 21; ++i)
            if ((i - 12) * (i - 12) + (j - 7) * (j - 7) <= 16) m.at(i, j, 0) = kLvPool;
    const auto c = align::centroid2d(m, 0);
    ASSERT_TRUE(c);
    EXPECT_NEAR(c->x, 10 + 12 * 0.5, 1e-12);
    EXPECT_NEAR(c->y, -4 + 7 * 2.0, 1e-12);
}

TEST(Align, CollinearSlicesAreLeftAlone) {
    const Phantom ph = generate(small_phantom());
    const align::Corrected c = align::correct(ph.frames, ph.labels);
    for (const auto &s : c.shifts) EXPECT_EQ(s.offset, SliceOffset{}) << "frame " << s.frame << " slice " << s.slice;
    EXPECT_EQ(c.masks[2].data, ph.labels[2].data);
    EXPECT_EQ(c.frames.frames[2].data, ph.frames.frames[2].data);
}

TEST(Align, SingleSliceIsIdentity) {
    std::vector<LabelVolume> masks(2, slab(9, 9, 1));
    masks[0].at(2, 6, 0) = kLvPool;
    masks[1].at(2, 6, 0) = kLvPool;
    const align::Corrected c = align::correct(frames_for(masks), masks);
    ASSERT_EQ(c.shifts.size(), 2u);
    for (const auto &s : c.shifts) EXPECT_EQ(s.offset, SliceOffset{});
}

TEST(Align, ShiftedSliceIsBroughtBack) {
    std::vector<LabelVolume> masks(2, slab(16, 16, 3));
    for (auto &m : masks)
        for (int k = 0; k < 3; ++k) {
            const int off = k == 1 ? 3 : 0;
            for (int j = 6; j < 9; ++j)
                for (int i = 6 + off; i < 9 + off; ++i) m.at(i, j, k) = kLvPool;
        }
    const align::Corrected c = align::correct(frames_for(masks), masks);
    for (int f = 0; f < 2; ++f) {
        const auto c0 = align::centroid2d(c.masks[std::size_t(f)], 0), c1 = align::centroid2d(c.masks[std::size_t(f)], 1);
        ASSERT_TRUE(c0 && c1);
        EXPECT_DOUBLE_EQ(c0->x, c1->x);
        EXPECT_DOUBLE_EQ(c0->y, c1->y);
    }
    EXPECT_EQ(c.shifts[1].offset, (SliceOffset{-3, 0}));
    // Images move with their masks.
    EXPECT_EQ(c.frames.frames[0].at(7, 7, 1), 30.0f);
}

TEST(Align, UnlabeledSlicesInheritNearestShift) {
    std::vector<LabelVolume> masks(2, slab(16, 16, 4));
    for (auto &m : masks) {
        m.at(5, 5, 0) = kLvPool;
        m.at(5, 5, 1) = kLvPool;
        m.at(9, 5, 2) = kLvPool;
    }
    const align::Corrected c = align::correct(frames_for(masks), masks);
    EXPECT_EQ(c.shifts[3].offset, c.shifts[2].offset);
}

TEST(Align, MissingLabelIsAnError) {
    std::vector<LabelVolume> masks(2, slab(4, 4, 2));
    EXPECT_THROW(align::correct(frames_for(masks), masks), Error);
}
