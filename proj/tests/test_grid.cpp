#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "dtwin/grid.hpp"

using namespace dtwin;

namespace {

GridGeometry geom(std::int64_t nx, std::int64_t ny, std::int64_t nz, Vec3 sp = {1, 1, 1}, Vec3 org = {}) {
    return GridGeometry({nx, ny, nz}, sp, org);
}

}  // namespace

TEST(Geometry, RejectsBadDimsAndSpacing) {
    EXPECT_THROW(geom(0, 1, 1), Error);
    EXPECT_THROW(geom(1, 1, 1, {1, 0, 1}), Error);
    EXPECT_THROW(geom(1, 1, 1, {1, -2, 1}), Error);
}

TEST(Geometry, WorldIndexBijection) {
    const auto g = geom(7, 5, 3, {1.5, 0.7, 2.0}, {-10.0, 3.25, 4.0});
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin) {
        const Index3 v = g.index(lin);
        EXPECT_EQ(g.linear(v), lin);
        EXPECT_EQ(g.nearest_index(g.world(v)), v);
    }
}

TEST(Trilinear, VoxelCenterReturnsValue) {
    ScalarGrid s(geom(3, 3, 3, {2, 2, 2}, {1, 1, 1}));
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<double>(i) * 0.37;
    for (std::int64_t lin = 0; lin < s.geometry.voxel_count(); ++lin)
        EXPECT_EQ(sample_trilinear(s, s.geometry.world(lin)), s.values[static_cast<std::size_t>(lin)]);
}

TEST(Trilinear, MidpointAndBackground) {
    ScalarGrid s(geom(2, 1, 1));
    s.values = {2.0, 4.0};
    EXPECT_DOUBLE_EQ(sample_trilinear(s, {0.5, 0, 0}), 3.0);
    EXPECT_EQ(sample_trilinear(s, {-0.01, 0, 0}), 0.0);
    EXPECT_EQ(sample_trilinear(s, {1.5, 0, 0}), 0.0);
    EXPECT_EQ(sample_trilinear(s, {0.5, 0, 0.2}), 0.0);
    EXPECT_EQ(sample_trilinear(s, {5, 0, 0}, -7.0), -7.0);
}

TEST(Trilinear, ExactOnAffineImages) {
    const auto g = geom(9, 8, 7, {1.2, 0.9, 2.5}, {-4, 2, 1});
    const Vec3 a{0.31, -1.7, 0.45};
    const double b = 12.5;
    ScalarGrid s(g);
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin)
        s.values[static_cast<std::size_t>(lin)] = dot(a, g.world(lin)) + b;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0, 8), uy(0, 7), uz(0, 6);
    for (int t = 0; t < 2000; ++t) {
        const Vec3 idx{ux(rng), uy(rng), uz(rng)};
        const Vec3 w = g.origin + hadamard(idx, g.spacing);
        EXPECT_NEAR(sample_trilinear(s, w), dot(a, w) + b, 1e-9);
    }
}

TEST(WarpPull, ZeroFieldIsIdentity) {
    const auto g = geom(6, 5, 4, {1.5, 1.5, 2.0}, {-3.3, 0.1, 7.7});
    ScalarGrid s(g);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 1);
    for (auto& v : s.values) v = n(rng);
    VectorField f(g, FieldConvention::backward_pull);
    const auto out = warp_pull(s, f);
    EXPECT_EQ(out.values, s.values);
}

TEST(WarpPull, IntegerShiftIsBitExact) {
    const auto g = geom(10, 6, 5, {1.5, 1.5, 2.0}, {-95.25, 0.3, 1.1});
    ScalarGrid s(g);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    for (auto& v : s.values) v = n(rng);
    VectorField f(g, FieldConvention::backward_pull);
    for (auto& v : f.vectors) v = {-1.5, 0, 0};  // one voxel along axis 0
    const auto out = warp_pull(s, f);
    for (std::int64_t k = 0; k < 5; ++k)
        for (std::int64_t j = 0; j < 6; ++j)
            for (std::int64_t i = 1; i < 10; ++i) EXPECT_EQ(out.at({i, j, k}), s.at({i - 1, j, k}));
}

TEST(WarpPull, RampStaysInRangeAndConventionChecked) {
    const auto g = geom(12, 12, 12);
    ScalarGrid s(g);
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin) s.values[static_cast<std::size_t>(lin)] = g.world(lin).x;
    VectorField f(g, FieldConvention::backward_pull);
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin) {
        const Vec3 w = g.world(lin);
        f.vectors[static_cast<std::size_t>(lin)] = {1.3 * std::sin(w.y * 0.4), 0.8 * std::cos(w.z * 0.3), 0.5};
    }
    const auto out = warp_pull(s, f);
    for (double v : out.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 11.0);
    }
    f.convention = FieldConvention::forward_push;
    EXPECT_THROW(warp_pull(s, f), Error);
}

TEST(WarpPull, WorkerCountDoesNotChangeResult) {
    const auto g = geom(17, 13, 11);
    ScalarGrid s(g);
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin)
        s.values[static_cast<std::size_t>(lin)] = std::sin(0.3 * static_cast<double>(lin));
    VectorField f(g, FieldConvention::backward_pull);
    for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin)
        f.vectors[static_cast<std::size_t>(lin)] = {0.3, -0.7 * std::cos(0.01 * static_cast<double>(lin)), 0.2};
    EXPECT_EQ(warp_pull(s, f, {1}).values, warp_pull(s, f, {4}).values);
}

TEST(Masks, DilateAndSelect) {
    LabelMask m(geom(7, 7, 7));
    m.labels[static_cast<std::size_t>(m.geometry.linear({3, 3, 3}))] = 2;
    m.label_names[2] = "stomach";
    const auto b = select_label(m, 2);
    EXPECT_EQ(b.count(), 1);
    EXPECT_EQ(dilate(b, 1).count(), 27);
    EXPECT_EQ(dilate(b, 2).count(), 125);
    m.labels[0] = 5;
    EXPECT_THROW(m.validate(), Error);
}

TEST(Morphology, DilateMatchesBruteForce) {
    const GridGeometry g({13, 11, 9}, {1, 1, 1});
    BinaryMask m(g);
    std::mt19937 rng(3);
    for (auto& x : m.data) x = (rng() % 97 == 0) ? 1 : 0;
    for (int steps : {0, 1, 2, 4}) {
        const auto d = dilate(m, steps);
        for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
            const Index3 v = g.index(l);
            bool expect = false;
            for (std::int64_t o = 0; o < g.voxel_count() && !expect; ++o) {
                const Index3 w = g.index(o);
                if (m.data[static_cast<std::size_t>(o)] && std::abs(w[0] - v[0]) <= steps &&
                    std::abs(w[1] - v[1]) <= steps && std::abs(w[2] - v[2]) <= steps)
                    expect = true;
            }
            ASSERT_EQ(d.at(v), expect) << steps;
        }
    }
}

TEST(Morphology, DistanceMapMatchesBruteForce) {
    const GridGeometry g({12, 10, 8}, {1.5, 1.0, 2.5});
    BinaryMask m(g);
    std::mt19937 rng(5);
    for (auto& x : m.data) x = (rng() % 53 == 0) ? 1 : 0;
    const auto d = distance_map(m);
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t o = 0; o < g.voxel_count(); ++o)
            if (m.data[static_cast<std::size_t>(o)]) best = std::min(best, norm(g.world(l) - g.world(o)));
        ASSERT_NEAR(d.values[static_cast<std::size_t>(l)], best, 1e-9);
    }
    EXPECT_TRUE(std::isinf(distance_map(BinaryMask(g)).values[0]));
}
