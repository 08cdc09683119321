#include <gtest/gtest.h>

#include <deque>
#include <functional>
#include <random>
#include <set>

#include "dtwin/skeleton.hpp"

using namespace dtwin;

namespace {

BinaryMask empty_mask(std::int64_t nx, std::int64_t ny, std::int64_t nz) {
    return BinaryMask(GridGeometry({nx, ny, nz}, {1, 1, 1}));
}

void set(BinaryMask& m, const Index3& v) { m.data[static_cast<std::size_t>(m.geometry.linear(v))] = 1; }

// Oracle: Euler characteristic of the union of closed voxel cubes, counted on
// the doubled lattice (cells with k odd coordinates have dimension k).
int euler_characteristic(const BinaryMask& m) {
    const auto& g = m.geometry;
    const std::int64_t X = 2 * g.dims[0] + 1, Y = 2 * g.dims[1] + 1, Z = 2 * g.dims[2] + 1;
    std::vector<std::uint8_t> cell(static_cast<std::size_t>(X * Y * Z), 0);
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        if (!m.data[static_cast<std::size_t>(l)]) continue;
        const Index3 v = g.index(l);
        for (int dz = 0; dz <= 2; ++dz)
            for (int dy = 0; dy <= 2; ++dy)
                for (int dx = 0; dx <= 2; ++dx)
                    cell[static_cast<std::size_t>((2 * v[0] + dx) + X * ((2 * v[1] + dy) + Y * (2 * v[2] + dz)))] = 1;
    }
    int chi = 0;
    for (std::int64_t z = 0; z < Z; ++z)
        for (std::int64_t y = 0; y < Y; ++y)
            for (std::int64_t x = 0; x < X; ++x) {
                if (!cell[static_cast<std::size_t>(x + X * (y + Y * z))]) continue;
                const int dim = static_cast<int>((x & 1) + (y & 1) + (z & 1));
                chi += (dim % 2 == 0) ? 1 : -1;
            }
    return chi;
}

// Oracle: number of 26-connected components by flood fill.
int components26(const BinaryMask& m) {
    const auto& g = m.geometry;
    std::vector<std::uint8_t> seen(m.data.size(), 0);
    int n = 0;
    for (std::int64_t s = 0; s < g.voxel_count(); ++s) {
        if (!m.data[static_cast<std::size_t>(s)] || seen[static_cast<std::size_t>(s)]) continue;
        ++n;
        std::vector<std::int64_t> stack{s};
        seen[static_cast<std::size_t>(s)] = 1;
        while (!stack.empty()) {
            const Index3 v = g.index(stack.back());
            stack.pop_back();
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const Index3 w{v[0] + dx, v[1] + dy, v[2] + dz};
                        if (!g.contains(w)) continue;
                        const auto l = static_cast<std::size_t>(g.linear(w));
                        if (m.data[l] && !seen[l]) {
                            seen[l] = 1;
                            stack.push_back(g.linear(w));
                        }
                    }
        }
    }
    return n;
}

BinaryMask random_blob(std::uint64_t seed) {
    BinaryMask m = empty_mask(18, 18, 18);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(3.0, 15.0), rad(1.5, 4.0);
    std::uniform_int_distribution<int> count(1, 5);
    const int n = count(rng);
    for (int s = 0; s < n; ++s) {
        const Vec3 c{pos(rng), pos(rng), pos(rng)};
        const double r = rad(rng);
        for (std::int64_t l = 0; l < m.geometry.voxel_count(); ++l)
            if (norm(m.geometry.world(l) - c) <= r) m.data[static_cast<std::size_t>(l)] = 1;
    }
    return m;
}

// Y-shaped fixture: stem of 10 voxels along z, long arm of 10 and short arm
// of 6 rising diagonally from the stem top.
BinaryMask y_shape() {
    BinaryMask m = empty_mask(24, 21, 22);
    for (int z = 0; z < 10; ++z) set(m, {10, 10, z});
    for (int k = 1; k <= 10; ++k) set(m, {10 + k, 10, 9 + k});
    for (int k = 1; k <= 6; ++k) set(m, {10 - k, 10, 9 + k});
    return m;
}

// Oracle: longest simple path (node count) by exhaustive DFS over voxel adjacency.
std::size_t longest_simple_path(const BinaryMask& m) {
    std::vector<Index3> nodes;
    for (std::int64_t l = 0; l < m.geometry.voxel_count(); ++l)
        if (m.data[static_cast<std::size_t>(l)]) nodes.push_back(m.geometry.index(l));
    auto adjacent = [](const Index3& a, const Index3& b) {
        return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])}) == 1;
    };
    std::size_t best = 0;
    std::vector<bool> used(nodes.size(), false);
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t at, std::size_t len) {
        best = std::max(best, len);
        for (std::size_t b = 0; b < nodes.size(); ++b) {
            if (used[b] || !adjacent(nodes[at], nodes[b])) continue;
            used[b] = true;
            dfs(b, len + 1);
            used[b] = false;
        }
    };
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        used[s] = true;
        dfs(s, 1);
        used[s] = false;
    }
    return best;
}

}  // namespace

TEST(SimplePoint, Basics) {
    std::array<bool, 27> c{};
    c[13] = true;
    EXPECT_FALSE(is_simple_point(c));  // isolated point
    c[12] = true;
    EXPECT_TRUE(is_simple_point(c));  // line end
    c[14] = true;
    EXPECT_FALSE(is_simple_point(c));  // line interior
    std::array<bool, 27> full{};
    full.fill(true);
    EXPECT_FALSE(is_simple_point(full));  // interior point would create a cavity
}

TEST(Thin, SingleVoxelUnchanged) {
    BinaryMask m = empty_mask(5, 5, 5);
    set(m, {2, 2, 2});
    EXPECT_EQ(thin(m).data, m.data);
}

TEST(Thin, DigitalLineUnchanged) {
    BinaryMask m = empty_mask(30, 12, 12);
    for (int i = 0; i < 20; ++i) set(m, {i + 2, 2 + i / 3, 3 + i / 4});
    ASSERT_EQ(m.count(), 20);
    ASSERT_EQ(components26(m), 1);
    EXPECT_EQ(thin(m).data, m.data);
}

TEST(Thin, BoxSkeletonFollowsAxis) {
    BinaryMask m = empty_mask(9, 9, 44);
    for (int z = 2; z < 42; ++z)
        for (int y = 2; y < 7; ++y)
            for (int x = 2; x < 7; ++x) set(m, {x, y, z});
    const auto sk = thin(m);
    const auto path = longest_voxel_path(build_graph(sk));
    EXPECT_GE(path.size(), 36u);
    EXPECT_LE(path.size(), 44u);
    for (std::int64_t l = 0; l < sk.geometry.voxel_count(); ++l) {
        if (!sk.data[static_cast<std::size_t>(l)]) continue;
        const Index3 v = sk.geometry.index(l);
        EXPECT_LE(std::hypot(static_cast<double>(v[0] - 4), static_cast<double>(v[1] - 4)), 2.0);
    }
}

TEST(Thin, TopologyAndIdempotenceOnRandomBlobs) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = random_blob(seed);
        const auto sk = thin(m);
        for (std::size_t i = 0; i < m.data.size(); ++i)
            if (sk.data[i]) ASSERT_TRUE(m.data[i]) << "seed " << seed;
        EXPECT_EQ(components26(sk), components26(m)) << "seed " << seed;
        EXPECT_EQ(euler_characteristic(sk), euler_characteristic(m)) << "seed " << seed;
        EXPECT_EQ(thin(sk).data, sk.data) << "seed " << seed;
    }
}

TEST(Thin, EmptyLabelRejected) {
    LabelMask m(GridGeometry({4, 4, 4}, {1, 1, 1}));
    try {
        thin(m, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "skeleton.empty_label");
    }
}

TEST(Graph, EmptyAndLine) {
    EXPECT_TRUE(build_graph(empty_mask(4, 4, 4)).nodes.empty());
    BinaryMask line = empty_mask(12, 3, 3);
    for (int i = 0; i < 10; ++i) set(line, {i + 1, 1, 1});
    const auto g = build_graph(line);
    EXPECT_EQ(g.nodes.size(), 10u);
    EXPECT_EQ(g.edges.size(), 9u);
    for (auto [a, b] : g.edges) {
        const auto& p = g.nodes[static_cast<std::size_t>(a)];
        const auto& q = g.nodes[static_cast<std::size_t>(b)];
        EXPECT_EQ(std::max({std::abs(p[0] - q[0]), std::abs(p[1] - q[1]), std::abs(p[2] - q[2])}), 1);
    }
    const auto path = longest_voxel_path(g);
    EXPECT_EQ(path.size(), 10u);
}

TEST(Graph, YShapeHasOneJunction) {
    const auto g = build_graph(y_shape());
    int junctions = 0;
    for (std::size_t n = 0; n < g.nodes.size(); ++n)
        if (g.degree(static_cast<int>(n)) == 3) ++junctions;
    EXPECT_EQ(junctions, 1);
    EXPECT_EQ(g.nodes.size(), 26u);
}

TEST(LongestPath, YShapeKeepsTwoLongestBranches) {
    const auto m = y_shape();
    const auto path = longest_voxel_path(build_graph(m));
    EXPECT_EQ(path.size(), longest_simple_path(m));
    EXPECT_EQ(path.size(), 20u);
    const std::set<Index3> on_path(path.begin(), path.end());
    for (int k = 1; k <= 6; ++k) EXPECT_FALSE(on_path.contains(Index3{10 - k, 10, 9 + k}));
    const std::set<Index3> ends{path.front(), path.back()};
    EXPECT_TRUE(ends.contains(Index3{10, 10, 0}));
    EXPECT_TRUE(ends.contains(Index3{20, 10, 19}));
}

TEST(LongestPath, ManualEndpoints) {
    const auto g = build_graph(y_shape());
    const Index3 short_tip{4, 10, 15}, long_tip{20, 10, 19};
    const auto path = longest_voxel_path(g, Endpoints{short_tip, long_tip});
    EXPECT_EQ(path.front(), short_tip);
    EXPECT_EQ(path.back(), long_tip);
    EXPECT_EQ(path.size(), 17u);
    try {
        longest_voxel_path(g, Endpoints{Index3{0, 0, 0}, long_tip});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "skeleton.endpoint_missing");
    }
    EXPECT_THROW(longest_voxel_path(build_graph(empty_mask(3, 3, 3))), Error);
}

TEST(LongestPath, AtLeastAnySampledPath) {
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        const auto g = build_graph(thin(random_blob(seed)));
        const auto best = longest_voxel_path(g).size();
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, g.nodes.size() - 1);
        for (int t = 0; t < 20; ++t) {
            const auto a = g.nodes[pick(rng)], b = g.nodes[pick(rng)];
            try {
                EXPECT_GE(best, longest_voxel_path(g, Endpoints{a, b}).size());
            } catch (const Error&) {
                // different components
            }
        }
    }
}

TEST(LongestPath, CylinderArcLengthAndFrames) {
    // Digital cylinder of radius 4 voxels and analytic length 50 along z.
    BinaryMask m(GridGeometry({15, 15, 60}, {1.0, 1.0, 1.0}));
    for (std::int64_t l = 0; l < m.geometry.voxel_count(); ++l) {
        const Vec3 p = m.geometry.world(l);
        if (std::hypot(p.x - 7, p.y - 7) <= 4.0 && p.z >= 5 && p.z < 55) m.data[static_cast<std::size_t>(l)] = 1;
    }
    const auto c = longest_path(build_graph(thin(m)));
    EXPECT_NEAR(c.length(), 50.0, 0.15 * 50.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& f = c.frames[i];
        EXPECT_NEAR(norm(f.tangent), 1.0, 1e-9);
        EXPECT_NEAR(norm(f.normal), 1.0, 1e-9);
        EXPECT_NEAR(norm(f.binormal), 1.0, 1e-9);
        EXPECT_NEAR(dot(f.tangent, f.normal), 0.0, 1e-9);
        EXPECT_NEAR(dot(f.tangent, f.binormal), 0.0, 1e-9);
        EXPECT_NEAR(dot(f.normal, f.binormal), 0.0, 1e-9);
        if (i > 0) {
            EXPECT_GT(c.arclength[i], c.arclength[i - 1]);
            EXPECT_GT(dot(f.normal, c.frames[i - 1].normal), 0.0);
        }
    }
}
