#include "dtwin/skeleton.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>

namespace dtwin {

namespace {

struct CubeTopology {
    std::array<std::array<int, 3>, 27> offset{};
    std::array<int, 27> order{};  // 1 face, 2 edge, 3 corner
    std::array<std::vector<int>, 27> adj26;
    std::array<std::vector<int>, 27> adj6_n18;

    CubeTopology() {
        for (int p = 0; p < 27; ++p) {
            offset[p] = {p % 3 - 1, (p / 3) % 3 - 1, p / 9 - 1};
            order[p] = std::abs(offset[p][0]) + std::abs(offset[p][1]) + std::abs(offset[p][2]);
        }
        for (int p = 0; p < 27; ++p) {
            if (p == 13) continue;
            for (int q = 0; q < 27; ++q) {
                if (q == 13 || q == p) continue;
                int cheb = 0, manh = 0;
                for (int a = 0; a < 3; ++a) {
                    const int d = std::abs(offset[p][a] - offset[q][a]);
                    cheb = std::max(cheb, d);
                    manh += d;
                }
                if (cheb == 1) adj26[p].push_back(q);
                if (manh == 1 && order[p] <= 2 && order[q] <= 2) adj6_n18[p].push_back(q);
            }
        }
    }
};

const CubeTopology& topo() {
    static const CubeTopology t;
    return t;
}

// Padded working image: one voxel of background on every side.
struct Padded {
    Index3 dims{};
    std::vector<std::uint8_t> v;
    std::array<std::int64_t, 27> rel{};

    explicit Padded(const BinaryMask& m) {
        const auto& g = m.geometry;
        dims = {g.dims[0] + 2, g.dims[1] + 2, g.dims[2] + 2};
        v.assign(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), 0);
        for (std::int64_t k = 0; k < g.dims[2]; ++k)
            for (std::int64_t j = 0; j < g.dims[1]; ++j)
                for (std::int64_t i = 0; i < g.dims[0]; ++i)
                    v[static_cast<std::size_t>(lin(i + 1, j + 1, k + 1))] = m.at({i, j, k}) ? 1 : 0;
        for (int p = 0; p < 27; ++p) {
            const auto& o = topo().offset[p];
            rel[p] = o[0] + dims[0] * (o[1] + dims[1] * o[2]);
        }
    }
    std::int64_t lin(std::int64_t i, std::int64_t j, std::int64_t k) const { return i + dims[0] * (j + dims[1] * k); }
    Index3 coords(std::int64_t l) const { return {l % dims[0], (l / dims[0]) % dims[1], l / (dims[0] * dims[1])}; }

    std::array<bool, 27> cube(std::int64_t at) const {
        std::array<bool, 27> c{};
        for (int p = 0; p < 27; ++p) c[p] = v[static_cast<std::size_t>(at + rel[p])] != 0;
        return c;
    }
};

int count_neighbours(const std::array<bool, 27>& c) {
    int n = 0;
    for (int p = 0; p < 27; ++p)
        if (p != 13 && c[p]) ++n;
    return n;
}

}  // namespace

bool is_simple_point(const std::array<bool, 27>& cube) {
    const auto& t = topo();
    // Foreground: exactly one 26-component in the punctured neighbourhood.
    std::array<bool, 27> seen{};
    int fg_components = 0;
    for (int s = 0; s < 27; ++s) {
        if (s == 13 || !cube[s] || seen[s]) continue;
        if (++fg_components > 1) return false;
        std::vector<int> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            for (int q : t.adj26[p])
                if (cube[q] && !seen[q]) {
                    seen[q] = true;
                    stack.push_back(q);
                }
        }
    }
    if (fg_components != 1) return false;

    // Background: exactly one 6-component of N18 that touches a face neighbour.
    seen.fill(false);
    int bg_components = 0;
    for (int s = 0; s < 27; ++s) {
        if (s == 13 || t.order[s] != 1 || cube[s] || seen[s]) continue;
        if (++bg_components > 1) return false;
        std::vector<int> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            for (int q : t.adj6_n18[p])
                if (!cube[q] && !seen[q]) {
                    seen[q] = true;
                    stack.push_back(q);
                }
        }
    }
    return bg_components == 1;
}

BinaryMask thin(const BinaryMask& mask) {
    Padded img(mask);
    std::vector<std::int64_t> fg;
    for (std::int64_t l = 0; l < static_cast<std::int64_t>(img.v.size()); ++l)
        if (img.v[static_cast<std::size_t>(l)]) fg.push_back(l);

    // Pass order -y, +y, +x, -x, +z, -z, expressed as cube positions.
    constexpr std::array<int, 6> kPassNeighbour = {10, 16, 14, 12, 22, 4};
    std::vector<std::int64_t> candidates, border;
    auto sweep = [&] {
        bool changed = true;
        while (changed) {
            changed = false;
            for (int dir : kPassNeighbour) {
                // Border voxels are fixed at the start of the pass, so one pass peels one layer.
                border.clear();
                for (std::int64_t l : fg)
                    if (!img.v[static_cast<std::size_t>(l + img.rel[dir])]) border.push_back(l);
                // Eight parity subfields; no two voxels of one subfield are 26-adjacent.
                for (int sub = 0; sub < 8; ++sub) {
                    candidates.clear();
                    for (std::int64_t l : border) {
                        if (img.v[static_cast<std::size_t>(l)] == 0) continue;
                        const auto [i, j, k] = img.coords(l);
                        if ((i & 1) + 2 * (j & 1) + 4 * (k & 1) != sub) continue;
                        const auto c = img.cube(l);
                        if (count_neighbours(c) == 1) continue;
                        if (is_simple_point(c)) candidates.push_back(l);
                    }
                    for (std::int64_t l : candidates) img.v[static_cast<std::size_t>(l)] = 0;
                    if (!candidates.empty()) changed = true;
                }
                std::erase_if(fg, [&](std::int64_t l) { return img.v[static_cast<std::size_t>(l)] == 0; });
            }
        }
    };

    // Spurs: branches of at most kMaxSpur voxels from a line end to a junction.
    constexpr std::size_t kMaxSpur = 3;
    constexpr int kMaxPruneRounds = 4;
    auto find_spurs = [&] {
        std::vector<std::int64_t> spurs;
        for (std::int64_t l : fg) {
            if (count_neighbours(img.cube(l)) != 1) continue;
            std::vector<std::int64_t> branch{l};
            std::int64_t prev = -1, cur = l;
            while (branch.size() <= kMaxSpur) {
                const auto c = img.cube(cur);
                std::int64_t next = -1;
                for (int p = 0; p < 27; ++p)
                    if (p != 13 && c[p] && cur + img.rel[p] != prev) next = cur + img.rel[p];
                if (next < 0) break;
                const int n = count_neighbours(img.cube(next));
                if (n >= 3) {
                    spurs.insert(spurs.end(), branch.begin(), branch.end());
                    break;
                }
                if (n != 2) break;
                prev = cur;
                cur = next;
                branch.push_back(cur);
            }
        }
        return spurs;
    };

    sweep();
    for (int round = 0; round < kMaxPruneRounds; ++round) {
        const auto spurs = find_spurs();
        if (spurs.empty()) break;
        for (std::int64_t l : spurs) img.v[static_cast<std::size_t>(l)] = 0;
        std::erase_if(fg, [&](std::int64_t l) { return img.v[static_cast<std::size_t>(l)] == 0; });
        sweep();
    }

    BinaryMask out(mask.geometry);
    const auto& g = mask.geometry;
    for (std::int64_t k = 0; k < g.dims[2]; ++k)
        for (std::int64_t j = 0; j < g.dims[1]; ++j)
            for (std::int64_t i = 0; i < g.dims[0]; ++i)
                out.data[static_cast<std::size_t>(g.linear(i, j, k))] = img.v[static_cast<std::size_t>(img.lin(i + 1, j + 1, k + 1))];
    return out;
}

BinaryMask thin(const LabelMask& mask, int label) {
    BinaryMask sel = select_label(mask, label);
    if (sel.count() == 0) {
        std::ostringstream os;
        os << "label " << label << " has no voxels";
        throw Error("skeleton.empty_label", os.str());
    }
    return thin(sel);
}

int SkeletonGraph::find(const Index3& voxel) const {
    if (!geometry.contains(voxel)) return -1;
    const auto key = geometry.linear(voxel);
    auto it = std::lower_bound(nodes.begin(), nodes.end(), key,
                               [&](const Index3& a, std::int64_t k) { return geometry.linear(a) < k; });
    if (it == nodes.end() || geometry.linear(*it) != key) return -1;
    return static_cast<int>(it - nodes.begin());
}

SkeletonGraph build_graph(const BinaryMask& skeleton) {
    SkeletonGraph g;
    g.geometry = skeleton.geometry;
    const auto& geo = skeleton.geometry;
    std::vector<int> node_of(static_cast<std::size_t>(geo.voxel_count()), -1);
    for (std::int64_t l = 0; l < geo.voxel_count(); ++l) {
        if (!skeleton.data[static_cast<std::size_t>(l)]) continue;
        node_of[static_cast<std::size_t>(l)] = static_cast<int>(g.nodes.size());
        g.nodes.push_back(geo.index(l));
    }
    g.adjacency.resize(g.nodes.size());
    for (std::size_t a = 0; a < g.nodes.size(); ++a) {
        const Index3 v = g.nodes[a];
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const Index3 n{v[0] + dx, v[1] + dy, v[2] + dz};
                    if (!geo.contains(n)) continue;
                    const int b = node_of[static_cast<std::size_t>(geo.linear(n))];
                    if (b < 0) continue;
                    g.adjacency[a].push_back(b);
                    if (static_cast<int>(a) < b) g.edges.emplace_back(static_cast<int>(a), b);
                }
        std::sort(g.adjacency[a].begin(), g.adjacency[a].end());
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

namespace {

struct Bfs {
    std::vector<int> dist;
    std::vector<int> parent;
};

Bfs bfs(const SkeletonGraph& g, int source) {
    Bfs r;
    r.dist.assign(g.nodes.size(), -1);
    r.parent.assign(g.nodes.size(), -1);
    std::deque<int> queue{source};
    r.dist[static_cast<std::size_t>(source)] = 0;
    while (!queue.empty()) {
        const int a = queue.front();
        queue.pop_front();
        for (int b : g.adjacency[static_cast<std::size_t>(a)]) {
            if (r.dist[static_cast<std::size_t>(b)] >= 0) continue;
            r.dist[static_cast<std::size_t>(b)] = r.dist[static_cast<std::size_t>(a)] + 1;
            r.parent[static_cast<std::size_t>(b)] = a;
            queue.push_back(b);
        }
    }
    return r;
}

int farthest(const Bfs& r) {
    int best = -1;
    for (std::size_t i = 0; i < r.dist.size(); ++i)
        if (r.dist[i] > (best < 0 ? -1 : r.dist[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    return best;
}

std::vector<int> trace(const Bfs& r, int target) {
    std::vector<int> path;
    for (int n = target; n >= 0; n = r.parent[static_cast<std::size_t>(n)]) path.push_back(n);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

std::vector<Index3> longest_voxel_path(const SkeletonGraph& graph, const std::optional<Endpoints>& endpoints) {
    if (graph.nodes.empty()) throw Error("skeleton.empty_graph", "skeleton graph is empty");

    std::vector<int> path;
    if (endpoints) {
        const int a = graph.find(endpoints->first);
        const int b = graph.find(endpoints->second);
        if (a < 0 || b < 0) throw Error("skeleton.endpoint_missing", "endpoint is not a skeleton voxel");
        const Bfs r = bfs(graph, a);
        if (r.dist[static_cast<std::size_t>(b)] < 0)
            throw Error("skeleton.disconnected", "endpoints lie in different skeleton components");
        path = trace(r, b);
    } else {
        // Components, largest first (ties: lowest first node).
        std::vector<int> comp(graph.nodes.size(), -1);
        std::vector<std::pair<int, int>> sizes;  // (size, first node)
        for (std::size_t s = 0; s < graph.nodes.size(); ++s) {
            if (comp[s] >= 0) continue;
            const Bfs r = bfs(graph, static_cast<int>(s));
            int count = 0;
            for (std::size_t i = 0; i < r.dist.size(); ++i)
                if (r.dist[i] >= 0) {
                    comp[i] = static_cast<int>(sizes.size());
                    ++count;
                }
            sizes.emplace_back(count, static_cast<int>(s));
        }
        if (sizes.size() > 1) {
            std::ostringstream os;
            os << "skeleton has " << sizes.size() << " components; using the largest";
            warn(os.str());
        }
        auto best = std::max_element(sizes.begin(), sizes.end(), [](const auto& x, const auto& y) {
            return x.first < y.first || (x.first == y.first && x.second > y.second);
        });
        const Bfs first = bfs(graph, best->second);
        const int e1 = farthest(first);
        const Bfs second = bfs(graph, e1);
        const int e2 = farthest(second);
        path = trace(second, e2);
    }
    std::vector<Index3> voxels;
    voxels.reserve(path.size());
    for (int n : path) voxels.push_back(graph.nodes[static_cast<std::size_t>(n)]);
    return voxels;
}

Centerline longest_path(const SkeletonGraph& graph, const std::optional<Endpoints>& endpoints) {
    const auto voxels = longest_voxel_path(graph, endpoints);
    std::vector<Vec3> world;
    world.reserve(voxels.size());
    for (const auto& v : voxels) world.push_back(graph.geometry.world(v));
    const std::size_t n = world.size();
    std::vector<Vec3> smooth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t half = std::min<std::size_t>({2, i, n - 1 - i});
        Vec3 acc{};
        for (std::size_t j = i - half; j <= i + half; ++j) acc += world[j];
        smooth[i] = acc / static_cast<double>(2 * half + 1);
    }
    return make_centerline(std::move(smooth));
}

Centerline extract_centerline(const LabelMask& mask, int label, const std::optional<Endpoints>& endpoints) {
    return longest_path(build_graph(thin(mask, label)), endpoints);
}

}  // namespace dtwin
