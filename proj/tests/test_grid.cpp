#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "panotok/errors.hpp"
#include "panotok/grid.hpp"

using namespace panotok;

namespace {
const GridSpec kDesk{3, 6, 8, 256};

std::vector<PatchCoord> coords(const NeighborSet& ns) {
    std::vector<PatchCoord> out;
    for (const auto& n : ns.patches) out.push_back(n.patch);
    return out;
}
}  // namespace

TEST_CASE("grid spec validation") {
    CHECK_NOTHROW(kDesk.validate());
    CHECK_THROWS_AS((GridSpec{0, 6, 8, 256}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{3, 2, 8, 256}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{3, 6, 1, 256}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{3, 6, 8, 1}.validate()), ConfigError);
    CHECK(kDesk.token_width() == 48);
    CHECK(kDesk.token_height() == 24);
    CHECK(kDesk.tokens_per_patch() == 64);
}

TEST_CASE("global_coord arithmetic") {
    CHECK(global_coord(kDesk, {0, 0}, 0, 0) == TokenCoord{0, 0});
    CHECK(global_coord(kDesk, {2, 5}, 7, 7) == TokenCoord{47, 23});
    const GridSpec wide{3, 6, 16, 256};
    CHECK(global_coord(wide, {1, 1}, 0, 0) == TokenCoord{16, 16});
    CHECK_THROWS_AS(global_coord(kDesk, {0, 0}, 8, 0), ConfigError);
    CHECK_THROWS_AS(global_coord(kDesk, {3, 0}, 0, 0), ConfigError);
}

TEST_CASE("global_coord is a bijection onto the token lattice") {
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < kDesk.rows; ++i) {
        for (int j = 0; j < kDesk.cols; ++j) {
            for (int v = 0; v < kDesk.patch_side; ++v) {
                for (int u = 0; u < kDesk.patch_side; ++u) {
                    const TokenCoord c = global_coord(kDesk, {i, j}, u, v);
                    CHECK(c.x >= 0);
                    CHECK(c.x < kDesk.token_width());
                    CHECK(c.y >= 0);
                    CHECK(c.y < kDesk.token_height());
                    seen.insert({c.x, c.y});
                }
            }
        }
    }
    CHECK(int(seen.size()) == kDesk.token_width() * kDesk.token_height());
}

TEST_CASE("window neighbors Y_W") {
    CHECK(window_neighbors_yw(kDesk, {0, 0}).patches.empty());
    CHECK(coords(window_neighbors_yw(kDesk, {1, 1})) ==
          std::vector<PatchCoord>{{0, 1}, {1, 0}, {0, 0}});
    CHECK(coords(window_neighbors_yw(kDesk, {0, 3})) == std::vector<PatchCoord>{{0, 2}});
    for (const auto& n : window_neighbors_yw(kDesk, {2, 5}).patches) CHECK_FALSE(n.wrapped);
}

TEST_CASE("sphere neighbors Y_S wrap horizontally, drop vertically") {
    const NeighborSet left = sphere_neighbors_ys(kDesk, {1, 0});
    CHECK(coords(left) == std::vector<PatchCoord>{{0, 5},
                                                  {0, 0},
                                                  {0, 1},
                                                  {1, 5},
                                                  {1, 1},
                                                  {2, 5},
                                                  {2, 0},
                                                  {2, 1}});
    for (const auto& n : left.patches) CHECK(n.wrapped == (n.patch.j == 5));

    CHECK(coords(sphere_neighbors_ys(kDesk, {0, 2})) ==
          std::vector<PatchCoord>{{0, 1}, {0, 3}, {1, 1}, {1, 2}, {1, 3}});

    const NeighborSet interior = sphere_neighbors_ys(kDesk, {1, 2});
    CHECK(interior.size() == 8);
    for (const auto& n : interior.patches) CHECK_FALSE(n.wrapped);
}

TEST_CASE("Y_S chebyshev distance 1 under x-wrap metric; Y_W precedes in raster order") {
    for (int i = 0; i < kDesk.rows; ++i) {
        for (int j = 0; j < kDesk.cols; ++j) {
            for (const auto& n : sphere_neighbors_ys(kDesk, {i, j}).patches) {
                const int dy = std::abs(n.patch.i - i);
                int dxr = std::abs(n.patch.j - j);
                dxr = std::min(dxr, kDesk.cols - dxr);
                CHECK(std::max(dy, dxr) == 1);
            }
            for (const auto& n : window_neighbors_yw(kDesk, {i, j}).patches) {
                CHECK(n.patch.i * kDesk.cols + n.patch.j < i * kDesk.cols + j);
            }
        }
    }
}

TEST_CASE("Y_S wrapped-entry counts at the seam columns") {
    for (int i = 1; i < kDesk.rows - 1; ++i) {
        int wrapped_left = 0, wrapped_right = 0;
        for (const auto& n : sphere_neighbors_ys(kDesk, {i, 0}).patches) wrapped_left += n.wrapped;
        for (const auto& n : sphere_neighbors_ys(kDesk, {i, kDesk.cols - 1}).patches) {
            wrapped_right += n.wrapped;
        }
        CHECK(wrapped_left == 3);
        CHECK(wrapped_right == 3);
    }
}

TEST_CASE("ARM window") {
    CHECK(arm_window(kDesk, {0, 0}).patches.empty());
    CHECK(coords(arm_window(kDesk, {2, 3})) ==
          std::vector<PatchCoord>{{2, 2}, {2, 1}, {1, 3}, {0, 3}});
    CHECK(coords(arm_window(kDesk, {0, 1})) == std::vector<PatchCoord>{{0, 0}});
    // ARM never wraps: the left-column patch sees no same-row neighbors.
    const NeighborSet ns = arm_window(kDesk, {1, 0});
    CHECK(coords(ns) == std::vector<PatchCoord>{{0, 0}});
}
