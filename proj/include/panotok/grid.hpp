#pragma once

#include <cstdint>
#include <vector>

namespace panotok {

// Equirectangular patch/token grid geometry. The panorama is an R x C grid
// of view patches, each patch a p x p block of tokens; the token lattice is
// w = C*p wide and h = R*p tall. Horizontally the lattice is a ring (x wraps),
// vertically it is not (poles).
struct GridSpec {
    int rows = 3;        // R, patch rows
    int cols = 6;        // C, patch columns
    int patch_side = 8;  // p, tokens per patch edge
    int vocab = 256;     // V, token id count; id V is the reserved [MASK]

    int token_width() const { return cols * patch_side; }
    int token_height() const { return rows * patch_side; }
    int tokens_per_patch() const { return patch_side * patch_side; }
    int patch_count() const { return rows * cols; }

    // Throws ConfigError when any bound is violated.
    void validate() const;
};

struct PatchCoord {
    int i = 0;  // row, 0-based from top
    int j = 0;  // column, 0-based from left

    bool operator==(const PatchCoord&) const = default;
};

struct TokenCoord {
    int x = 0;  // global horizontal token index
    int y = 0;  // global vertical token index

    bool operator==(const TokenCoord&) const = default;
};

enum class NeighborKind { YW, YS, ARM };

struct Neighbor {
    PatchCoord patch;
    bool wrapped = false;  // true iff reached by crossing the x boundary

    bool operator==(const Neighbor&) const = default;
};

struct NeighborSet {
    NeighborKind kind = NeighborKind::YW;
    std::vector<Neighbor> patches;  // fixed, documented order

    std::size_t size() const { return patches.size(); }
};

// Global token coordinate of local position (u, v) inside a patch:
// x = j*p + u, y = i*p + v. Throws ConfigError on out-of-range input.
TokenCoord global_coord(const GridSpec& spec, PatchCoord patch, int u, int v);

// Upper-left window conditioning neighborhood: in-range subset of
// [(i-1,j), (i,j-1), (i-1,j-1)], in that order, never wrapping.
NeighborSet window_neighbors_yw(const GridSpec& spec, PatchCoord patch);

// Full 8-neighborhood [(i-1,j-1),(i-1,j),(i-1,j+1),(i,j-1),(i,j+1),
// (i+1,j-1),(i+1,j),(i+1,j+1)]: columns wrap modulo C (wrapped_flag set),
// out-of-range rows are dropped.
NeighborSet sphere_neighbors_ys(const GridSpec& spec, PatchCoord patch);

// Autoregressive attention window: in-range subset of
// [(i,j-1), (i,j-2), (i-1,j), (i-2,j)], in that order, never wrapping.
NeighborSet arm_window(const GridSpec& spec, PatchCoord patch);

}  // namespace panotok
