#include "panotok/grid.hpp"

#include <string>

#include "panotok/errors.hpp"

namespace panotok {

void GridSpec::validate() const {
    if (rows < 1) throw ConfigError("grid: rows must be >= 1");
    // C >= 3 keeps wrapped neighbors distinct from the patch itself.
    if (cols < 3) throw ConfigError("grid: cols must be >= 3");
    if (patch_side < 2) throw ConfigError("grid: patch_side must be >= 2");
    if (vocab < 2) throw ConfigError("grid: vocab must be >= 2");
}

namespace {

void check_patch(const GridSpec& spec, PatchCoord patch) {
    if (patch.i < 0 || patch.i >= spec.rows || patch.j < 0 || patch.j >= spec.cols) {
        throw ConfigError("grid: patch (" + std::to_string(patch.i) + "," +
                          std::to_string(patch.j) + ") out of range");
    }
}

bool in_range(const GridSpec& spec, int i, int j) {
    return i >= 0 && i < spec.rows && j >= 0 && j < spec.cols;
}

}  // namespace

TokenCoord global_coord(const GridSpec& spec, PatchCoord patch, int u, int v) {
    check_patch(spec, patch);
    if (u < 0 || u >= spec.patch_side || v < 0 || v >= spec.patch_side) {
        throw ConfigError("grid: local index (" + std::to_string(u) + "," +
                          std::to_string(v) + ") out of range");
    }
    return TokenCoord{patch.j * spec.patch_side + u, patch.i * spec.patch_side + v};
}

NeighborSet window_neighbors_yw(const GridSpec& spec, PatchCoord patch) {
    check_patch(spec, patch);
    NeighborSet out{NeighborKind::YW, {}};
    const int i = patch.i, j = patch.j;
    const PatchCoord candidates[3] = {{i - 1, j}, {i, j - 1}, {i - 1, j - 1}};
    for (const auto& c : candidates) {
        if (in_range(spec, c.i, c.j)) out.patches.push_back({c, false});
    }
    return out;
}

NeighborSet sphere_neighbors_ys(const GridSpec& spec, PatchCoord patch) {
    check_patch(spec, patch);
    NeighborSet out{NeighborKind::YS, {}};
    const int i = patch.i, j = patch.j, C = spec.cols;
    const PatchCoord candidates[8] = {{i - 1, j - 1}, {i - 1, j}, {i - 1, j + 1},
                                      {i, j - 1},     {i, j + 1},
                                      {i + 1, j - 1}, {i + 1, j}, {i + 1, j + 1}};
    for (const auto& c : candidates) {
        if (c.i < 0 || c.i >= spec.rows) continue;  // y never wraps
        const bool wrapped = c.j < 0 || c.j >= C;
        const int jj = ((c.j % C) + C) % C;
        out.patches.push_back({{c.i, jj}, wrapped});
    }
    return out;
}

NeighborSet arm_window(const GridSpec& spec, PatchCoord patch) {
    check_patch(spec, patch);
    NeighborSet out{NeighborKind::ARM, {}};
    const int i = patch.i, j = patch.j;
    const PatchCoord candidates[4] = {{i, j - 1}, {i, j - 2}, {i - 1, j}, {i - 2, j}};
    for (const auto& c : candidates) {
        if (in_range(spec, c.i, c.j)) out.patches.push_back({c, false});
    }
    return out;
}

}  // namespace panotok
