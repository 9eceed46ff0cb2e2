#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "panotok/grid.hpp"

namespace panotok {

// A full panorama as a row-major h x w array of token ids. The unit of
// generation and evaluation.
struct TokenGrid {
    int height = 0;  // h = R*p
    int width = 0;   // w = C*p
    std::vector<std::uint16_t> tokens;

    TokenGrid() = default;
    TokenGrid(int h, int w) : height(h), width(w), tokens(std::size_t(h) * w, 0) {}

    std::uint16_t& at(int y, int x) { return tokens[std::size_t(y) * width + x]; }
    std::uint16_t at(int y, int x) const { return tokens[std::size_t(y) * width + x]; }

    bool operator==(const TokenGrid&) const = default;
};

// Tokens of one patch in raster order (row by row within the patch).
std::vector<std::uint16_t> patch_tokens(const TokenGrid& grid, const GridSpec& spec,
                                        PatchCoord patch);
void set_patch_tokens(TokenGrid& grid, const GridSpec& spec, PatchCoord patch,
                      const std::vector<std::uint16_t>& tokens);

// Grid rolled horizontally by `shift` tokens (content moves left by shift).
TokenGrid roll_x(const TokenGrid& grid, int shift);

// HTG1 container: 16-byte header (magic "HTG1", then R, C, p as u32 LE)
// followed by row-major u16 LE token ids.
void write_htg(const TokenGrid& grid, const GridSpec& spec, const std::filesystem::path& path);
TokenGrid read_htg(const std::filesystem::path& path, GridSpec& spec_out);
TokenGrid read_htg_checked(const std::filesystem::path& path, const GridSpec& expect);

}  // namespace panotok
