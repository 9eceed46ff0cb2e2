#include "panotok/token_grid.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "panotok/errors.hpp"

namespace panotok {

std::vector<std::uint16_t> patch_tokens(const TokenGrid& grid, const GridSpec& spec,
                                        PatchCoord patch) {
    const int p = spec.patch_side;
    std::vector<std::uint16_t> out;
    out.reserve(std::size_t(p) * p);
    for (int v = 0; v < p; ++v) {
        for (int u = 0; u < p; ++u) {
            out.push_back(grid.at(patch.i * p + v, patch.j * p + u));
        }
    }
    return out;
}

void set_patch_tokens(TokenGrid& grid, const GridSpec& spec, PatchCoord patch,
                      const std::vector<std::uint16_t>& tokens) {
    const int p = spec.patch_side;
    if (int(tokens.size()) != p * p) throw DataError("token_grid: patch token count mismatch");
    for (int v = 0; v < p; ++v) {
        for (int u = 0; u < p; ++u) {
            grid.at(patch.i * p + v, patch.j * p + u) = tokens[std::size_t(v) * p + u];
        }
    }
}

TokenGrid roll_x(const TokenGrid& grid, int shift) {
    TokenGrid out(grid.height, grid.width);
    const int w = grid.width;
    const int s = ((shift % w) + w) % w;
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(y, x) = grid.at(y, (x + s) % w);
        }
    }
    return out;
}

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'T', 'G', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                               std::uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::filesystem::path& path) {
    std::uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw DataError("token_grid: truncated header in " + path.string());
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

}  // namespace

void write_htg(const TokenGrid& grid, const GridSpec& spec, const std::filesystem::path& path) {
    if (grid.height != spec.token_height() || grid.width != spec.token_width()) {
        throw DataError("token_grid: grid dimensions do not match spec");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("token_grid: cannot open " + path.string() + " for writing");
    f.write(kMagic.data(), 4);
    put_u32(f, std::uint32_t(spec.rows));
    put_u32(f, std::uint32_t(spec.cols));
    put_u32(f, std::uint32_t(spec.patch_side));
    for (std::uint16_t t : grid.tokens) {
        const std::uint8_t b[2] = {std::uint8_t(t), std::uint8_t(t >> 8)};
        f.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!f) throw DataError("token_grid: write failed for " + path.string());
}

TokenGrid read_htg(const std::filesystem::path& path, GridSpec& spec_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("token_grid: cannot open " + path.string());
    std::array<char, 4> magic{};
    f.read(magic.data(), 4);
    if (!f || magic != kMagic) {
        throw DataError("token_grid: bad magic in " + path.string() + " (expected HTG1)");
    }
    const std::uint32_t rows = get_u32(f, path);
    const std::uint32_t cols = get_u32(f, path);
    const std::uint32_t p = get_u32(f, path);
    if (rows == 0 || cols == 0 || p == 0 || rows > 4096 || cols > 4096 || p > 4096) {
        throw DataError("token_grid: implausible header fields in " + path.string());
    }
    spec_out.rows = int(rows);
    spec_out.cols = int(cols);
    spec_out.patch_side = int(p);

    TokenGrid grid(int(rows * p), int(cols * p));
    std::vector<std::uint8_t> raw(grid.tokens.size() * 2);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(f.gcount()) != raw.size()) {
        throw DataError("token_grid: truncated token data in " + path.string());
    }
    for (std::size_t k = 0; k < grid.tokens.size(); ++k) {
        grid.tokens[k] = std::uint16_t(raw[2 * k]) | std::uint16_t(std::uint16_t(raw[2 * k + 1]) << 8);
    }
    return grid;
}

TokenGrid read_htg_checked(const std::filesystem::path& path, const GridSpec& expect) {
    GridSpec got = expect;
    TokenGrid grid = read_htg(path, got);
    if (got.rows != expect.rows || got.cols != expect.cols ||
        got.patch_side != expect.patch_side) {
        throw DataError("token_grid: " + path.string() + " geometry does not match config");
    }
    return grid;
}

}  // namespace panotok
