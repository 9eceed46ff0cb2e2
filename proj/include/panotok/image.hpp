#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace panotok {

// Row-major 8-bit image, 1 (grayscale) or 3 (RGB) channels, interleaved.
struct PanoImage {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    PanoImage() = default;
    PanoImage(int h, int w, int c)
        : height(h), width(w), channels(c), pixels(std::size_t(h) * w * c, 0) {}

    std::uint8_t& at(int y, int x, int c = 0) {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c = 0) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }

    bool operator==(const PanoImage&) const = default;
};

// Binary PGM (P5) for 1 channel, PPM (P6) for 3; maxval 255, bit-exact.
void write_pnm(const PanoImage& img, const std::filesystem::path& path);
PanoImage read_pnm(const std::filesystem::path& path);

}  // namespace panotok
