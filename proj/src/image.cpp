#include "panotok/image.hpp"

#include <fstream>
#include <string>

#include "panotok/errors.hpp"

namespace panotok {

void write_pnm(const PanoImage& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw DataError("image: channels must be 1 or 3");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("image: cannot open " + path.string() + " for writing");
    f << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size()));
    if (!f) throw DataError("image: write failed for " + path.string());
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_header_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(char(c));
    }
    if (tok.empty()) throw DataError("image: truncated PNM header");
    return tok;
}

}  // namespace

PanoImage read_pnm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("image: cannot open " + path.string());
    const std::string magic = next_header_token(f);
    int channels;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw DataError("image: " + path.string() + " has unsupported magic '" + magic + "'");
    }
    int width, height, maxval;
    try {
        width = std::stoi(next_header_token(f));
        height = std::stoi(next_header_token(f));
        maxval = std::stoi(next_header_token(f));
    } catch (const std::exception&) {
        throw DataError("image: malformed PNM header in " + path.string());
    }
    if (width <= 0 || height <= 0) throw DataError("image: bad dimensions in " + path.string());
    if (maxval != 255) throw DataError("image: only maxval 255 supported, got " + std::to_string(maxval));

    PanoImage img(height, width, channels);
    f.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (std::size_t(f.gcount()) != img.pixels.size()) {
        throw DataError("image: truncated pixel data in " + path.string());
    }
    return img;
}

}  // namespace panotok
