#include "panotok/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "panotok/errors.hpp"
#include "panotok/rng.hpp"

namespace panotok {

Codebook::Codebook(std::uint64_t seed, int vocab, int tile_side)
    : vocab_(vocab), tile_side_(tile_side), tile_size_(std::size_t(tile_side) * tile_side) {
    if (vocab < 2) throw ConfigError("codec: vocab must be >= 2");
    if (tile_side < 2) throw ConfigError("codec: tile side must be >= 2");
    tiles_.resize(std::size_t(vocab) * tile_size_);

    const int s = tile_side;
    const int rot = int(splitmix64(seed) % 12);
    for (int v = 0; v < vocab; ++v) {
        const double base = std::round(double(v) * 255.0 / double(vocab - 1));
        int dir = 0;
        double slope = 0.0;
        if (v > 0) {
            const int c = (v - 1 + rot) % 12;
            dir = c % 4;
            slope = 24.0 * double(c / 4 + 1);
        }
        std::uint8_t* t = tiles_.data() + std::size_t(v) * tile_size_;
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                // Projections are normalized so the anchor (0,0) always maps
                // to the base level exactly.
                double proj = 0.0;
                switch (dir) {
                    case 0: proj = double(x) / double(s - 1); break;
                    case 1: proj = double(y) / double(s - 1); break;
                    case 2: proj = double(x + y) / double(2 * (s - 1)); break;
                    case 3: proj = double(x - y) / double(s - 1); break;
                }
                const double val = std::round(base + slope * proj);
                t[std::size_t(y) * s + x] = std::uint8_t(std::clamp(val, 0.0, 255.0));
            }
        }
        if (vocab > 256) {
            // Base levels alone can collide past 256 ids; stamp the id into
            // the first two pixels to keep tiles pairwise distinct.
            t[0] = std::uint8_t(v & 0xff);
            t[1] = std::uint8_t((v >> 8) & 0xff);
        }
    }
}

TokenGrid Codebook::encode(const PanoImage& img) const {
    const int s = tile_side_;
    if (img.height % s != 0 || img.width % s != 0) {
        throw DataError("codec: image dimensions not divisible by tile side");
    }
    if (img.channels != 1) throw DataError("codec: encode expects a grayscale image");
    TokenGrid grid(img.height / s, img.width / s);
    for (int by = 0; by < grid.height; ++by) {
        for (int bx = 0; bx < grid.width; ++bx) {
            long best = std::numeric_limits<long>::max();
            int best_id = 0;
            for (int v = 0; v < vocab_; ++v) {
                const std::uint8_t* t = tile(v);
                long dist = 0;
                for (int y = 0; y < s && dist < best; ++y) {
                    const std::uint8_t* row = &img.pixels[std::size_t(by * s + y) * img.width + bx * s];
                    const std::uint8_t* trow = t + std::size_t(y) * s;
                    for (int x = 0; x < s; ++x) {
                        const long d = long(row[x]) - long(trow[x]);
                        dist += d * d;
                    }
                }
                if (dist < best) {  // ties keep the lowest id
                    best = dist;
                    best_id = v;
                }
            }
            grid.at(by, bx) = std::uint16_t(best_id);
        }
    }
    return grid;
}

PanoImage Codebook::decode(const TokenGrid& grid) const {
    const int s = tile_side_;
    PanoImage img(grid.height * s, grid.width * s, 1);
    for (int by = 0; by < grid.height; ++by) {
        for (int bx = 0; bx < grid.width; ++bx) {
            const int v = grid.at(by, bx);
            if (v >= vocab_) throw DataError("codec: token id " + std::to_string(v) + " out of vocab");
            const std::uint8_t* t = tile(v);
            for (int y = 0; y < s; ++y) {
                std::copy(t + std::size_t(y) * s, t + std::size_t(y + 1) * s,
                          &img.pixels[std::size_t(by * s + y) * img.width + bx * s]);
            }
        }
    }
    return img;
}

TokenGrid synth_panorama(std::uint64_t seed, const GridSpec& spec) {
    spec.validate();
    const int w = spec.token_width(), h = spec.token_height();
    Rng rng(seed);

    constexpr int kModes = 4;
    double amp[kModes], psi[kModes], rho[kModes];
    int freq_y[kModes];
    for (int m = 0; m < kModes; ++m) {
        const double scale = (m == 0) ? 0.8 : 1.0 / double(m);
        amp[m] = scale * (0.6 + 0.8 * rng.uniform_real());
        psi[m] = 2.0 * M_PI * rng.uniform_real();
        rho[m] = 2.0 * M_PI * rng.uniform_real();
        freq_y[m] = int(rng.uniform_u64(3));  // 0..2 half-waves vertically
    }

    std::vector<double> field(std::size_t(h) * w);
    double fmin = std::numeric_limits<double>::max();
    double fmax = std::numeric_limits<double>::lowest();
    for (int y = 0; y < h; ++y) {
        const double yn = (double(y) + 0.5) / double(h);
        for (int x = 0; x < w; ++x) {
            const double phi = 2.0 * M_PI * double(x) / double(w);
            double f = 0.0;
            for (int m = 0; m < kModes; ++m) {
                f += amp[m] * std::sin(double(m) * phi + psi[m]) *
                     std::cos(double(freq_y[m]) * M_PI * yn + rho[m]);
            }
            field[std::size_t(y) * w + x] = f;
            fmin = std::min(fmin, f);
            fmax = std::max(fmax, f);
        }
    }

    TokenGrid grid(h, w);
    const double range = fmax - fmin;
    if (range < 1e-12) {
        std::fill(grid.tokens.begin(), grid.tokens.end(), std::uint16_t(spec.vocab / 2));
        return grid;
    }
    for (std::size_t k = 0; k < field.size(); ++k) {
        int level = int((field[k] - fmin) / range * double(spec.vocab));
        grid.tokens[k] = std::uint16_t(std::clamp(level, 0, spec.vocab - 1));
    }
    return grid;
}

FeatureExtractor::FeatureExtractor(int k, double center_mean)
    : k_(k), center_mean_(center_mean) {
    if (k < 1) throw ConfigError("codec: feature dim must be >= 1");
    kr_ = 1;
    for (int r = 1; r * r <= k; ++r) {
        if (k % r == 0) kr_ = r;
    }
    kc_ = k / kr_;
}

std::vector<double> FeatureExtractor::extract(const PanoImage& img) const {
    if (img.height < kr_ || img.width < kc_) {
        throw DataError("codec: crop too small for " + std::to_string(kr_) + "x" +
                        std::to_string(kc_) + " feature blocks");
    }
    std::vector<double> out(std::size_t(k_), 0.0);
    for (int r = 0; r < kr_; ++r) {
        const int y0 = img.height * r / kr_;
        const int y1 = img.height * (r + 1) / kr_;
        for (int c = 0; c < kc_; ++c) {
            const int x0 = img.width * c / kc_;
            const int x1 = img.width * (c + 1) / kc_;
            double sum = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    for (int ch = 0; ch < img.channels; ++ch) sum += img.at(y, x, ch);
                }
            }
            const double count = double(y1 - y0) * double(x1 - x0) * img.channels;
            out[std::size_t(r) * kc_ + c] = sum / count - center_mean_;
        }
    }
    return out;
}

double corpus_mean_intensity(const std::vector<PanoImage>& images) {
    if (images.empty()) throw DataError("codec: empty corpus");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& img : images) {
        for (std::uint8_t px : img.pixels) sum += px;
        count += img.pixels.size();
    }
    return sum / double(count);
}

PanoImage crop(const PanoImage& img, int y0, int y1, int x0, int x1) {
    if (y0 < 0 || y1 > img.height || x0 < 0 || x1 > img.width || y0 >= y1 || x0 >= x1) {
        throw DataError("codec: crop bounds out of range");
    }
    PanoImage out(y1 - y0, x1 - x0, img.channels);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int ch = 0; ch < img.channels; ++ch) out.at(y - y0, x - x0, ch) = img.at(y, x, ch);
        }
    }
    return out;
}

PanoImage view_quarter(const PanoImage& img, ViewTag view) {
    if (img.width % 4 != 0) throw DataError("codec: image width not divisible by 4 views");
    const int q = int(view);
    const int qw = img.width / 4;
    return crop(img, 0, img.height, q * qw, (q + 1) * qw);
}

SemanticVector semantic_embed(const TokenGrid& tokens, ViewTag view, const Codebook& cb,
                              const FeatureExtractor& features) {
    const PanoImage img = cb.decode(tokens);
    return SemanticVector{view, features.extract(view_quarter(img, view))};
}

}  // namespace panotok
