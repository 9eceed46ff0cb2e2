#pragma once

#include <cstdint>
#include <vector>

#include "panotok/grid.hpp"
#include "panotok/image.hpp"
#include "panotok/token_grid.hpp"

namespace panotok {

// Deterministic stand-in for a learned stage-1 codec. Tile id v is an
// oriented linear intensity ramp: v fixes the base level (stored at the
// anchor pixel (0,0), which makes tiles pairwise distinct), and a seeded
// rotation of v picks gradient direction and slope.
class Codebook {
public:
    Codebook(std::uint64_t seed, int vocab, int tile_side);

    int vocab() const { return vocab_; }
    int tile_side() const { return tile_side_; }

    // s*s pixels of tile v, row-major.
    const std::uint8_t* tile(int v) const { return tiles_.data() + std::size_t(v) * tile_size_; }

    // Nearest-tile (L2, ties to lowest id) encoding of an image whose
    // dimensions are multiples of the tile side.
    TokenGrid encode(const PanoImage& img) const;
    PanoImage decode(const TokenGrid& grid) const;

    bool operator==(const Codebook& other) const {
        return vocab_ == other.vocab_ && tile_side_ == other.tile_side_ && tiles_ == other.tiles_;
    }

private:
    int vocab_;
    int tile_side_;
    std::size_t tile_size_;
    std::vector<std::uint8_t> tiles_;
};

// Seamless synthetic panorama: a smooth field sum_m a_m*sin(m*phi + psi_m)*g_m(y)
// with phi = 2*pi*x/w (exactly periodic in x), min-max quantized to vocab levels.
TokenGrid synth_panorama(std::uint64_t seed, const GridSpec& spec);

enum class ViewTag : int { front = 0, right = 1, back = 2, left = 3 };

struct SemanticVector {
    ViewTag view = ViewTag::front;
    std::vector<double> values;
};

// Block-average-pooled intensity features. The k blocks tile the crop in a
// kr x kc layout with kr the largest divisor of k not exceeding sqrt(k).
// `center_mean` (a corpus mean intensity) is subtracted from every feature.
class FeatureExtractor {
public:
    explicit FeatureExtractor(int k, double center_mean = 0.0);

    int dim() const { return k_; }
    int block_rows() const { return kr_; }
    int block_cols() const { return kc_; }
    double center_mean() const { return center_mean_; }

    std::vector<double> extract(const PanoImage& img) const;

private:
    int k_, kr_, kc_;
    double center_mean_;
};

// Mean pixel intensity over a set of images (the corpus centering statistic).
double corpus_mean_intensity(const std::vector<PanoImage>& images);

// Sub-image [y0,y1) x [x0,x1), all channels.
PanoImage crop(const PanoImage& img, int y0, int y1, int x0, int x1);

// The four 90-degree views approximated as equal vertical quarters of the
// decoded equirectangular image, in order front, right, back, left.
PanoImage view_quarter(const PanoImage& img, ViewTag view);

SemanticVector semantic_embed(const TokenGrid& tokens, ViewTag view, const Codebook& cb,
                              const FeatureExtractor& features);

}  // namespace panotok
