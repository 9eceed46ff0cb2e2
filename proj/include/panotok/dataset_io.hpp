#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panotok/codec.hpp"
#include "panotok/grid.hpp"
#include "panotok/token_grid.hpp"

namespace panotok {

// On-disk corpus layout: <dir>/train/pano_XXXXXX.htg, <dir>/test/..., plus
// manifest.json recording geometry, per-file generator seeds, and the train
// split's mean decoded intensity (the feature-centering statistic).
struct DatasetManifest {
    GridSpec spec;
    int tile_side = 8;
    std::uint64_t codec_seed = 0;
    std::uint64_t seed = 0;
    int train_count = 0;
    int test_count = 0;
    double mean_intensity = 0.0;
    std::vector<std::uint64_t> file_seeds;  // train files first, then test
};

std::filesystem::path manifest_path(const std::filesystem::path& dir);

DatasetManifest write_dataset(const std::filesystem::path& dir, const GridSpec& spec,
                              int tile_side, std::uint64_t codec_seed, std::uint64_t seed,
                              int train_count, int test_count, unsigned threads = 0);

DatasetManifest read_manifest(const std::filesystem::path& dir);

enum class Split { train, test };

std::vector<std::filesystem::path> split_files(const std::filesystem::path& dir,
                                               const DatasetManifest& m, Split split);
std::vector<TokenGrid> load_split(const std::filesystem::path& dir, const DatasetManifest& m,
                                  Split split);

// Decoded-intensity mean over a grid corpus (threaded, order-independent sum).
double corpus_mean_from_grids(const std::vector<TokenGrid>& grids, const Codebook& cb,
                              unsigned threads = 0);

// All .htg (decoded through cb) or .pgm/.ppm files of a directory, sorted by
// filename.
std::vector<PanoImage> load_image_dir(const std::filesystem::path& dir, const Codebook& cb);

}  // namespace panotok
