#include "panotok/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "panotok/errors.hpp"
#include "panotok/image.hpp"
#include "panotok/parallel.hpp"
#include "panotok/rng.hpp"

namespace panotok {

namespace fs = std::filesystem;
using nlohmann::json;

std::filesystem::path manifest_path(const std::filesystem::path& dir) {
    return dir / "manifest.json";
}

namespace {

std::string file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pano_%06d.htg", index);
    return buf;
}

}  // namespace

double corpus_mean_from_grids(const std::vector<TokenGrid>& grids, const Codebook& cb,
                              unsigned threads) {
    if (grids.empty()) throw DataError("dataset: empty corpus for mean intensity");
    std::vector<double> partial(grids.size(), 0.0);
    parallel_for(grids.size(), threads, [&](std::size_t i) {
        const PanoImage img = cb.decode(grids[i]);
        double s = 0.0;
        for (std::uint8_t px : img.pixels) s += px;
        partial[i] = s / double(img.pixels.size());
    });
    double mean = 0.0;
    for (double p : partial) mean += p;
    return mean / double(grids.size());
}

DatasetManifest write_dataset(const fs::path& dir, const GridSpec& spec, int tile_side,
                              std::uint64_t codec_seed, std::uint64_t seed, int train_count,
                              int test_count, unsigned threads) {
    spec.validate();
    if (train_count < 1 || test_count < 0) throw ConfigError("dataset: invalid split counts");
    std::error_code ec;
    fs::create_directories(dir / "train", ec);
    fs::create_directories(dir / "test", ec);
    if (!fs::exists(dir / "train") || !fs::exists(dir / "test")) {
        throw DataError("dataset: cannot create " + dir.string());
    }

    DatasetManifest m;
    m.spec = spec;
    m.tile_side = tile_side;
    m.codec_seed = codec_seed;
    m.seed = seed;
    m.train_count = train_count;
    m.test_count = test_count;
    const int total = train_count + test_count;
    m.file_seeds.resize(std::size_t(total));
    for (int i = 0; i < total; ++i) {
        m.file_seeds[std::size_t(i)] = Rng::substream(seed, "data", std::uint64_t(i)).next_u64();
    }

    std::vector<TokenGrid> train_grids(static_cast<std::size_t>(train_count));
    parallel_for(std::size_t(total), threads, [&](std::size_t i) {
        const TokenGrid g = synth_panorama(m.file_seeds[i], spec);
        const bool is_train = int(i) < train_count;
        const fs::path p = is_train ? dir / "train" / file_name(int(i))
                                    : dir / "test" / file_name(int(i));
        write_htg(g, spec, p);
        if (is_train) train_grids[i] = g;
    });

    const Codebook cb(codec_seed, spec.vocab, tile_side);
    m.mean_intensity = corpus_mean_from_grids(train_grids, cb, threads);

    json j;
    j["format"] = "panotok-dataset-v1";
    j["rows"] = spec.rows;
    j["cols"] = spec.cols;
    j["patch_side"] = spec.patch_side;
    j["vocab"] = spec.vocab;
    j["tile_side"] = tile_side;
    j["codec_seed"] = codec_seed;
    j["seed"] = seed;
    j["train_count"] = train_count;
    j["test_count"] = test_count;
    j["mean_intensity"] = m.mean_intensity;
    j["file_seeds"] = m.file_seeds;
    std::ofstream f(manifest_path(dir), std::ios::binary);
    if (!f) throw DataError("dataset: cannot write manifest in " + dir.string());
    f << j.dump(2) << "\n";
    return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
    std::ifstream f(manifest_path(dir));
    if (!f) throw DataError("dataset: missing manifest.json in " + dir.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("dataset: malformed manifest.json: " + std::string(e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "panotok-dataset-v1") {
            throw DataError("dataset: unknown manifest format");
        }
        DatasetManifest m;
        m.spec.rows = j.at("rows").get<int>();
        m.spec.cols = j.at("cols").get<int>();
        m.spec.patch_side = j.at("patch_side").get<int>();
        m.spec.vocab = j.at("vocab").get<int>();
        m.tile_side = j.at("tile_side").get<int>();
        m.codec_seed = j.at("codec_seed").get<std::uint64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.train_count = j.at("train_count").get<int>();
        m.test_count = j.at("test_count").get<int>();
        m.mean_intensity = j.at("mean_intensity").get<double>();
        m.file_seeds = j.at("file_seeds").get<std::vector<std::uint64_t>>();
        m.spec.validate();
        if (int(m.file_seeds.size()) != m.train_count + m.test_count) {
            throw DataError("dataset: manifest seed count mismatch");
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError("dataset: manifest missing fields: " + std::string(e.what()));
    }
}

std::vector<fs::path> split_files(const fs::path& dir, const DatasetManifest& m, Split split) {
    std::vector<fs::path> out;
    const int begin = split == Split::train ? 0 : m.train_count;
    const int end = split == Split::train ? m.train_count : m.train_count + m.test_count;
    const char* sub = split == Split::train ? "train" : "test";
    for (int i = begin; i < end; ++i) out.push_back(dir / sub / file_name(i));
    return out;
}

std::vector<TokenGrid> load_split(const fs::path& dir, const DatasetManifest& m, Split split) {
    const auto files = split_files(dir, m, split);
    std::vector<TokenGrid> grids;
    grids.reserve(files.size());
    for (const auto& p : files) grids.push_back(read_htg_checked(p, m.spec));
    return grids;
}

std::vector<PanoImage> load_image_dir(const fs::path& dir, const Codebook& cb) {
    if (!fs::is_directory(dir)) throw DataError("dataset: " + dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".htg" || ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("dataset: no .htg/.pgm/.ppm files in " + dir.string());
    std::vector<PanoImage> images;
    images.reserve(files.size());
    for (const auto& p : files) {
        if (p.extension() == ".htg") {
            GridSpec parsed;
            images.push_back(cb.decode(read_htg(p, parsed)));
        } else {
            images.push_back(read_pnm(p));
        }
    }
    return images;
}

}  // namespace panotok
