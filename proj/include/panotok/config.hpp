#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "panotok/grid.hpp"
#include "panotok/rotary.hpp"

namespace panotok {

enum class Regime { arm, lpm, spm };

Regime parse_regime(const std::string& s);
std::string regime_name(Regime r);

RotaryVariant parse_rotary_variant(const std::string& s);
std::string rotary_variant_name(RotaryVariant v);

// Flat key = value configuration. Every field has a default; CLI flags
// override file values.
struct RunConfig {
    // Grid / codec
    GridSpec grid{3, 6, 8, 256};
    int tile_side = 8;           // codec tile pixels per token
    std::uint64_t codec_seed = 0;
    int channels = 1;            // 1 (PGM) or 3 (PPM) metric inputs

    // Model
    int layers = 2;
    int heads = 4;
    int model_dim = 64;
    int sem_dim = 32;
    RotaryVariant rotary = RotaryVariant::sphere;
    bool sre_pass2_only = false;      // vanilla2d in pass 1, sphere in pass 2
    bool spherical_conditioning = true;   // train/infer the Y_S second pass
    bool semantic_conditioning = true;    // semantic vectors as conditions
    double dropout = 0.1;

    // Training
    int batch_size = 32;
    int total_steps = 1500;
    int warmup_steps = 100;
    double peak_lr = 1.5e-3;
    double weight_decay = 4.5e-2;
    double grad_clip = 4.0;
    double beta1 = 0.9;
    double beta2 = 0.96;
    double adam_eps = 1e-8;
    double semantic_drop_prob = 0.5;

    // Generation / evaluation
    Regime regime = Regime::spm;
    int decode_steps = 8;  // T
    double temperature = 1.0;
    bool progressive_pass2 = true;  // pass 2 conditions read the updated grid
    int sample_count = 16;
    int feature_dim = 32;  // k for FID features

    // Data
    int train_count = 2000;
    int test_count = 200;

    // Paths
    std::filesystem::path dataset_dir;
    std::filesystem::path checkpoint;
    std::filesystem::path out_dir;
    std::filesystem::path report_path;

    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0 = hardware concurrency

    // Throws ConfigError on any inconsistency.
    void validate() const;
};

// Parses a flat TOML-style document: `key = value` lines, `#` comments,
// bare/quoted strings, integers, floats, booleans. Unknown keys are errors.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

}  // namespace panotok
