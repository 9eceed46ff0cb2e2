#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "panotok/codec.hpp"
#include "panotok/config.hpp"
#include "panotok/grid.hpp"
#include "panotok/model.hpp"
#include "panotok/token_grid.hpp"

namespace panotok {

// Token grids plus everything conditioning needs: per-panorama semantic
// vectors (the four views) and the corpus centering mean.
struct Dataset {
    GridSpec spec;
    std::vector<TokenGrid> grids;
    std::vector<std::array<SemanticVector, 4>> semantics;  // empty when unused
    double mean_intensity = 0.0;
};

// Deterministic corpus: grid i comes from substream(seed, "data", i).
std::vector<TokenGrid> synth_corpus(std::uint64_t seed, const GridSpec& spec, int count,
                                    unsigned threads = 0);

Dataset prepare_dataset(std::vector<TokenGrid> grids, const GridSpec& spec, const Codebook& cb,
                        int sem_dim, bool with_semantics, unsigned threads = 0);

// Conditioning sequence for `patch`: optional semantic vectors first, then
// the neighborhood's patches (NeighborSet order, raster order within each
// patch) read from `source`, with true-grid coordinates.
ConditionSet build_condition(const TokenGrid& source, const GridSpec& spec, PatchCoord patch,
                             NeighborKind kind, Phase phase,
                             std::span<const SemanticVector> semantics);

// Teacher-forced training example: ground-truth tokens with [MASK] at the
// masked positions, supervision on exactly those positions.
ModelExample make_training_example(const TokenGrid& truth, const GridSpec& spec, PatchCoord patch,
                                   NeighborKind kind, Phase phase, const std::vector<bool>& mask,
                                   std::span<const SemanticVector> semantics, int vocab);

struct TrainParams {
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
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

// Linear warm-up to peak_lr, then cosine decay to zero at total_steps.
double lr_at(int step, const TrainParams& p);

struct TraceEntry {
    int step = 0;
    double loss = 0.0;
    double loss_lpm = 0.0;
    double loss_spm = 0.0;
    double lr = 0.0;
};

// Joint L_LPM + L_SPM training with decoupled-weight-decay adaptive moments.
// Every random draw is keyed by (seed, step), so resuming from a checkpoint
// replays the identical trajectory bit for bit.
class Trainer {
public:
    Trainer(ModelConfig cfg, TrainParams params, const Dataset& data);

    // Runs steps [step()+1, until]; returns one trace entry per step.
    // Throws NumericError (with the step index) if the loss leaves the reals.
    std::vector<TraceEntry> run(int until, const std::function<void(const TraceEntry&)>& on_step = {});

    int step() const { return step_; }
    const ModelConfig& config() const { return cfg_; }
    const Weights<float>& weights() const { return weights_; }

    void save(const std::filesystem::path& path) const;
    static Trainer resume(const std::filesystem::path& path, TrainParams params,
                          const Dataset& data);

private:
    Trainer(ModelConfig cfg, TrainParams params, const Dataset& data, Weights<float> w);

    ModelConfig cfg_;
    TrainParams params_;
    const Dataset& data_;
    Weights<float> weights_;
    Weights<float> m_, v_;
    int step_ = 0;
};

// Fraction of supervised positions whose argmax prediction matches the truth.
double masked_accuracy(const ModelConfig& cfg, const Weights<float>& w,
                       std::span<const ModelExample> examples);

struct DecodeRun {
    Regime regime = Regime::lpm;
    int steps = 8;  // T
    double temperature = 1.0;
    std::uint64_t seed = 0;
    int patches_decoded = 0;
    long forward_passes_total = 0;
    long forward_passes_per_patch = 0;
    double wall_seconds = 0.0;  // console-only; never serialized into artifacts
};

// One panorama decoder over trained weights. `observed` marks patches that
// are fixed inputs (extrapolation); generation fills the rest in raster
// order. Semantic vectors, when present, are prepended to every condition
// sequence.
class Generator {
public:
    Generator(const ModelConfig& cfg, const Weights<float>& w, const GridSpec& spec, int steps,
              double temperature, bool progressive_pass2 = true);

    TokenGrid arm(std::uint64_t seed, std::span<const SemanticVector> semantics, DecodeRun& run,
                  const TokenGrid* init = nullptr, const std::vector<bool>* observed = nullptr) const;
    TokenGrid lpm(std::uint64_t seed, std::span<const SemanticVector> semantics, DecodeRun& run,
                  const TokenGrid* init = nullptr, const std::vector<bool>* observed = nullptr) const;
    // Two passes: a full LPM pass, then per-patch re-masked refinement with
    // Y_S conditions and the pass-2 phase. `pass1_out` receives the
    // intermediate grid when non-null.
    TokenGrid spm(std::uint64_t seed, std::span<const SemanticVector> semantics, DecodeRun& run,
                  const TokenGrid* init = nullptr, const std::vector<bool>* observed = nullptr,
                  TokenGrid* pass1_out = nullptr) const;

    TokenGrid generate(Regime regime, std::uint64_t seed, std::span<const SemanticVector> semantics,
                       DecodeRun& run) const;

    // Observed patches are kept verbatim; the rest are decoded per `regime`.
    TokenGrid extrapolate(Regime regime, const TokenGrid& partial,
                          const std::vector<bool>& observed, std::uint64_t seed,
                          std::span<const SemanticVector> semantics, DecodeRun& run) const;

private:
    const ModelConfig& cfg_;
    const Weights<float>& w_;
    GridSpec spec_;
    int steps_;
    double temperature_;
    bool progressive_pass2_;

    void decode_patch_masked(TokenGrid& grid, const TokenGrid& cond_source, PatchCoord patch,
                             NeighborKind kind, Phase phase,
                             std::span<const SemanticVector> semantics, Rng& rng,
                             DecodeRun& run) const;
    void decode_patch_ar(TokenGrid& grid, PatchCoord patch,
                         std::span<const SemanticVector> semantics, Rng& rng,
                         DecodeRun& run) const;
};

}  // namespace panotok
