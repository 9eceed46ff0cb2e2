#include "panotok/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "panotok/parallel.hpp"
#include "panotok/schedule.hpp"

namespace panotok {

std::vector<TokenGrid> synth_corpus(std::uint64_t seed, const GridSpec& spec, int count,
                                    unsigned threads) {
    std::vector<TokenGrid> grids(static_cast<std::size_t>(count));
    parallel_for(std::size_t(count), threads, [&](std::size_t i) {
        grids[i] = synth_panorama(Rng::substream(seed, "data", i).next_u64(), spec);
    });
    return grids;
}

Dataset prepare_dataset(std::vector<TokenGrid> grids, const GridSpec& spec, const Codebook& cb,
                        int sem_dim, bool with_semantics, unsigned threads) {
    Dataset ds;
    ds.spec = spec;
    ds.grids = std::move(grids);

    // Corpus centering statistic over the decoded grids.
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<double> partial(ds.grids.size(), 0.0);
    parallel_for(ds.grids.size(), threads, [&](std::size_t i) {
        const PanoImage img = cb.decode(ds.grids[i]);
        double s = 0.0;
        for (std::uint8_t px : img.pixels) s += px;
        partial[i] = s;
    });
    for (std::size_t i = 0; i < ds.grids.size(); ++i) {
        sum += partial[i];
        count += std::size_t(ds.grids[i].height) * ds.grids[i].width *
                 std::size_t(cb.tile_side()) * cb.tile_side();
    }
    ds.mean_intensity = count ? sum / double(count) : 0.0;

    if (with_semantics) {
        const FeatureExtractor feats(sem_dim, ds.mean_intensity);
        ds.semantics.resize(ds.grids.size());
        parallel_for(ds.grids.size(), threads, [&](std::size_t i) {
            for (int q = 0; q < 4; ++q) {
                ds.semantics[i][std::size_t(q)] =
                    semantic_embed(ds.grids[i], ViewTag(q), cb, feats);
            }
        });
    }
    return ds;
}

ConditionSet build_condition(const TokenGrid& source, const GridSpec& spec, PatchCoord patch,
                             NeighborKind kind, Phase phase,
                             std::span<const SemanticVector> semantics) {
    ConditionSet cond;
    cond.phase = phase;
    cond.semantics.assign(semantics.begin(), semantics.end());

    NeighborSet ns;
    switch (kind) {
        case NeighborKind::YW: ns = window_neighbors_yw(spec, patch); break;
        case NeighborKind::YS: ns = sphere_neighbors_ys(spec, patch); break;
        case NeighborKind::ARM: ns = arm_window(spec, patch); break;
    }
    const int p = spec.patch_side;
    cond.neighbors.reserve(ns.size() * std::size_t(p) * p);
    for (const auto& n : ns.patches) {
        for (int v = 0; v < p; ++v) {
            for (int u = 0; u < p; ++u) {
                const TokenCoord c = global_coord(spec, n.patch, u, v);
                cond.neighbors.push_back({int(source.at(c.y, c.x)), c});
            }
        }
    }
    return cond;
}

ModelExample make_training_example(const TokenGrid& truth, const GridSpec& spec, PatchCoord patch,
                                   NeighborKind kind, Phase phase, const std::vector<bool>& mask,
                                   std::span<const SemanticVector> semantics, int vocab) {
    const int p = spec.patch_side;
    const int n = p * p;
    if (int(mask.size()) != n) throw ConfigError("pipeline: mask size must equal tokens per patch");

    ModelExample ex;
    ex.cond = build_condition(truth, spec, patch, kind, phase, semantics);
    ex.input_ids.reserve(std::size_t(n));
    ex.coords.reserve(std::size_t(n));
    ex.target_ids.reserve(std::size_t(n));
    ex.supervised = mask;
    for (int v = 0; v < p; ++v) {
        for (int u = 0; u < p; ++u) {
            const TokenCoord c = global_coord(spec, patch, u, v);
            const int truth_id = truth.at(c.y, c.x);
            const int i = v * p + u;
            ex.input_ids.push_back(mask[std::size_t(i)] ? vocab : truth_id);
            ex.coords.push_back(c);
            ex.target_ids.push_back(truth_id);
        }
    }
    return ex;
}

double lr_at(int step, const TrainParams& p) {
    if (p.warmup_steps > 0 && step <= p.warmup_steps) {
        return p.peak_lr * double(step) / double(p.warmup_steps);
    }
    const double span = double(std::max(1, p.total_steps - p.warmup_steps));
    const double frac = double(step - p.warmup_steps) / span;
    return p.peak_lr * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, frac)));
}

Trainer::Trainer(ModelConfig cfg, TrainParams params, const Dataset& data)
    : Trainer(cfg, params, data, Weights<float>::init(cfg, params.seed)) {}

Trainer::Trainer(ModelConfig cfg, TrainParams params, const Dataset& data, Weights<float> w)
    : cfg_(cfg),
      params_(params),
      data_(data),
      weights_(std::move(w)),
      m_(Weights<float>::zeros_like(cfg)),
      v_(Weights<float>::zeros_like(cfg)) {
    if (data_.grids.empty()) throw DataError("pipeline: empty dataset");
    data_.spec.validate();
    if (cfg_.trained_with_semantic && data_.semantics.size() != data_.grids.size()) {
        throw ConfigError("pipeline: semantic conditioning requires dataset semantics");
    }
}

std::vector<TraceEntry> Trainer::run(int until,
                                     const std::function<void(const TraceEntry&)>& on_step) {
    const GridSpec& spec = data_.spec;
    const int n_tok = spec.tokens_per_patch();
    const unsigned threads = resolve_threads(params_.threads);
    std::vector<TraceEntry> trace;
    trace.reserve(std::size_t(std::max(0, until - step_)));

    while (step_ < until) {
        const int s = step_ + 1;
        Rng rng = Rng::substream(params_.seed, "train", std::uint64_t(s));

        // Assemble the step batch: one patch per batch slot, an LPM example
        // (Y_W, pass 1) and, when spherical conditioning is on, an SPM
        // example (Y_S, pass 2) with an independent mask draw.
        std::vector<ModelExample> lpm, spm;
        lpm.reserve(std::size_t(params_.batch_size));
        spm.reserve(std::size_t(params_.batch_size));
        for (int b = 0; b < params_.batch_size; ++b) {
            const std::size_t pano = std::size_t(rng.uniform_u64(data_.grids.size()));
            const PatchCoord patch{int(rng.uniform_u64(std::uint64_t(spec.rows))),
                                   int(rng.uniform_u64(std::uint64_t(spec.cols)))};
            const bool with_sem = cfg_.trained_with_semantic &&
                                  !(rng.uniform_real() < params_.semantic_drop_prob);
            std::span<const SemanticVector> sem;
            if (with_sem) sem = std::span<const SemanticVector>(data_.semantics[pano]);

            const double r1 = rng.uniform_real();
            const auto mask1 = sample_mask(rng, n_tok, mask_count(r1, n_tok));
            lpm.push_back(make_training_example(data_.grids[pano], spec, patch, NeighborKind::YW,
                                                Phase::pass1, mask1, sem, cfg_.vocab));
            if (cfg_.trained_with_sc) {
                const double r2 = rng.uniform_real();
                const auto mask2 = sample_mask(rng, n_tok, mask_count(r2, n_tok));
                spm.push_back(make_training_example(data_.grids[pano], spec, patch,
                                                    NeighborKind::YS, Phase::pass2, mask2, sem,
                                                    cfg_.vocab));
            }
        }

        // Evaluate all examples in parallel; per-chunk gradients reduce in
        // chunk order so the result is independent of scheduling.
        struct Job {
            const ModelExample* ex;
            float scale;
            bool is_lpm;
            std::uint64_t drop_index;
        };
        std::vector<Job> jobs;
        jobs.reserve(lpm.size() + spm.size());
        const float inv_b = 1.0f / float(params_.batch_size);
        for (std::size_t i = 0; i < lpm.size(); ++i) {
            jobs.push_back({&lpm[i], inv_b, true, (std::uint64_t(s) << 32) | i});
        }
        for (std::size_t i = 0; i < spm.size(); ++i) {
            jobs.push_back({&spm[i], inv_b, false, (std::uint64_t(s) << 32) | 0x80000000ULL | i});
        }

        const std::size_t chunks = std::min<std::size_t>(threads, jobs.size());
        std::vector<Weights<float>> chunk_grads;
        chunk_grads.reserve(chunks);
        for (std::size_t c = 0; c < chunks; ++c) {
            chunk_grads.push_back(Weights<float>::zeros_like(cfg_));
        }
        std::vector<double> losses(jobs.size(), 0.0);
        const bool use_dropout = cfg_.dropout > 0.0;
        parallel_for(chunks, unsigned(chunks), [&](std::size_t c) {
            const std::size_t lo = jobs.size() * c / chunks;
            const std::size_t hi = jobs.size() * (c + 1) / chunks;
            for (std::size_t j = lo; j < hi; ++j) {
                Rng drop = Rng::substream(params_.seed, "dropout", jobs[j].drop_index);
                losses[j] = example_loss<float>(cfg_, weights_, *jobs[j].ex, &chunk_grads[c],
                                                jobs[j].scale, use_dropout ? &drop : nullptr);
            }
        });

        Weights<float>& grad = chunk_grads[0];
        for (std::size_t c = 1; c < chunks; ++c) {
            std::vector<Mat<float>*> dst, src;
            for_each_param(grad, [&dst](const std::string&, Mat<float>& m) { dst.push_back(&m); });
            for_each_param(chunk_grads[c],
                           [&src](const std::string&, Mat<float>& m) { src.push_back(&m); });
            for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
        }

        TraceEntry entry;
        entry.step = s;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            (jobs[j].is_lpm ? entry.loss_lpm : entry.loss_spm) += losses[j] * inv_b;
        }
        entry.loss = entry.loss_lpm + entry.loss_spm;
        entry.lr = lr_at(s, params_);
        if (!std::isfinite(entry.loss)) {
            throw NumericError("pipeline: non-finite loss at step " + std::to_string(s));
        }

        // Gradient-norm clipping, warm-up phase only.
        double norm_sq = 0.0;
        for_each_param(grad, [&norm_sq](const std::string&, const Mat<float>& m) {
            norm_sq += double(m.template cast<double>().squaredNorm());
        });
        const double norm = std::sqrt(norm_sq);
        if (s <= params_.warmup_steps && norm > params_.grad_clip) {
            const float scale = float(params_.grad_clip / norm);
            for_each_param(grad, [scale](const std::string&, Mat<float>& m) { m *= scale; });
        }

        // Decoupled weight decay adaptive-moment update.
        const float lr = float(entry.lr);
        const float b1 = float(params_.beta1), b2 = float(params_.beta2);
        const float eps = float(params_.adam_eps), wd = float(params_.weight_decay);
        const float bc1 = 1.0f / (1.0f - std::pow(b1, float(s)));
        const float bc2 = 1.0f / (1.0f - std::pow(b2, float(s)));
        std::vector<Mat<float>*> ws, gs, ms, vs;
        for_each_param(weights_, [&ws](const std::string&, Mat<float>& m) { ws.push_back(&m); });
        for_each_param(grad, [&gs](const std::string&, Mat<float>& m) { gs.push_back(&m); });
        for_each_param(m_, [&ms](const std::string&, Mat<float>& m) { ms.push_back(&m); });
        for_each_param(v_, [&vs](const std::string&, Mat<float>& m) { vs.push_back(&m); });
        for (std::size_t i = 0; i < ws.size(); ++i) {
            Mat<float>& w = *ws[i];
            Mat<float>& g = *gs[i];
            Mat<float>& m = *ms[i];
            Mat<float>& v = *vs[i];
            m = b1 * m + (1.0f - b1) * g;
            v = b2 * v + (1.0f - b2) * g.cwiseProduct(g);
            const auto mhat = (m * bc1).eval();
            const auto vhat = (v * bc2).eval();
            w -= lr * (mhat.array() / (vhat.array().sqrt() + eps) + wd * w.array()).matrix();
        }

        ++step_;
        trace.push_back(entry);
        if (on_step) on_step(entry);
    }
    return trace;
}

void Trainer::save(const std::filesystem::path& path) const {
    ExtraRecords extra;
    auto flatten = [](const Weights<float>& w, const std::string& prefix, ExtraRecords& out) {
        for_each_param(w, [&](const std::string& name, const Mat<float>& m) {
            std::vector<float> data(std::size_t(m.size()));
            std::size_t i = 0;
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) data[i++] = m(r, c);
            }
            out.emplace(prefix + name, std::move(data));
        });
    };
    flatten(m_, "opt.m.", extra);
    flatten(v_, "opt.v.", extra);
    extra.emplace("opt.step", std::vector<float>{float(step_)});
    save_checkpoint(path, cfg_, weights_, extra);
}

Trainer Trainer::resume(const std::filesystem::path& path, TrainParams params,
                        const Dataset& data) {
    ExtraRecords extra;
    auto [cfg, w] = load_checkpoint<float>(path, &extra);
    Trainer t(cfg, params, data, std::move(w));
    auto unflatten = [&extra, &path](Weights<float>& w, const std::string& prefix) {
        for_each_param(w, [&](const std::string& name, Mat<float>& m) {
            const auto it = extra.find(prefix + name);
            if (it == extra.end()) {
                throw DataError("checkpoint: missing optimizer record '" + prefix + name +
                                "' in " + path.string());
            }
            if (it->second.size() != std::size_t(m.size())) {
                throw DataError("checkpoint: optimizer record size mismatch in " + path.string());
            }
            std::size_t i = 0;
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = it->second[i++];
            }
        });
    };
    unflatten(t.m_, "opt.m.");
    unflatten(t.v_, "opt.v.");
    const auto it = extra.find("opt.step");
    if (it == extra.end() || it->second.size() != 1) {
        throw DataError("checkpoint: missing opt.step record in " + path.string());
    }
    t.step_ = int(it->second[0]);
    return t;
}

double masked_accuracy(const ModelConfig& cfg, const Weights<float>& w,
                       std::span<const ModelExample> examples) {
    long correct = 0, total = 0;
    for (const auto& ex : examples) {
        const auto logits = forward_masked<float>(cfg, w, ex.input_ids, ex.coords, ex.cond);
        for (int i = 0; i < int(ex.target_ids.size()); ++i) {
            if (!ex.supervised[std::size_t(i)]) continue;
            Eigen::Index arg = 0;
            logits.row(i).maxCoeff(&arg);
            correct += int(arg) == ex.target_ids[std::size_t(i)];
            ++total;
        }
    }
    return total ? double(correct) / double(total) : 0.0;
}

Generator::Generator(const ModelConfig& cfg, const Weights<float>& w, const GridSpec& spec,
                     int steps, double temperature, bool progressive_pass2)
    : cfg_(cfg),
      w_(w),
      spec_(spec),
      steps_(steps),
      temperature_(temperature),
      progressive_pass2_(progressive_pass2) {
    spec_.validate();
    if (steps_ < 1) throw ConfigError("pipeline: decode steps must be >= 1");
    if (temperature_ <= 0.0) throw ConfigError("pipeline: temperature must be positive");
}

namespace {

int sample_row(const Mat<float>& probs, int row, Rng& rng) {
    const double u = rng.uniform_real();
    double acc = 0.0;
    const int v = int(probs.cols());
    for (int c = 0; c < v; ++c) {
        acc += double(probs(row, c));
        if (u < acc) return c;
    }
    return v - 1;
}

std::vector<bool> no_observed(const GridSpec& spec) {
    return std::vector<bool>(std::size_t(spec.patch_count()), false);
}

}  // namespace

void Generator::decode_patch_masked(TokenGrid& grid, const TokenGrid& cond_source,
                                    PatchCoord patch, NeighborKind kind, Phase phase,
                                    std::span<const SemanticVector> semantics, Rng& rng,
                                    DecodeRun& run) const {
    const int p = spec_.patch_side;
    const int n = p * p;
    std::vector<int> ids(std::size_t(n), cfg_.vocab);
    std::vector<TokenCoord> coords;
    coords.reserve(std::size_t(n));
    for (int v = 0; v < p; ++v) {
        for (int u = 0; u < p; ++u) coords.push_back(global_coord(spec_, patch, u, v));
    }
    std::vector<bool> kept(std::size_t(n), false);
    std::vector<double> confidence(std::size_t(n), 0.0);
    std::vector<int> sampled(std::size_t(n), 0);

    const ConditionSet cond = build_condition(cond_source, spec_, patch, kind, phase, semantics);
    for (int t = 1; t <= steps_; ++t) {
        Mat<float> logits = forward_masked<float>(cfg_, w_, ids, coords, cond);
        ++run.forward_passes_total;
        const bool final_step = t == steps_;
        if (!final_step && temperature_ != 1.0) logits /= float(temperature_);
        const Mat<float> probs = softmax_rows(logits);
        for (int i = 0; i < n; ++i) {
            if (kept[std::size_t(i)]) continue;
            int pick;
            if (final_step) {
                Eigen::Index arg = 0;
                probs.row(i).maxCoeff(&arg);
                pick = int(arg);
            } else {
                pick = sample_row(probs, i, rng);
            }
            sampled[std::size_t(i)] = pick;
            confidence[std::size_t(i)] = double(probs(i, pick));
        }
        const auto next = select_keeps(confidence, kept, keep_count(t, steps_, n));
        for (int i = 0; i < n; ++i) {
            if (next[std::size_t(i)] && !kept[std::size_t(i)]) {
                ids[std::size_t(i)] = sampled[std::size_t(i)];
            }
        }
        kept = next;
    }
    std::vector<std::uint16_t> out(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) out[std::size_t(i)] = std::uint16_t(ids[std::size_t(i)]);
    set_patch_tokens(grid, spec_, patch, out);
    ++run.patches_decoded;
}

void Generator::decode_patch_ar(TokenGrid& grid, PatchCoord patch,
                                std::span<const SemanticVector> semantics, Rng& rng,
                                DecodeRun& run) const {
    const int p = spec_.patch_side;
    const int n = p * p;
    std::vector<int> prefix;
    std::vector<TokenCoord> coords;
    prefix.reserve(std::size_t(n));
    coords.reserve(std::size_t(n));
    const ConditionSet cond =
        build_condition(grid, spec_, patch, NeighborKind::ARM, Phase::pass1, semantics);
    for (int v = 0; v < p; ++v) {
        for (int u = 0; u < p; ++u) {
            const TokenCoord c = global_coord(spec_, patch, u, v);
            Vec<float> logits = forward_ar<float>(cfg_, w_, prefix, coords, c, cond);
            ++run.forward_passes_total;
            if (temperature_ != 1.0) logits /= float(temperature_);
            Mat<float> row(1, logits.size());
            row.row(0) = logits.transpose();
            const Mat<float> probs = softmax_rows(row);
            prefix.push_back(sample_row(probs, 0, rng));
            coords.push_back(c);
        }
    }
    std::vector<std::uint16_t> out(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) out[std::size_t(i)] = std::uint16_t(prefix[std::size_t(i)]);
    set_patch_tokens(grid, spec_, patch, out);
    ++run.patches_decoded;
}

TokenGrid Generator::arm(std::uint64_t seed, std::span<const SemanticVector> semantics,
                         DecodeRun& run, const TokenGrid* init,
                         const std::vector<bool>* observed) const {
    const auto t0 = std::chrono::steady_clock::now();
    run = DecodeRun{Regime::arm, steps_, temperature_, seed, 0, 0, 0, 0.0};
    TokenGrid grid = init ? *init : TokenGrid(spec_.token_height(), spec_.token_width());
    const std::vector<bool> obs = observed ? *observed : no_observed(spec_);
    Rng rng = Rng::substream(seed, "decode");
    for (int i = 0; i < spec_.rows; ++i) {
        for (int j = 0; j < spec_.cols; ++j) {
            if (obs[std::size_t(i * spec_.cols + j)]) continue;
            decode_patch_ar(grid, {i, j}, semantics, rng, run);
        }
    }
    run.forward_passes_per_patch = run.patches_decoded ? run.forward_passes_total / run.patches_decoded : 0;
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return grid;
}

TokenGrid Generator::lpm(std::uint64_t seed, std::span<const SemanticVector> semantics,
                         DecodeRun& run, const TokenGrid* init,
                         const std::vector<bool>* observed) const {
    const auto t0 = std::chrono::steady_clock::now();
    run = DecodeRun{Regime::lpm, steps_, temperature_, seed, 0, 0, 0, 0.0};
    TokenGrid grid = init ? *init : TokenGrid(spec_.token_height(), spec_.token_width());
    const std::vector<bool> obs = observed ? *observed : no_observed(spec_);
    Rng rng = Rng::substream(seed, "decode");
    for (int i = 0; i < spec_.rows; ++i) {
        for (int j = 0; j < spec_.cols; ++j) {
            if (obs[std::size_t(i * spec_.cols + j)]) continue;
            decode_patch_masked(grid, grid, {i, j}, NeighborKind::YW, Phase::pass1, semantics, rng,
                                run);
        }
    }
    run.forward_passes_per_patch = run.patches_decoded ? run.forward_passes_total / run.patches_decoded : 0;
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return grid;
}

TokenGrid Generator::spm(std::uint64_t seed, std::span<const SemanticVector> semantics,
                         DecodeRun& run, const TokenGrid* init,
                         const std::vector<bool>* observed, TokenGrid* pass1_out) const {
    if (!cfg_.trained_with_sc) {
        throw ConfigError("pipeline: spm decoding requires a checkpoint trained with "
                          "spherical conditioning");
    }
    const auto t0 = std::chrono::steady_clock::now();
    DecodeRun pass1_run;
    TokenGrid grid = lpm(seed, semantics, pass1_run, init, observed);
    if (pass1_out) *pass1_out = grid;

    run = DecodeRun{Regime::spm, steps_, temperature_, seed, pass1_run.patches_decoded,
                    pass1_run.forward_passes_total, 0, 0.0};
    const std::vector<bool> obs = observed ? *observed : no_observed(spec_);
    const TokenGrid frozen = grid;  // pass-1 snapshot for non-progressive mode
    Rng rng = Rng::substream(seed, "decode-pass2");
    for (int i = 0; i < spec_.rows; ++i) {
        for (int j = 0; j < spec_.cols; ++j) {
            if (obs[std::size_t(i * spec_.cols + j)]) continue;
            decode_patch_masked(grid, progressive_pass2_ ? grid : frozen, {i, j},
                                NeighborKind::YS, Phase::pass2, semantics, rng, run);
        }
    }
    run.patches_decoded = pass1_run.patches_decoded;  // patches, not patch-passes
    run.forward_passes_per_patch =
        run.patches_decoded ? run.forward_passes_total / run.patches_decoded : 0;
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return grid;
}

TokenGrid Generator::generate(Regime regime, std::uint64_t seed,
                              std::span<const SemanticVector> semantics, DecodeRun& run) const {
    switch (regime) {
        case Regime::arm: return arm(seed, semantics, run);
        case Regime::lpm: return lpm(seed, semantics, run);
        case Regime::spm: return spm(seed, semantics, run);
    }
    throw ConfigError("pipeline: unknown regime");
}

TokenGrid Generator::extrapolate(Regime regime, const TokenGrid& partial,
                                 const std::vector<bool>& observed, std::uint64_t seed,
                                 std::span<const SemanticVector> semantics, DecodeRun& run) const {
    if (int(observed.size()) != spec_.patch_count()) {
        throw ConfigError("pipeline: observed mask size must equal patch count");
    }
    if (std::none_of(observed.begin(), observed.end(), [](bool b) { return b; })) {
        throw DataError("pipeline: extrapolation needs at least one observed patch");
    }
    if (partial.height != spec_.token_height() || partial.width != spec_.token_width()) {
        throw DataError("pipeline: partial grid dimensions mismatch");
    }
    switch (regime) {
        case Regime::arm: return arm(seed, semantics, run, &partial, &observed);
        case Regime::lpm: return lpm(seed, semantics, run, &partial, &observed);
        case Regime::spm: return spm(seed, semantics, run, &partial, &observed);
    }
    throw ConfigError("pipeline: unknown regime");
}

}  // namespace panotok
