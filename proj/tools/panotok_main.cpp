// panotok: spherical masked-token panorama modeling pipeline.
//
// Subcommands: synth-data, train, generate, extrapolate, eval.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "panotok/config.hpp"
#include "panotok/dataset_io.hpp"
#include "panotok/errors.hpp"
#include "panotok/metrics.hpp"
#include "panotok/model.hpp"
#include "panotok/parallel.hpp"
#include "panotok/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace panotok;

namespace {

ModelConfig model_config_from(const RunConfig& c) {
    ModelConfig m;
    m.layers = c.layers;
    m.heads = c.heads;
    m.model_dim = c.model_dim;
    m.vocab = c.grid.vocab;
    m.sem_dim = c.sem_dim;
    m.max_cond_tokens = 4 + 8 * c.grid.tokens_per_patch();
    m.rotary = c.rotary;
    m.sre_pass2_only = c.sre_pass2_only;
    m.width = c.grid.token_width();
    m.height = c.grid.token_height();
    m.dropout = c.dropout;
    m.trained_with_sc = c.spherical_conditioning;
    m.trained_with_semantic = c.semantic_conditioning;
    return m;
}

TrainParams train_params_from(const RunConfig& c) {
    TrainParams p;
    p.batch_size = c.batch_size;
    p.total_steps = c.total_steps;
    p.warmup_steps = c.warmup_steps;
    p.peak_lr = c.peak_lr;
    p.weight_decay = c.weight_decay;
    p.grad_clip = c.grad_clip;
    p.beta1 = c.beta1;
    p.beta2 = c.beta2;
    p.adam_eps = c.adam_eps;
    p.semantic_drop_prob = c.semantic_drop_prob;
    p.seed = c.seed;
    p.threads = c.threads;
    return p;
}

void check_grid_matches(const ModelConfig& ckpt, const RunConfig& c) {
    if (ckpt.vocab != c.grid.vocab) {
        throw ConfigError("checkpoint vocab " + std::to_string(ckpt.vocab) +
                          " does not match configured vocab " + std::to_string(c.grid.vocab));
    }
    if (ckpt.width != c.grid.token_width() || ckpt.height != c.grid.token_height()) {
        throw ConfigError("checkpoint token extents do not match the configured grid");
    }
}

// Semantic view vectors of one grid, centered on the dataset mean.
std::vector<SemanticVector> view_vectors(const TokenGrid& g, const Codebook& cb,
                                         const FeatureExtractor& feats) {
    std::vector<SemanticVector> out;
    out.reserve(4);
    for (int q = 0; q < 4; ++q) out.push_back(semantic_embed(g, ViewTag(q), cb, feats));
    return out;
}

int cmd_synth_data(const RunConfig& cfg) {
    if (cfg.dataset_dir.empty()) throw ConfigError("synth-data: dataset_dir is required");
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = write_dataset(cfg.dataset_dir, cfg.grid, cfg.tile_side, cfg.codec_seed,
                                 cfg.seed, cfg.train_count, cfg.test_count, cfg.threads);
    std::cerr << "synth-data: wrote " << m.train_count << " train + " << m.test_count
              << " test grids to " << cfg.dataset_dir.string() << " in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              << " s\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, bool resume) {
    if (cfg.dataset_dir.empty()) throw ConfigError("train: dataset_dir is required");
    if (cfg.checkpoint.empty()) throw ConfigError("train: checkpoint path is required");
    const auto manifest = read_manifest(cfg.dataset_dir);
    if (!(manifest.spec.rows == cfg.grid.rows && manifest.spec.cols == cfg.grid.cols &&
          manifest.spec.patch_side == cfg.grid.patch_side &&
          manifest.spec.vocab == cfg.grid.vocab)) {
        throw ConfigError("train: dataset manifest geometry does not match the configuration");
    }

    const Codebook cb(manifest.codec_seed, cfg.grid.vocab, manifest.tile_side);
    const Dataset data =
        prepare_dataset(load_split(cfg.dataset_dir, manifest, Split::train), cfg.grid, cb,
                        cfg.sem_dim, cfg.semantic_conditioning, cfg.threads);

    const fs::path trace_path = cfg.checkpoint.string() + ".trace.jsonl";
    std::ofstream trace(trace_path, resume ? std::ios::app : std::ios::trunc);
    if (!trace) throw DataError("train: cannot open " + trace_path.string());

    const auto t0 = std::chrono::steady_clock::now();
    auto emit = [&trace](const TraceEntry& e) {
        json j;
        j["step"] = e.step;
        j["loss"] = e.loss;
        j["loss_lpm"] = e.loss_lpm;
        j["loss_spm"] = e.loss_spm;
        j["lr"] = e.lr;
        trace << j.dump() << "\n";
    };

    const TrainParams params = train_params_from(cfg);
    if (resume) {
        Trainer trainer = Trainer::resume(cfg.checkpoint, params, data);
        check_grid_matches(trainer.config(), cfg);
        trainer.run(params.total_steps, emit);
        trainer.save(cfg.checkpoint);
    } else {
        Trainer trainer(model_config_from(cfg), params, data);
        trainer.run(params.total_steps, emit);
        trainer.save(cfg.checkpoint);
    }
    std::cerr << "train: finished " << params.total_steps << " steps in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              << " s\n";
    return 0;
}

json run_to_json(int index, const DecodeRun& run) {
    json j;
    j["index"] = index;
    j["regime"] = regime_name(run.regime);
    j["steps"] = run.steps;
    j["temperature"] = run.temperature;
    j["seed"] = run.seed;
    j["patches_decoded"] = run.patches_decoded;
    j["forward_passes_total"] = run.forward_passes_total;
    j["forward_passes_per_patch"] = run.forward_passes_per_patch;
    return j;
}

int cmd_generate(const RunConfig& cfg, const std::string& guide_dir) {
    if (cfg.checkpoint.empty()) throw ConfigError("generate: checkpoint path is required");
    if (cfg.out_dir.empty()) throw ConfigError("generate: out_dir is required");
    auto [mcfg, weights] = load_checkpoint<float>(cfg.checkpoint);
    check_grid_matches(mcfg, cfg);
    if (cfg.regime == Regime::spm && !mcfg.trained_with_sc) {
        throw ConfigError("generate: spm regime requires a checkpoint trained with "
                          "spherical conditioning");
    }
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);

    // Guide vectors come from a dataset directory's manifest + grids.
    std::vector<std::vector<SemanticVector>> guides;
    if (!guide_dir.empty()) {
        if (!mcfg.trained_with_semantic) {
            throw ConfigError("generate: checkpoint was not trained with semantic conditions");
        }
        const fs::path gdir(guide_dir);
        fs::path manifest_dir = gdir;
        if (!fs::exists(manifest_path(manifest_dir))) manifest_dir = gdir.parent_path();
        const auto manifest = read_manifest(manifest_dir);
        const Codebook cb(manifest.codec_seed, cfg.grid.vocab, manifest.tile_side);
        const FeatureExtractor feats(mcfg.sem_dim, manifest.mean_intensity);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(gdir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".htg") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("generate: no guide grids in " + guide_dir);
        for (const auto& p : files) {
            guides.push_back(view_vectors(read_htg_checked(p, cfg.grid), cb, feats));
        }
    }

    const Codebook cb(cfg.codec_seed, cfg.grid.vocab, cfg.tile_side);
    Generator gen(mcfg, weights, cfg.grid, cfg.decode_steps, cfg.temperature,
                  cfg.progressive_pass2);

    const auto t0 = std::chrono::steady_clock::now();
    const int count = cfg.sample_count;
    std::vector<TokenGrid> grids(static_cast<std::size_t>(count));
    std::vector<DecodeRun> runs(static_cast<std::size_t>(count));
    parallel_for(std::size_t(count), cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = Rng::substream(cfg.seed, "gen", i).next_u64();
        std::span<const SemanticVector> sem;
        if (!guides.empty()) sem = guides[i % guides.size()];
        grids[i] = gen.generate(cfg.regime, seed, sem, runs[i]);
    });

    std::ofstream runs_out(cfg.out_dir / "decode_runs.jsonl", std::ios::trunc);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "gen_%06d", i);
        write_htg(grids[std::size_t(i)], cfg.grid, cfg.out_dir / (std::string(name) + ".htg"));
        write_pnm(cb.decode(grids[std::size_t(i)]), cfg.out_dir / (std::string(name) + ".pgm"));
        runs_out << run_to_json(i, runs[std::size_t(i)]).dump() << "\n";
    }
    std::cerr << "generate: " << count << " panoramas (" << regime_name(cfg.regime) << ") in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              << " s\n";
    return 0;
}

int cmd_extrapolate(const RunConfig& cfg, const std::string& input, int observed_cols,
                    const std::string& truth) {
    if (cfg.checkpoint.empty()) throw ConfigError("extrapolate: checkpoint path is required");
    if (cfg.out_dir.empty()) throw ConfigError("extrapolate: out_dir is required");
    if (input.empty()) throw ConfigError("extrapolate: --input is required");
    auto [mcfg, weights] = load_checkpoint<float>(cfg.checkpoint);
    check_grid_matches(mcfg, cfg);

    const Codebook cb(cfg.codec_seed, cfg.grid.vocab, cfg.tile_side);
    auto load_grid = [&](const fs::path& p) -> TokenGrid {
        if (p.extension() == ".htg") return read_htg_checked(p, cfg.grid);
        const PanoImage img = read_pnm(p);
        return cb.encode(img);
    };
    const TokenGrid partial = load_grid(input);

    if (observed_cols == 0) observed_cols = cfg.grid.cols / 2;
    if (observed_cols < 1 || observed_cols > cfg.grid.cols) {
        throw ConfigError("extrapolate: observed column count out of range");
    }
    std::vector<bool> observed(std::size_t(cfg.grid.patch_count()), false);
    for (int i = 0; i < cfg.grid.rows; ++i) {
        for (int j = 0; j < observed_cols; ++j) observed[std::size_t(i * cfg.grid.cols + j)] = true;
    }

    Generator gen(mcfg, weights, cfg.grid, cfg.decode_steps, cfg.temperature,
                  cfg.progressive_pass2);
    DecodeRun run;
    const TokenGrid completed = gen.extrapolate(cfg.regime, partial, observed,
                                                Rng::substream(cfg.seed, "extrapolate").next_u64(),
                                                {}, run);

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    write_htg(completed, cfg.grid, cfg.out_dir / "extrapolated.htg");
    const PanoImage out_img = cb.decode(completed);
    write_pnm(out_img, cfg.out_dir / "extrapolated.pgm");

    json j;
    j["regime"] = regime_name(cfg.regime);
    j["observed_cols"] = observed_cols;
    j["forward_passes_total"] = run.forward_passes_total;
    if (!truth.empty()) {
        const PanoImage truth_img = cb.decode(load_grid(truth));
        j["ssim"] = ssim(out_img, truth_img);
        const auto p = psnr(out_img, truth_img);
        if (p.has_value()) {
            j["psnr"] = *p;
        } else {
            j["psnr"] = "identical";
        }
    }
    const std::string text = j.dump(2);
    std::cout << text << "\n";
    if (!cfg.report_path.empty()) {
        std::ofstream f(cfg.report_path, std::ios::trunc);
        f << text << "\n";
    }
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& real_dir, const std::string& fake_dir) {
    if (real_dir.empty() || fake_dir.empty()) {
        throw ConfigError("eval: --real and --fake directories are required");
    }
    const Codebook cb(cfg.codec_seed, cfg.grid.vocab, cfg.tile_side);
    const auto real = load_image_dir(real_dir, cb);
    const auto fake = load_image_dir(fake_dir, cb);
    const FeatureExtractor feats(cfg.feature_dim);

    MetricsReport report;
    report.fid = image_fid(real, fake, feats);
    if (real[0].height % 3 == 0 && cfg.grid.rows == 3) {
        const auto sfid = spherical_fid_images(real, fake, feats);
        report.sfid_top = sfid.top;
        report.sfid_middle = sfid.middle;
        report.sfid_bottom = sfid.bottom;
        report.sfid_mean = sfid.mean;
    }
    report.lrcs = lrcs(fake, real);  // KL(N_pred || N_gt)
    if (real.size() == fake.size()) {
        double ssim_sum = 0.0, psnr_sum = 0.0;
        bool all_identical = true, any_identical = false;
        for (std::size_t i = 0; i < real.size(); ++i) {
            ssim_sum += ssim(fake[i], real[i]);
            const auto p = psnr(fake[i], real[i]);
            if (p.has_value()) {
                psnr_sum += *p;
                all_identical = false;
            } else {
                any_identical = true;
            }
        }
        report.ssim = ssim_sum / double(real.size());
        if (all_identical && any_identical) {
            report.psnr_identical = true;
        } else if (!any_identical) {
            report.psnr = psnr_sum / double(real.size());
        }  // mixed identical/non-identical pairs leave psnr null
    }

    const std::string text = report.to_json();
    std::cout << text << "\n";
    if (!cfg.report_path.empty()) {
        std::ofstream f(cfg.report_path, std::ios::trunc);
        if (!f) throw DataError("eval: cannot write report to " + cfg.report_path.string());
        f << text << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spherical masked-token panorama modeling pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global -c/-s may follow the subcommand

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "flat TOML-style config file");
    app.add_option("-s,--set", overrides, "override config entries, key=value");

    auto* synth = app.add_subcommand("synth-data", "generate a deterministic synthetic corpus");
    auto* train = app.add_subcommand("train", "train the masked-token model");
    bool resume = false;
    train->add_flag("--resume", resume, "resume from the configured checkpoint");
    auto* generate = app.add_subcommand("generate", "sample panoramas from a checkpoint");
    std::string guide_dir;
    generate->add_option("--guide-dir", guide_dir,
                         "dataset split directory supplying semantic guide vectors");
    auto* extrapolate = app.add_subcommand("extrapolate", "complete a partially observed panorama");
    std::string input_path, truth_path;
    int observed_cols = 0;
    extrapolate->add_option("--input", input_path, ".htg grid or .pgm image input")->required();
    extrapolate->add_option("--observed-cols", observed_cols,
                            "observed patch columns from the left (default: half)");
    extrapolate->add_option("--truth", truth_path, "ground truth grid/image for SSIM/PSNR");
    auto* eval = app.add_subcommand("eval", "compute the metrics report for two image sets");
    std::string real_dir, fake_dir;
    eval->add_option("--real", real_dir, "reference set directory")->required();
    eval->add_option("--fake", fake_dir, "generated set directory")->required();

    try {
        app.parse(argc, argv);
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        std::string joined;
        for (const auto& kv : overrides) joined += kv + "\n";
        cfg = parse_config_text(joined, cfg);
        cfg.validate();

        if (synth->parsed()) return cmd_synth_data(cfg);
        if (train->parsed()) return cmd_train(cfg, resume);
        if (generate->parsed()) return cmd_generate(cfg, guide_dir);
        if (extrapolate->parsed()) return cmd_extrapolate(cfg, input_path, observed_cols, truth_path);
        if (eval->parsed()) return cmd_eval(cfg, real_dir, fake_dir);
        throw ConfigError("no subcommand selected");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
