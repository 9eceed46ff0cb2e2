#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "panotok/errors.hpp"
#include "panotok/model.hpp"
#include "panotok/rng.hpp"

using namespace panotok;

namespace {

// Tiny configuration for the finite-difference harness: L=1, H=2, D=8,
// N=4 (2x2 patch), V=7.
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.model_dim = 8;
    cfg.vocab = 7;
    cfg.sem_dim = 4;
    cfg.max_cond_tokens = 64;
    cfg.rotary = RotaryVariant::sphere;
    cfg.width = 6;
    cfg.height = 4;
    cfg.dropout = 0.0;
    return cfg;
}

SemanticVector sem_vec(ViewTag view, std::uint64_t seed, int k) {
    Rng rng(seed);
    SemanticVector v;
    v.view = view;
    v.values.resize(std::size_t(k));
    for (auto& x : v.values) x = 80.0 * rng.normal();
    return v;
}

// A small batch exercising both passes, semantic + neighbor conditions, and
// an unconditioned example.
std::vector<ModelExample> tiny_batch(const ModelConfig& cfg) {
    Rng rng(99);
    std::vector<ModelExample> batch;

    ModelExample a;
    a.cond.phase = Phase::pass1;
    a.cond.semantics = {sem_vec(ViewTag::front, 1, cfg.sem_dim), sem_vec(ViewTag::left, 2, cfg.sem_dim)};
    for (int i = 0; i < 4; ++i) {
        a.cond.neighbors.push_back({int(rng.uniform_u64(std::uint64_t(cfg.vocab))), {i, 1}});
    }
    a.input_ids = {cfg.vocab, 2, cfg.vocab, 5};
    a.coords = {{2, 2}, {3, 2}, {2, 3}, {3, 3}};
    a.target_ids = {1, 2, 6, 5};
    a.supervised = {true, false, true, false};
    batch.push_back(a);

    ModelExample b;
    b.cond.phase = Phase::pass2;
    b.cond.semantics = {sem_vec(ViewTag::right, 3, cfg.sem_dim), sem_vec(ViewTag::back, 4, cfg.sem_dim)};
    for (int i = 0; i < 6; ++i) {
        b.cond.neighbors.push_back({int(rng.uniform_u64(std::uint64_t(cfg.vocab))), {5 - i, i % 4}});
    }
    b.input_ids = {cfg.vocab, cfg.vocab, cfg.vocab, 0};
    b.coords = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    b.target_ids = {3, 0, 4, 0};
    b.supervised = {true, true, true, false};
    batch.push_back(b);

    ModelExample c;  // no conditions at all
    c.cond.phase = Phase::pass1;
    c.input_ids = {cfg.vocab, cfg.vocab, 1, cfg.vocab};
    c.coords = {{4, 2}, {5, 2}, {4, 3}, {5, 3}};
    c.target_ids = {2, 3, 1, 6};
    c.supervised = {true, true, false, true};
    batch.push_back(c);

    return batch;
}

std::vector<TokenCoord> patch_coords(int x0, int y0, int side) {
    std::vector<TokenCoord> out;
    for (int v = 0; v < side; ++v) {
        for (int u = 0; u < side; ++u) out.push_back({x0 + u, y0 + v});
    }
    return out;
}

}  // namespace

TEST_CASE("attention softmax rows are normalized in both modes") {
    Rng rng(41);
    Mat<double> scores(6, 6);
    for (Eigen::Index r = 0; r < 6; ++r) {
        for (Eigen::Index c = 0; c < 6; ++c) scores(r, c) = 3.0 * rng.normal();
    }
    for (auto mode : {AttnMode::bidirectional, AttnMode::causal}) {
        const auto p = detail::masked_softmax(scores, mode);
        for (Eigen::Index r = 0; r < 6; ++r) {
            CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
            if (mode == AttnMode::causal) {
                for (Eigen::Index c = r + 1; c < 6; ++c) CHECK(p(r, c) == 0.0);
            }
        }
    }
}

TEST_CASE("softmax rows sum to one on a fresh model") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 5);
    const auto batch = tiny_batch(cfg);
    const auto logits =
        forward_masked<double>(cfg, w, batch[0].input_ids, batch[0].coords, batch[0].cond);
    CHECK(logits.rows() == 4);
    CHECK(logits.cols() == cfg.vocab);
    CHECK(logits.allFinite());
    const auto p = softmax_rows(logits);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("permuting two masked target positions permutes their logit rows") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 6);
    auto ex = tiny_batch(cfg)[2];  // positions 0,1,3 are masked
    const auto base = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);

    std::swap(ex.input_ids[0], ex.input_ids[1]);  // both [MASK]
    std::swap(ex.coords[0], ex.coords[1]);
    const auto swapped = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);

    CHECK((swapped.row(0) - base.row(1)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((swapped.row(1) - base.row(0)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((swapped.row(2) - base.row(2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((swapped.row(3) - base.row(3)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("phase embedding separates the passes when conditions exist") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 7);
    auto ex = tiny_batch(cfg)[0];

    ex.cond.phase = Phase::pass1;
    const auto p1 = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
    ex.cond.phase = Phase::pass2;
    const auto p2 = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() > 1e-6);

    // Without condition tokens the phase is invisible.
    ModelExample bare = tiny_batch(cfg)[2];
    bare.cond.phase = Phase::pass1;
    const auto q1 = forward_masked<double>(cfg, w, bare.input_ids, bare.coords, bare.cond);
    bare.cond.phase = Phase::pass2;
    const auto q2 = forward_masked<double>(cfg, w, bare.input_ids, bare.coords, bare.cond);
    CHECK((q1 - q2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("causal mode: appending a token never changes earlier logits") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 8);
    auto ex = tiny_batch(cfg)[0];

    const auto full = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond,
                                             AttnMode::causal);
    std::vector<int> shorter(ex.input_ids.begin(), ex.input_ids.end() - 1);
    std::vector<TokenCoord> shorter_c(ex.coords.begin(), ex.coords.end() - 1);
    const auto prefix = forward_masked<double>(cfg, w, shorter, shorter_c, ex.cond,
                                               AttnMode::causal);
    for (Eigen::Index r = 0; r < prefix.rows(); ++r) {
        CHECK((full.row(r) - prefix.row(r)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("forward_ar equals masked mode under a fully-causal mask") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 9);
    auto ex = tiny_batch(cfg)[0];

    for (int t = 0; t < 4; ++t) {
        std::vector<int> prefix(ex.target_ids.begin(), ex.target_ids.begin() + t);
        std::vector<TokenCoord> pcoords(ex.coords.begin(), ex.coords.begin() + t);
        const auto ar = forward_ar<double>(cfg, w, prefix, pcoords, ex.coords[std::size_t(t)],
                                           ex.cond);

        std::vector<int> ids = prefix;
        ids.push_back(cfg.vocab);
        std::vector<TokenCoord> coords = pcoords;
        coords.push_back(ex.coords[std::size_t(t)]);
        const auto masked = forward_masked<double>(cfg, w, ids, coords, ex.cond, AttnMode::causal);
        CHECK((masked.row(t).transpose() - ar).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("forward_ar with empty prefix and conditions depends only on weights") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 10);
    ConditionSet none;
    const auto a = forward_ar<double>(cfg, w, {}, {}, {0, 0}, none);
    const auto b = forward_ar<double>(cfg, w, {}, {}, {5, 3}, none);
    // Coordinates cancel in a single-row sequence (relative embedding).
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform logits give loss = ln V exactly; one-hot drives it to zero") {
    const ModelConfig cfg = tiny_config();
    auto w = Weights<double>::init(cfg, 11);
    w.w_out.setZero();
    w.b_out.setZero();
    const auto batch = tiny_batch(cfg);
    const double loss = masked_loss<double>(cfg, w, batch, nullptr);
    CHECK(loss == doctest::Approx(std::log(double(cfg.vocab))).epsilon(1e-12));

    // Near-one-hot logits via a huge bias on the target class of a 1-position
    // example: loss -> 0.
    Mat<double> logits = Mat<double>::Zero(1, cfg.vocab);
    logits(0, 3) = 50.0;
    const auto p = softmax_rows(logits);
    CHECK(-std::log(p(0, 3)) < 1e-6);
}

TEST_CASE("SRE end-to-end: translated coordinates leave logits unchanged") {
    ModelConfig cfg = tiny_config();
    cfg.model_dim = 16;  // head_dim 8: live rotary frequencies on both axes
    const auto w = Weights<double>::init(cfg, 12);
    Rng rng(13);
    const auto batch = tiny_batch(cfg);
    for (int trial = 0; trial < 200; ++trial) {
        auto ex = batch[std::size_t(trial) % batch.size()];
        const auto base = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
        const int sx = int(rng.uniform_u64(4 * std::uint64_t(cfg.width))) - 2 * cfg.width;
        const int sy = int(rng.uniform_u64(2 * std::uint64_t(cfg.height))) - cfg.height;
        for (auto& c : ex.coords) {
            c.x += sx;
            c.y += sy;
        }
        for (auto& n : ex.cond.neighbors) {
            n.coord.x += sx;
            n.coord.y += sy;
        }
        const auto shifted = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
        CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("finite-difference gradient check on the tiny config") {
    const ModelConfig cfg = tiny_config();
    const auto w0 = Weights<double>::init(cfg, 21);
    const auto batch = tiny_batch(cfg);

    auto grads = Weights<double>::zeros_like(cfg);
    const double loss0 = masked_loss<double>(cfg, w0, batch, &grads);
    CHECK(std::isfinite(loss0));

    double grad_norm_sq = 0.0;
    for_each_param(grads, [&](const std::string&, const Mat<double>& m) {
        grad_norm_sq += m.squaredNorm();
    });
    CHECK(std::isfinite(grad_norm_sq));
    CHECK(grad_norm_sq > 0.0);

    const double eps = 1e-4;
    double max_rel = 0.0;
    std::string worst;
    auto mutable_w = w0;
    std::vector<std::pair<std::string, Mat<double>*>> params;
    for_each_param(mutable_w, [&](const std::string& name, Mat<double>& m) {
        params.emplace_back(name, &m);
    });
    std::vector<std::pair<std::string, const Mat<double>*>> grad_mats;
    for_each_param(grads, [&](const std::string& name, const Mat<double>& m) {
        grad_mats.emplace_back(name, &m);
    });

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Mat<double>& m = *params[pi].second;
        const Mat<double>& gm = *grad_mats[pi].second;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const double orig = m(r, c);
                m(r, c) = orig + eps;
                const double up = masked_loss<double>(cfg, mutable_w, batch, nullptr);
                m(r, c) = orig - eps;
                const double dn = masked_loss<double>(cfg, mutable_w, batch, nullptr);
                m(r, c) = orig;
                const double fd = (up - dn) / (2.0 * eps);
                const double an = gm(r, c);
                const double rel = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
                if (rel > max_rel) {
                    max_rel = rel;
                    worst = params[pi].first;
                }
            }
        }
    }
    INFO("worst parameter: " << worst << " rel err " << max_rel);
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("phase row for the unused pass gets zero gradient") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 22);
    auto batch = tiny_batch(cfg);
    batch.erase(batch.begin() + 1);  // drop the pass2 example
    auto grads = Weights<double>::zeros_like(cfg);
    masked_loss<double>(cfg, w, batch, &grads);
    CHECK(grads.phase_emb.row(int(Phase::pass2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.phase_emb.row(int(Phase::pass1)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("deterministic logits for identical inputs within a run") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 23);
    const auto ex = tiny_batch(cfg)[1];
    const auto a = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
    const auto b = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bitwise
}

TEST_CASE("input validation") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<double>::init(cfg, 24);
    auto ex = tiny_batch(cfg)[0];

    auto bad_ids = ex.input_ids;
    bad_ids[0] = cfg.vocab + 1;
    CHECK_THROWS_AS(forward_masked<double>(cfg, w, bad_ids, ex.coords, ex.cond), ConfigError);

    auto bad_cond = ex.cond;
    bad_cond.neighbors[0].id = cfg.vocab;
    CHECK_THROWS_AS(forward_masked<double>(cfg, w, ex.input_ids, ex.coords, bad_cond), ConfigError);

    auto bad_sem = ex.cond;
    bad_sem.semantics[0].values[0] = std::nan("");
    CHECK_THROWS_AS(forward_masked<double>(cfg, w, ex.input_ids, ex.coords, bad_sem), NumericError);

    std::vector<TokenCoord> short_coords(ex.coords.begin(), ex.coords.end() - 1);
    CHECK_THROWS_AS(forward_masked<double>(cfg, w, ex.input_ids, short_coords, ex.cond),
                    ConfigError);
}

TEST_CASE("checkpoint roundtrip is bit exact and validates vocab") {
    const ModelConfig cfg = tiny_config();
    const auto w = Weights<float>::init(cfg, 31);
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = dir / "panotok_test_ckpt.bin";

    ExtraRecords extra{{"opt.step", {42.0f}}};
    save_checkpoint(path, cfg, w, extra);

    ExtraRecords extra_back;
    auto [cfg2, w2] = load_checkpoint<float>(path, &extra_back);
    CHECK(cfg2.layers == cfg.layers);
    CHECK(cfg2.vocab == cfg.vocab);
    CHECK(cfg2.sem_dim == cfg.sem_dim);
    CHECK(cfg2.width == cfg.width);
    REQUIRE(extra_back.count("opt.step") == 1);
    CHECK(extra_back["opt.step"][0] == 42.0f);

    bool all_equal = true;
    std::vector<const Mat<float>*> lhs, rhs;
    for_each_param(w, [&](const std::string&, const Mat<float>& m) { lhs.push_back(&m); });
    for_each_param(w2, [&](const std::string&, const Mat<float>& m) { rhs.push_back(&m); });
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        if (*lhs[i] != *rhs[i]) all_equal = false;
    }
    CHECK(all_equal);

    // Re-saving produces byte-identical files.
    const auto path2 = dir / "panotok_test_ckpt2.bin";
    save_checkpoint(path2, cfg, w, extra);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("coordinates are visible to attention once a head has a nonzero frequency") {
    // A 4-dim head's sphere table holds only the i=1 entry, which is zero by
    // construction; 8-dim heads carry a live second frequency.
    ModelConfig cfg = tiny_config();
    cfg.heads = 1;  // head_dim 8 -> two pairs per axis
    const auto w = Weights<double>::init(cfg, 33);
    auto ex = tiny_batch(cfg)[0];
    const auto base = forward_masked<double>(cfg, w, ex.input_ids, ex.coords, ex.cond);
    auto moved = ex;
    moved.coords[0].x += 1;  // only one token moves: logits must change
    const auto shifted = forward_masked<double>(cfg, w, moved.input_ids, moved.coords, moved.cond);
    CHECK((base - shifted).cwiseAbs().maxCoeff() > 1e-9);
}
