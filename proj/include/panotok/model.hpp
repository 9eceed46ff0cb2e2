#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panotok/codec.hpp"
#include "panotok/errors.hpp"
#include "panotok/grid.hpp"
#include "panotok/rng.hpp"
#include "panotok/rotary.hpp"

namespace panotok {

enum class Phase : int { pass1 = 0, pass2 = 1 };
enum class AttnMode { bidirectional, causal };

// Bidirectional transformer over one view patch plus its condition sequence.
// Pre-layer-norm blocks, GELU feed-forward of width 4*D, rotary/SRE position
// handling on q and k (no additive positional embeddings anywhere).
struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int model_dim = 64;
    int vocab = 256;   // [MASK] is id == vocab; the output head has `vocab` classes
    int sem_dim = 32;
    int max_cond_tokens = 4 + 8 * 64;
    RotaryVariant rotary = RotaryVariant::sphere;
    bool sre_pass2_only = false;  // vanilla tables in pass 1, sphere in pass 2
    int width = 48;   // token extents feeding the sphere frequency tables
    int height = 24;
    double dropout = 0.1;  // applied only when a dropout rng is supplied
    bool trained_with_sc = true;
    bool trained_with_semantic = true;

    int head_dim() const { return model_dim / heads; }
    int ff_dim() const { return 4 * model_dim; }

    void validate() const {
        if (layers < 1) throw ConfigError("model: layers must be >= 1");
        if (heads < 1 || model_dim % heads != 0) {
            throw ConfigError("model: model_dim must be divisible by heads");
        }
        if (head_dim() % 4 != 0) {
            throw ConfigError("model: head dim must be a multiple of 4, got " +
                              std::to_string(head_dim()));
        }
        if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
        if (sem_dim < 1) throw ConfigError("model: sem_dim must be >= 1");
        if (width < 1 || height < 1) throw ConfigError("model: token extents must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
    }

    // Rotary tables used for a given pass.
    RotaryVariant variant_for(Phase phase) const {
        if (rotary == RotaryVariant::vanilla2d) return RotaryVariant::vanilla2d;
        if (sre_pass2_only && phase == Phase::pass1) return RotaryVariant::vanilla2d;
        return RotaryVariant::sphere;
    }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct LayerWeights {
    Mat<S> ln1_g, ln1_b;  // 1 x D
    Mat<S> wq, wk, wv, wo;  // D x D
    Mat<S> ln2_g, ln2_b;  // 1 x D
    Mat<S> w1, b1;  // D x 4D, 1 x 4D
    Mat<S> w2, b2;  // 4D x D, 1 x D
};

template <typename S>
struct Weights {
    Mat<S> tok_emb;    // (V+1) x D, row V is [MASK]
    std::vector<LayerWeights<S>> layers;
    Mat<S> final_ln_g, final_ln_b;  // 1 x D
    Mat<S> w_out, b_out;  // D x V, 1 x V
    Mat<S> phase_emb;  // 2 x D, one row per pass
    Mat<S> sem_proj;   // k x D
    Mat<S> type_emb;   // 4 x D, one row per view tag

    static Weights zeros_like(const ModelConfig& cfg) {
        Weights w;
        const int d = cfg.model_dim, v = cfg.vocab, f = cfg.ff_dim();
        w.tok_emb = Mat<S>::Zero(v + 1, d);
        w.layers.resize(std::size_t(cfg.layers));
        for (auto& l : w.layers) {
            l.ln1_g = Mat<S>::Zero(1, d);
            l.ln1_b = Mat<S>::Zero(1, d);
            l.wq = Mat<S>::Zero(d, d);
            l.wk = Mat<S>::Zero(d, d);
            l.wv = Mat<S>::Zero(d, d);
            l.wo = Mat<S>::Zero(d, d);
            l.ln2_g = Mat<S>::Zero(1, d);
            l.ln2_b = Mat<S>::Zero(1, d);
            l.w1 = Mat<S>::Zero(d, f);
            l.b1 = Mat<S>::Zero(1, f);
            l.w2 = Mat<S>::Zero(f, d);
            l.b2 = Mat<S>::Zero(1, d);
        }
        w.final_ln_g = Mat<S>::Zero(1, d);
        w.final_ln_b = Mat<S>::Zero(1, d);
        w.w_out = Mat<S>::Zero(d, v);
        w.b_out = Mat<S>::Zero(1, v);
        w.phase_emb = Mat<S>::Zero(2, d);
        w.sem_proj = Mat<S>::Zero(cfg.sem_dim, d);
        w.type_emb = Mat<S>::Zero(4, d);
        return w;
    }

    static Weights init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Weights w = zeros_like(cfg);
        Rng rng = Rng::substream(seed, "weights");
        const double base = 0.02;
        const double resid = base / std::sqrt(2.0 * cfg.layers);
        auto fill = [&rng](Mat<S>& m, double std_dev) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = S(std_dev * rng.normal());
            }
        };
        fill(w.tok_emb, base);
        for (auto& l : w.layers) {
            l.ln1_g.setOnes();
            l.ln2_g.setOnes();
            fill(l.wq, base);
            fill(l.wk, base);
            fill(l.wv, base);
            fill(l.wo, resid);
            fill(l.w1, base);
            fill(l.w2, resid);
        }
        w.final_ln_g.setOnes();
        fill(w.w_out, base);
        fill(w.phase_emb, base);
        fill(w.sem_proj, base);
        fill(w.type_emb, base);
        return w;
    }
};

// Visits every parameter matrix with a stable name, in a fixed order shared
// by the checkpoint format, the optimizer, and the finite-difference harness.
template <typename S, typename Fn>
void for_each_param(Weights<S>& w, Fn&& fn) {
    fn("tok_emb", w.tok_emb);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lw = w.layers[l];
        fn(p + "ln1_g", lw.ln1_g);
        fn(p + "ln1_b", lw.ln1_b);
        fn(p + "wq", lw.wq);
        fn(p + "wk", lw.wk);
        fn(p + "wv", lw.wv);
        fn(p + "wo", lw.wo);
        fn(p + "ln2_g", lw.ln2_g);
        fn(p + "ln2_b", lw.ln2_b);
        fn(p + "w1", lw.w1);
        fn(p + "b1", lw.b1);
        fn(p + "w2", lw.w2);
        fn(p + "b2", lw.b2);
    }
    fn("final_ln_g", w.final_ln_g);
    fn("final_ln_b", w.final_ln_b);
    fn("w_out", w.w_out);
    fn("b_out", w.b_out);
    fn("phase_emb", w.phase_emb);
    fn("sem_proj", w.sem_proj);
    fn("type_emb", w.type_emb);
}

template <typename S, typename Fn>
void for_each_param(const Weights<S>& w, Fn&& fn) {
    for_each_param(const_cast<Weights<S>&>(w),
                   [&fn](const std::string& name, Mat<S>& m) { fn(name, std::as_const(m)); });
}

// One condition token: a neighbor-patch token id at its global coordinate.
// Wrapped neighbors keep their true grid coordinate; the sphere frequencies
// encode seam proximity without virtual positions.
struct CondToken {
    int id = 0;
    TokenCoord coord;
};

struct ConditionSet {
    std::vector<SemanticVector> semantics;  // at most 4, projected to D
    std::vector<CondToken> neighbors;       // NeighborSet order, raster within patch
    Phase phase = Phase::pass1;
};

// One supervised patch: masked input ids (mask id == vocab), per-position
// coordinates, ground-truth ids, and the supervision bitmap.
struct ModelExample {
    ConditionSet cond;
    std::vector<int> input_ids;
    std::vector<TokenCoord> coords;
    std::vector<int> target_ids;
    std::vector<bool> supervised;
};

namespace detail {

// Flattened sequence: condition rows first, then target rows.
struct SeqLayout {
    int cond_rows = 0;
    int target_rows = 0;
    std::vector<int> ids;            // -1 for semantic rows
    std::vector<int> sem_index;      // index into semantics when ids == -1
    std::vector<TokenCoord> coords;  // per row ({0,0} for semantic rows)
    std::vector<bool> rotate;        // false for semantic rows
    Phase phase = Phase::pass1;

    int total() const { return cond_rows + target_rows; }
};

inline SeqLayout build_layout(const ModelConfig& cfg, const ConditionSet& cond,
                              std::span<const int> target_ids,
                              std::span<const TokenCoord> target_coords) {
    if (target_ids.size() != target_coords.size()) {
        throw ConfigError("model: target id/coordinate count mismatch");
    }
    if (cond.semantics.size() > 4) throw ConfigError("model: at most 4 semantic vectors");
    const int cond_rows = int(cond.semantics.size() + cond.neighbors.size());
    if (cond_rows > cfg.max_cond_tokens) {
        throw ConfigError("model: condition sequence exceeds max_cond_tokens");
    }
    SeqLayout seq;
    seq.phase = cond.phase;
    seq.cond_rows = cond_rows;
    seq.target_rows = int(target_ids.size());
    const int total = seq.total();
    seq.ids.reserve(total);
    seq.sem_index.reserve(total);
    seq.coords.reserve(total);
    seq.rotate.reserve(total);
    for (std::size_t i = 0; i < cond.semantics.size(); ++i) {
        if (int(cond.semantics[i].values.size()) != cfg.sem_dim) {
            throw ConfigError("model: semantic vector dimension mismatch");
        }
        for (double v : cond.semantics[i].values) {
            if (!std::isfinite(v)) throw NumericError("model: non-finite semantic input");
        }
        seq.ids.push_back(-1);
        seq.sem_index.push_back(int(i));
        seq.coords.push_back({0, 0});
        seq.rotate.push_back(false);
    }
    for (const auto& n : cond.neighbors) {
        if (n.id < 0 || n.id >= cfg.vocab) {
            throw ConfigError("model: condition token id out of vocab");
        }
        seq.ids.push_back(n.id);
        seq.sem_index.push_back(-1);
        seq.coords.push_back(n.coord);
        seq.rotate.push_back(true);
    }
    for (std::size_t i = 0; i < target_ids.size(); ++i) {
        if (target_ids[i] < 0 || target_ids[i] > cfg.vocab) {
            throw ConfigError("model: target token id out of range (mask id is vocab)");
        }
        seq.ids.push_back(target_ids[i]);
        seq.sem_index.push_back(-1);
        seq.coords.push_back(target_coords[i]);
        seq.rotate.push_back(true);
    }
    return seq;
}

// cos/sin of coordinate * theta per rotary pair, shared by every layer and
// head of one forward call.
template <typename S>
struct RotaryCache {
    Mat<S> cx, sx, cy, sy;  // rows x (head_dim/4)
};

template <typename S>
RotaryCache<S> build_rotary_cache(const ModelConfig& cfg, const SeqLayout& seq) {
    const RotaryVariant variant = cfg.variant_for(seq.phase);
    const RotaryParams params =
        RotaryParams::make(cfg.head_dim(), variant, cfg.width, cfg.height);
    const int pairs = cfg.head_dim() / 4;
    const int total = seq.total();
    RotaryCache<S> rc;
    rc.cx = Mat<S>::Ones(total, pairs);
    rc.sx = Mat<S>::Zero(total, pairs);
    rc.cy = Mat<S>::Ones(total, pairs);
    rc.sy = Mat<S>::Zero(total, pairs);
    for (int r = 0; r < total; ++r) {
        if (!seq.rotate[std::size_t(r)]) continue;
        const auto& c = seq.coords[std::size_t(r)];
        for (int i = 0; i < pairs; ++i) {
            const double ax = double(c.x) * params.theta_x[std::size_t(i)];
            const double ay = double(c.y) * params.theta_y[std::size_t(i)];
            rc.cx(r, i) = S(std::cos(ax));
            rc.sx(r, i) = S(std::sin(ax));
            rc.cy(r, i) = S(std::cos(ay));
            rc.sy(r, i) = S(std::sin(ay));
        }
    }
    return rc;
}

// Rotates each head's x-half pairs by the x angles and y-half pairs by the
// y angles (forward), or by the negated angles (backward).
template <typename S>
void apply_rotary(Mat<S>& m, const ModelConfig& cfg, const RotaryCache<S>& rc, bool inverse) {
    const int heads = cfg.heads, dh = cfg.head_dim(), pairs = dh / 4;
    const S sgn = inverse ? S(-1) : S(1);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (int h = 0; h < heads; ++h) {
            S* base = m.row(r).data() + h * dh;
            for (int i = 0; i < pairs; ++i) {
                const S c = rc.cx(r, i), s = sgn * rc.sx(r, i);
                const S v0 = base[2 * i], v1 = base[2 * i + 1];
                base[2 * i] = c * v0 - s * v1;
                base[2 * i + 1] = s * v0 + c * v1;
            }
            S* ybase = base + dh / 2;
            for (int i = 0; i < pairs; ++i) {
                const S c = rc.cy(r, i), s = sgn * rc.sy(r, i);
                const S v0 = ybase[2 * i], v1 = ybase[2 * i + 1];
                ybase[2 * i] = c * v0 - s * v1;
                ybase[2 * i + 1] = s * v0 + c * v1;
            }
        }
    }
}

constexpr double kLnEps = 1e-5;

// y = xhat * g + b with xhat = (x - mean) / sqrt(var + eps); returns y and
// stores xhat / inv_std for the backward pass.
template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& xhat,
                  Vec<S>& inv_std) {
    const Eigen::Index rows = x.rows(), cols = x.cols();
    xhat.resize(rows, cols);
    inv_std.resize(rows);
    Mat<S> y(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        const S inv = S(1) / std::sqrt(var + S(kLnEps));
        inv_std(r) = inv;
        xhat.row(r) = ((x.row(r).array() - mean) * inv).matrix();
        y.row(r) = xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
    }
    return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv_std,
                           const Mat<S>& g, Mat<S>& dg, Mat<S>& db) {
    const Eigen::Index rows = dy.rows(), cols = dy.cols();
    Mat<S> dx(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto dxhat = (dy.row(r).cwiseProduct(g.row(0))).eval();
        const S m1 = dxhat.mean();
        const S m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = (((dxhat.array() - m1) - xhat.row(r).array() * m2) * inv_std(r)).matrix();
        dg.row(0) += dy.row(r).cwiseProduct(xhat.row(r));
        db.row(0) += dy.row(r);
    }
    return dx;
}

template <typename S>
S gelu_scalar(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad_scalar(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
    const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
    return cdf + x * pdf;
}

template <typename S>
struct LayerCache {
    Mat<S> ln1_xhat;
    Vec<S> ln1_inv;
    Mat<S> qu, ku;               // pre-rotary projections (rows x D)
    Mat<S> qr, kr;               // rotary-rotated copies
    Mat<S> v;                    // rows x D
    std::vector<Mat<S>> probs;   // per head, pre-dropout softmax rows
    std::vector<Mat<S>> drop;    // per head, dropout masks (empty if unused)
    Mat<S> ctx;                  // concatenated head outputs (rows x D)
    Mat<S> ln2_xhat;
    Vec<S> ln2_inv;
    Mat<S> ff_pre;               // rows x 4D, pre-GELU
    Mat<S> ff_drop;              // dropout mask (empty if unused)
    Mat<S> ff_act;               // rows x 4D, as fed to w2
};

template <typename S>
struct ForwardCache {
    SeqLayout seq;
    RotaryCache<S> rotary;
    Mat<S> x0;
    std::vector<LayerCache<S>> layers;
    Mat<S> fin_xhat;
    Vec<S> fin_inv;
    Mat<S> probs_out;  // target_rows x V softmax
};

template <typename S>
Mat<S> embed_sequence(const ModelConfig& cfg, const Weights<S>& w, const SeqLayout& seq,
                      const ConditionSet& cond) {
    const int total = seq.total();
    Mat<S> x0(total, cfg.model_dim);
    const int phase_row = int(seq.phase);
    for (int r = 0; r < total; ++r) {
        const int id = seq.ids[std::size_t(r)];
        if (id < 0) {
            const auto& sem = cond.semantics[std::size_t(seq.sem_index[std::size_t(r)])];
            Mat<S> v(1, cfg.sem_dim);
            for (int i = 0; i < cfg.sem_dim; ++i) {
                // Features are intensities; normalize to unit scale before projecting.
                v(0, i) = S(sem.values[std::size_t(i)] / 127.5);
            }
            x0.row(r) = v * w.sem_proj + w.type_emb.row(int(sem.view)) + w.phase_emb.row(phase_row);
        } else if (r < seq.cond_rows) {
            x0.row(r) = w.tok_emb.row(id) + w.phase_emb.row(phase_row);
        } else {
            x0.row(r) = w.tok_emb.row(id);
        }
    }
    return x0;
}

// Row-wise softmax with optional causal mask; masked (future) columns get
// probability zero.
template <typename S>
Mat<S> masked_softmax(const Mat<S>& scores, AttnMode mode) {
    const Eigen::Index rows = scores.rows(), cols = scores.cols();
    Mat<S> p(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index limit = (mode == AttnMode::causal) ? r + 1 : cols;
        auto seg = p.row(r).head(limit);
        seg = (scores.row(r).head(limit).array() - scores.row(r).head(limit).maxCoeff()).exp();
        seg /= seg.sum();
        if (limit < cols) p.row(r).tail(cols - limit).setZero();
    }
    return p;
}

// Counter-based dropout mask: one seed per tensor, splitmix-hashed per entry,
// so masks are deterministic and independent of evaluation order.
template <typename S>
void fill_dropout_mask(Mat<S>& m, std::uint64_t seed, double keep) {
    const S scale = S(1.0 / keep);
    const std::uint64_t threshold = std::uint64_t(keep * double(UINT64_MAX));
    S* data = m.data();
    const std::size_t n = std::size_t(m.size());
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = splitmix64(seed + i) < threshold ? scale : S(0);
    }
}

template <typename S>
void check_finite(const Mat<S>& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("model: non-finite values in ") + what);
}

// Full trunk forward. Returns logits for the target rows (or, in causal mode,
// still for all target rows: callers slice). `dropout_rng` null disables
// dropout; `cache` non-null retains activations for the backward pass.
template <typename S>
Mat<S> forward_seq(const ModelConfig& cfg, const Weights<S>& w, const SeqLayout& seq,
                   const ConditionSet& cond, AttnMode mode, Rng* dropout_rng,
                   ForwardCache<S>* cache) {
    cfg.validate();
    const int total = seq.total();
    if (total == 0) throw ConfigError("model: empty sequence");
    const int dh = cfg.head_dim();
    const S scale = S(1) / std::sqrt(S(dh));
    const double keep = 1.0 - cfg.dropout;
    const bool use_dropout = dropout_rng != nullptr && cfg.dropout > 0.0;

    RotaryCache<S> rc = build_rotary_cache<S>(cfg, seq);
    Mat<S> x = embed_sequence(cfg, w, seq, cond);
    check_finite(x, "input embedding");
    if (cache) {
        cache->seq = seq;
        cache->rotary = rc;
        cache->x0 = x;
        cache->layers.resize(std::size_t(cfg.layers));
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const auto& lw = w.layers[std::size_t(l)];
        LayerCache<S> local;
        LayerCache<S>& lc = cache ? cache->layers[std::size_t(l)] : local;

        const Mat<S> a_in = layer_norm(x, lw.ln1_g, lw.ln1_b, lc.ln1_xhat, lc.ln1_inv);
        lc.qu = a_in * lw.wq;
        lc.ku = a_in * lw.wk;
        lc.v = a_in * lw.wv;
        lc.qr = lc.qu;
        lc.kr = lc.ku;
        apply_rotary(lc.qr, cfg, rc, false);
        apply_rotary(lc.kr, cfg, rc, false);

        // Rotation is a relative-position device: it applies only to pairs of
        // spatial tokens. Score entries touching a semantic row stay unrotated
        // so logits depend on coordinate differences alone.
        const int ns = [&seq] {
            int n = 0;
            while (n < seq.total() && !seq.rotate[std::size_t(n)]) ++n;
            return n;
        }();
        const int sp = total - ns;

        lc.ctx.resize(total, cfg.model_dim);
        lc.probs.assign(std::size_t(cfg.heads), {});
        if (use_dropout) lc.drop.assign(std::size_t(cfg.heads), {});
        for (int h = 0; h < cfg.heads; ++h) {
            const auto qrh = lc.qr.middleCols(h * dh, dh);
            const auto krh = lc.kr.middleCols(h * dh, dh);
            const auto quh = lc.qu.middleCols(h * dh, dh);
            const auto kuh = lc.ku.middleCols(h * dh, dh);
            const auto vh = lc.v.middleCols(h * dh, dh);
            Mat<S> scores = qrh * krh.transpose() * scale;
            if (ns > 0) {
                scores.topRows(ns) = quh.topRows(ns) * kuh.transpose() * scale;
                scores.block(ns, 0, sp, ns) =
                    quh.bottomRows(sp) * kuh.topRows(ns).transpose() * scale;
            }
            Mat<S> p = masked_softmax(scores, mode);
            lc.probs[std::size_t(h)] = p;
            if (use_dropout) {
                Mat<S>& m = lc.drop[std::size_t(h)];
                m.resize(total, total);
                fill_dropout_mask(m, dropout_rng->next_u64(), keep);
                p = p.cwiseProduct(m);
            }
            lc.ctx.middleCols(h * dh, dh) = p * vh;
        }
        x += lc.ctx * lw.wo;

        const Mat<S> f_in = layer_norm(x, lw.ln2_g, lw.ln2_b, lc.ln2_xhat, lc.ln2_inv);
        lc.ff_pre = f_in * lw.w1;
        lc.ff_pre.rowwise() += lw.b1.row(0);
        lc.ff_act = lc.ff_pre.unaryExpr([](S v) { return gelu_scalar(v); });
        if (use_dropout) {
            lc.ff_drop.resize(lc.ff_act.rows(), lc.ff_act.cols());
            fill_dropout_mask(lc.ff_drop, dropout_rng->next_u64(), keep);
            lc.ff_act = lc.ff_act.cwiseProduct(lc.ff_drop);
        }
        Mat<S> f_out = lc.ff_act * lw.w2;
        f_out.rowwise() += lw.b2.row(0);
        x += f_out;
        check_finite(x, "transformer block output");
    }

    Mat<S> fin_xhat_local;
    Vec<S> fin_inv_local;
    Mat<S>& fin_xhat = cache ? cache->fin_xhat : fin_xhat_local;
    Vec<S>& fin_inv = cache ? cache->fin_inv : fin_inv_local;
    const Mat<S> y = layer_norm(x, w.final_ln_g, w.final_ln_b, fin_xhat, fin_inv);

    Mat<S> logits = y.bottomRows(seq.target_rows) * w.w_out;
    logits.rowwise() += w.b_out.row(0);
    check_finite(logits, "output logits");
    return logits;
}

template <typename S>
void backward_seq(const ModelConfig& cfg, const Weights<S>& w, const ConditionSet& cond,
                  const ForwardCache<S>& cache, const Mat<S>& dlogits, Weights<S>& g);

}  // namespace detail

// Row-wise softmax of a logits block (numerically stabilized).
template <typename S>
Mat<S> softmax_rows(const Mat<S>& logits) {
    Mat<S> p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const S mx = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

// Bidirectional forward over [conditions ++ targets]; masked positions carry
// id == vocab. Returns one logit row per target position. `mode` exists so
// the causal equivalence with forward_ar can be exercised directly.
template <typename S>
Mat<S> forward_masked(const ModelConfig& cfg, const Weights<S>& w, std::span<const int> target_ids,
                      std::span<const TokenCoord> target_coords, const ConditionSet& cond,
                      AttnMode mode = AttnMode::bidirectional) {
    const auto seq = detail::build_layout(cfg, cond, target_ids, target_coords);
    return detail::forward_seq<S>(cfg, w, seq, cond, mode, nullptr, nullptr);
}

// Causal next-token distribution after `prefix`. The query row for the next
// position is the [MASK] embedding at that position's coordinate, so an empty
// prefix with empty conditions degenerates to a weights-only distribution.
template <typename S>
Vec<S> forward_ar(const ModelConfig& cfg, const Weights<S>& w, std::span<const int> prefix_ids,
                  std::span<const TokenCoord> prefix_coords, TokenCoord next_coord,
                  const ConditionSet& cond) {
    std::vector<int> ids(prefix_ids.begin(), prefix_ids.end());
    std::vector<TokenCoord> coords(prefix_coords.begin(), prefix_coords.end());
    ids.push_back(cfg.vocab);  // [MASK] query row
    coords.push_back(next_coord);
    const auto seq = detail::build_layout(cfg, cond, ids, coords);
    const Mat<S> logits =
        detail::forward_seq<S>(cfg, w, seq, cond, AttnMode::causal, nullptr, nullptr);
    return logits.row(logits.rows() - 1).transpose();
}

// Mean cross-entropy over supervised target positions of one example,
// accumulating exact parameter gradients scaled by `grad_scale` when `grad`
// is non-null.
template <typename S>
S example_loss(const ModelConfig& cfg, const Weights<S>& w, const ModelExample& ex,
               Weights<S>* grad, S grad_scale, Rng* dropout_rng) {
    const auto seq = detail::build_layout(cfg, ex.cond, ex.input_ids, ex.coords);
    if (ex.target_ids.size() != ex.input_ids.size() || ex.supervised.size() != ex.input_ids.size()) {
        throw ConfigError("model: example target/mask size mismatch");
    }
    int supervised = 0;
    for (bool b : ex.supervised) supervised += b;
    if (supervised == 0) throw ConfigError("model: example supervises no positions");

    detail::ForwardCache<S> cache;
    const Mat<S> logits = detail::forward_seq(cfg, w, seq, ex.cond, AttnMode::bidirectional,
                                              dropout_rng, grad ? &cache : nullptr);
    const Mat<S> probs = softmax_rows(logits);

    S loss = S(0);
    for (int i = 0; i < int(ex.target_ids.size()); ++i) {
        if (!ex.supervised[std::size_t(i)]) continue;
        const int t = ex.target_ids[std::size_t(i)];
        if (t < 0 || t >= cfg.vocab) throw ConfigError("model: ground-truth id out of vocab");
        loss -= std::log(std::max(probs(i, t), S(1e-30)));
    }
    loss /= S(supervised);

    if (grad) {
        Mat<S> dlogits = probs;
        const S s = grad_scale / S(supervised);
        for (int i = 0; i < int(ex.target_ids.size()); ++i) {
            if (!ex.supervised[std::size_t(i)]) {
                dlogits.row(i).setZero();
                continue;
            }
            dlogits(i, ex.target_ids[std::size_t(i)]) -= S(1);
            dlogits.row(i) *= s;
        }
        detail::backward_seq(cfg, w, ex.cond, cache, dlogits, *grad);
    }
    return loss;
}

namespace detail {

// Exact reverse of forward_seq. `dlogits` covers the target rows.
template <typename S>
void backward_seq(const ModelConfig& cfg, const Weights<S>& w, const ConditionSet& cond,
                  const ForwardCache<S>& cache, const Mat<S>& dlogits, Weights<S>& g) {
    const SeqLayout& seq = cache.seq;
    const int total = seq.total();
    const int dh = cfg.head_dim();
    const S scale = S(1) / std::sqrt(S(dh));

    // Output head.
    const Mat<S> y = [&] {
        Mat<S> out(total, cfg.model_dim);
        for (int r = 0; r < total; ++r) {
            out.row(r) = cache.fin_xhat.row(r).cwiseProduct(w.final_ln_g.row(0)) +
                         w.final_ln_b.row(0);
        }
        return out;
    }();
    g.w_out += y.bottomRows(seq.target_rows).transpose() * dlogits;
    g.b_out += dlogits.colwise().sum();

    Mat<S> dy = Mat<S>::Zero(total, cfg.model_dim);
    dy.bottomRows(seq.target_rows) = dlogits * w.w_out.transpose();
    Mat<S> dx = layer_norm_backward(dy, cache.fin_xhat, cache.fin_inv, w.final_ln_g,
                                    g.final_ln_g, g.final_ln_b);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const auto& lw = w.layers[std::size_t(l)];
        auto& lg = g.layers[std::size_t(l)];
        const LayerCache<S>& lc = cache.layers[std::size_t(l)];

        // Feed-forward block: x_out = x_mid + gelu(LN2(x_mid) W1 + b1) W2 + b2.
        const Mat<S> f_in = [&] {
            Mat<S> out(total, cfg.model_dim);
            for (int r = 0; r < total; ++r) {
                out.row(r) = lc.ln2_xhat.row(r).cwiseProduct(lw.ln2_g.row(0)) + lw.ln2_b.row(0);
            }
            return out;
        }();
        lg.w2 += lc.ff_act.transpose() * dx;
        lg.b2 += dx.colwise().sum();
        Mat<S> dact = dx * lw.w2.transpose();
        if (lc.ff_drop.size() > 0) dact = dact.cwiseProduct(lc.ff_drop);
        Mat<S> dpre = dact.cwiseProduct(
            lc.ff_pre.unaryExpr([](S v) { return gelu_grad_scalar(v); }));
        lg.w1 += f_in.transpose() * dpre;
        lg.b1 += dpre.colwise().sum();
        const Mat<S> df_in = dpre * lw.w1.transpose();
        dx += layer_norm_backward(df_in, lc.ln2_xhat, lc.ln2_inv, lw.ln2_g, lg.ln2_g, lg.ln2_b);

        // Attention block.
        const Mat<S> a_in = [&] {
            Mat<S> out(total, cfg.model_dim);
            for (int r = 0; r < total; ++r) {
                out.row(r) = lc.ln1_xhat.row(r).cwiseProduct(lw.ln1_g.row(0)) + lw.ln1_b.row(0);
            }
            return out;
        }();
        lg.wo += lc.ctx.transpose() * dx;
        const Mat<S> dctx = dx * lw.wo.transpose();

        const int ns = [&seq] {
            int n = 0;
            while (n < seq.total() && !seq.rotate[std::size_t(n)]) ++n;
            return n;
        }();
        const int sp = total - ns;

        Mat<S> dqr = Mat<S>::Zero(total, cfg.model_dim);
        Mat<S> dkr = Mat<S>::Zero(total, cfg.model_dim);
        Mat<S> dqu = Mat<S>::Zero(total, cfg.model_dim);
        Mat<S> dku = Mat<S>::Zero(total, cfg.model_dim);
        Mat<S> dv(total, cfg.model_dim);
        for (int h = 0; h < cfg.heads; ++h) {
            const auto qrh = lc.qr.middleCols(h * dh, dh);
            const auto krh = lc.kr.middleCols(h * dh, dh);
            const auto quh = lc.qu.middleCols(h * dh, dh);
            const auto kuh = lc.ku.middleCols(h * dh, dh);
            const auto vh = lc.v.middleCols(h * dh, dh);
            const Mat<S>& p = lc.probs[std::size_t(h)];
            const auto dctxh = dctx.middleCols(h * dh, dh);

            Mat<S> p_used = p;
            Mat<S> dp = dctxh * vh.transpose();
            if (!lc.drop.empty() && lc.drop[std::size_t(h)].size() > 0) {
                const Mat<S>& m = lc.drop[std::size_t(h)];
                p_used = p.cwiseProduct(m);
                dp = dp.cwiseProduct(m);
            }
            dv.middleCols(h * dh, dh) = p_used.transpose() * dctxh;

            // Softmax backward on the pre-dropout probabilities.
            Mat<S> ds(total, total);
            for (int r = 0; r < total; ++r) {
                const S dot = dp.row(r).dot(p.row(r));
                ds.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
            }
            // Rotated spatial-spatial block.
            const auto ds_pp = ds.block(ns, ns, sp, sp);
            dqr.block(ns, h * dh, sp, dh) += ds_pp * krh.bottomRows(sp) * scale;
            dkr.block(ns, h * dh, sp, dh) += ds_pp.transpose() * qrh.bottomRows(sp) * scale;
            if (ns > 0) {
                // Unrotated semantic rows (full width) and semantic columns.
                const auto ds_top = ds.topRows(ns);
                dqu.block(0, h * dh, ns, dh) += ds_top * kuh * scale;
                dku.middleCols(h * dh, dh) += ds_top.transpose() * quh.topRows(ns) * scale;
                const auto ds_bl = ds.block(ns, 0, sp, ns);
                dqu.block(ns, h * dh, sp, dh) += ds_bl * kuh.topRows(ns) * scale;
                dku.block(0, h * dh, ns, dh) += ds_bl.transpose() * quh.bottomRows(sp) * scale;
            }
        }
        apply_rotary(dqr, cfg, cache.rotary, true);
        apply_rotary(dkr, cfg, cache.rotary, true);
        const Mat<S> dq = dqr + dqu;
        const Mat<S> dk = dkr + dku;

        lg.wq += a_in.transpose() * dq;
        lg.wk += a_in.transpose() * dk;
        lg.wv += a_in.transpose() * dv;
        const Mat<S> da_in = dq * lw.wq.transpose() + dk * lw.wk.transpose() +
                             dv * lw.wv.transpose();
        dx += layer_norm_backward(da_in, lc.ln1_xhat, lc.ln1_inv, lw.ln1_g, lg.ln1_g, lg.ln1_b);
    }

    // Embedding rows.
    const int phase_row = int(seq.phase);
    for (int r = 0; r < total; ++r) {
        const int id = seq.ids[std::size_t(r)];
        if (id < 0) {
            const auto& sem = cond.semantics[std::size_t(seq.sem_index[std::size_t(r)])];
            Mat<S> v(1, cfg.sem_dim);
            for (int i = 0; i < cfg.sem_dim; ++i) v(0, i) = S(sem.values[std::size_t(i)] / 127.5);
            g.sem_proj += v.transpose() * dx.row(r);
            g.type_emb.row(int(sem.view)) += dx.row(r);
            g.phase_emb.row(phase_row) += dx.row(r);
        } else if (r < seq.cond_rows) {
            g.tok_emb.row(id) += dx.row(r);
            g.phase_emb.row(phase_row) += dx.row(r);
        } else {
            g.tok_emb.row(id) += dx.row(r);
        }
    }
}

}  // namespace detail

// Batch loss: mean over examples of each example's mean masked cross-entropy.
// When `grad` is non-null the exact gradient is accumulated into it.
// Per-example dropout streams are derived from `dropout_seed` and the example
// index, so results are independent of evaluation order.
template <typename S>
S masked_loss(const ModelConfig& cfg, const Weights<S>& w, std::span<const ModelExample> batch,
              Weights<S>* grad, std::uint64_t dropout_seed = 0, bool use_dropout = false) {
    if (batch.empty()) throw ConfigError("model: empty batch");
    const S inv_b = S(1) / S(batch.size());
    S loss = S(0);
    for (std::size_t e = 0; e < batch.size(); ++e) {
        Rng rng = Rng::substream(dropout_seed, "dropout", e);
        Rng* rp = use_dropout ? &rng : nullptr;
        loss += example_loss(cfg, w, batch[e], grad, inv_b, rp);
    }
    return loss * inv_b;
}

// ---------------------------------------------------------------------------
// Checkpoint format HCKPT1: 32-byte header (magic "HCKPT1" + config fields),
// then named parameter records: u16 name length, name bytes, u64 element
// count, little-endian f32 payload. Bit-exact save/load.
// ---------------------------------------------------------------------------

using ExtraRecords = std::map<std::string, std::vector<float>>;

void save_checkpoint_raw(const std::filesystem::path& path, const ModelConfig& cfg,
                         const std::vector<std::pair<std::string, std::vector<float>>>& records);
std::pair<ModelConfig, ExtraRecords> load_checkpoint_raw(const std::filesystem::path& path);

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const Weights<S>& w, const ExtraRecords& extra = {}) {
    std::vector<std::pair<std::string, std::vector<float>>> records;
    for_each_param(w, [&records](const std::string& name, const Mat<S>& m) {
        std::vector<float> data(std::size_t(m.size()));
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) data[i++] = float(m(r, c));
        }
        records.emplace_back(name, std::move(data));
    });
    for (const auto& [name, data] : extra) records.emplace_back(name, data);
    save_checkpoint_raw(path, cfg, records);
}

template <typename S>
std::pair<ModelConfig, Weights<S>> load_checkpoint(const std::filesystem::path& path,
                                                   ExtraRecords* extra_out = nullptr) {
    auto [cfg, records] = load_checkpoint_raw(path);
    Weights<S> w = Weights<S>::zeros_like(cfg);
    for_each_param(w, [&records, &path](const std::string& name, Mat<S>& m) {
        const auto it = records.find(name);
        if (it == records.end()) {
            throw DataError("checkpoint: missing parameter record '" + name + "' in " +
                            path.string());
        }
        if (it->second.size() != std::size_t(m.size())) {
            throw DataError("checkpoint: size mismatch for '" + name + "' in " + path.string());
        }
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = S(it->second[i++]);
        }
        records.erase(it);
    });
    if (extra_out) *extra_out = std::move(records);
    return {cfg, std::move(w)};
}

}  // namespace panotok
