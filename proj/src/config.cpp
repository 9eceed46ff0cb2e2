#include "panotok/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "panotok/errors.hpp"

namespace panotok {

Regime parse_regime(const std::string& s) {
    if (s == "arm") return Regime::arm;
    if (s == "lpm") return Regime::lpm;
    if (s == "spm") return Regime::spm;
    throw ConfigError("config: unknown regime '" + s + "' (expected arm|lpm|spm)");
}

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::arm: return "arm";
        case Regime::lpm: return "lpm";
        case Regime::spm: return "spm";
    }
    return "?";
}

RotaryVariant parse_rotary_variant(const std::string& s) {
    if (s == "vanilla2d") return RotaryVariant::vanilla2d;
    if (s == "sphere") return RotaryVariant::sphere;
    throw ConfigError("config: unknown rotary variant '" + s + "' (expected vanilla2d|sphere)");
}

std::string rotary_variant_name(RotaryVariant v) {
    return v == RotaryVariant::vanilla2d ? "vanilla2d" : "sphere";
}

void RunConfig::validate() const {
    grid.validate();
    if (tile_side < 2) throw ConfigError("config: tile_side must be >= 2");
    if (channels != 1 && channels != 3) throw ConfigError("config: channels must be 1 or 3");
    if (layers < 1) throw ConfigError("config: layers must be >= 1");
    if (heads < 1 || model_dim % heads != 0) {
        throw ConfigError("config: model_dim must be divisible by heads");
    }
    if ((model_dim / heads) % 4 != 0) {
        throw ConfigError("config: head dim (model_dim/heads) must be a multiple of 4");
    }
    if (sem_dim < 1) throw ConfigError("config: sem_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must lie in [0,1)");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (total_steps < 1) throw ConfigError("config: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps) {
        throw ConfigError("config: warmup_steps must lie in [0, total_steps]");
    }
    if (peak_lr <= 0.0) throw ConfigError("config: peak_lr must be positive");
    if (grad_clip <= 0.0) throw ConfigError("config: grad_clip must be positive");
    if (semantic_drop_prob < 0.0 || semantic_drop_prob > 1.0) {
        throw ConfigError("config: semantic_drop_prob must lie in [0,1]");
    }
    if (decode_steps < 1) throw ConfigError("config: decode_steps must be >= 1");
    if (temperature <= 0.0) throw ConfigError("config: temperature must be positive");
    if (sample_count < 1) throw ConfigError("config: sample_count must be >= 1");
    if (feature_dim < 1) throw ConfigError("config: feature_dim must be >= 1");
    if (train_count < 1 || test_count < 0) throw ConfigError("config: dataset counts invalid");
    if (regime == Regime::spm && !spherical_conditioning) {
        throw ConfigError("config: spm regime requires spherical_conditioning = true");
    }
    if (grid.token_width() % 4 != 0) {
        throw ConfigError("config: token width must be divisible by 4 for semantic views");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s, int line_no) {
    if (s.size() >= 2 && s.front() == '"') {
        if (s.back() != '"') {
            throw ConfigError("config: unterminated string on line " + std::to_string(line_no));
        }
        return s.substr(1, s.size() - 2);
    }
    return s;
}

long long to_int(const std::string& s, const std::string& key) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + s + "'");
    }
    return v;
}

double to_float(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
    }
}

bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("config: key '" + key + "' expects true|false, got '" + s + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    RunConfig& c = base;
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>>
        setters{
            {"rows", [&](auto& k, auto& v) { c.grid.rows = int(to_int(v, k)); }},
            {"cols", [&](auto& k, auto& v) { c.grid.cols = int(to_int(v, k)); }},
            {"patch_side", [&](auto& k, auto& v) { c.grid.patch_side = int(to_int(v, k)); }},
            {"vocab", [&](auto& k, auto& v) { c.grid.vocab = int(to_int(v, k)); }},
            {"tile_side", [&](auto& k, auto& v) { c.tile_side = int(to_int(v, k)); }},
            {"codec_seed", [&](auto& k, auto& v) { c.codec_seed = std::uint64_t(to_int(v, k)); }},
            {"channels", [&](auto& k, auto& v) { c.channels = int(to_int(v, k)); }},
            {"layers", [&](auto& k, auto& v) { c.layers = int(to_int(v, k)); }},
            {"heads", [&](auto& k, auto& v) { c.heads = int(to_int(v, k)); }},
            {"model_dim", [&](auto& k, auto& v) { c.model_dim = int(to_int(v, k)); }},
            {"sem_dim", [&](auto& k, auto& v) { c.sem_dim = int(to_int(v, k)); }},
            {"rotary", [&](auto&, auto& v) { c.rotary = parse_rotary_variant(v); }},
            {"sre_pass2_only", [&](auto& k, auto& v) { c.sre_pass2_only = to_bool(v, k); }},
            {"spherical_conditioning",
             [&](auto& k, auto& v) { c.spherical_conditioning = to_bool(v, k); }},
            {"semantic_conditioning",
             [&](auto& k, auto& v) { c.semantic_conditioning = to_bool(v, k); }},
            {"dropout", [&](auto& k, auto& v) { c.dropout = to_float(v, k); }},
            {"batch_size", [&](auto& k, auto& v) { c.batch_size = int(to_int(v, k)); }},
            {"total_steps", [&](auto& k, auto& v) { c.total_steps = int(to_int(v, k)); }},
            {"warmup_steps", [&](auto& k, auto& v) { c.warmup_steps = int(to_int(v, k)); }},
            {"peak_lr", [&](auto& k, auto& v) { c.peak_lr = to_float(v, k); }},
            {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = to_float(v, k); }},
            {"grad_clip", [&](auto& k, auto& v) { c.grad_clip = to_float(v, k); }},
            {"beta1", [&](auto& k, auto& v) { c.beta1 = to_float(v, k); }},
            {"beta2", [&](auto& k, auto& v) { c.beta2 = to_float(v, k); }},
            {"adam_eps", [&](auto& k, auto& v) { c.adam_eps = to_float(v, k); }},
            {"semantic_drop_prob", [&](auto& k, auto& v) { c.semantic_drop_prob = to_float(v, k); }},
            {"regime", [&](auto&, auto& v) { c.regime = parse_regime(v); }},
            {"decode_steps", [&](auto& k, auto& v) { c.decode_steps = int(to_int(v, k)); }},
            {"temperature", [&](auto& k, auto& v) { c.temperature = to_float(v, k); }},
            {"progressive_pass2", [&](auto& k, auto& v) { c.progressive_pass2 = to_bool(v, k); }},
            {"sample_count", [&](auto& k, auto& v) { c.sample_count = int(to_int(v, k)); }},
            {"feature_dim", [&](auto& k, auto& v) { c.feature_dim = int(to_int(v, k)); }},
            {"train_count", [&](auto& k, auto& v) { c.train_count = int(to_int(v, k)); }},
            {"test_count", [&](auto& k, auto& v) { c.test_count = int(to_int(v, k)); }},
            {"dataset_dir", [&](auto&, auto& v) { c.dataset_dir = v; }},
            {"checkpoint", [&](auto&, auto& v) { c.checkpoint = v; }},
            {"out_dir", [&](auto&, auto& v) { c.out_dir = v; }},
            {"report_path", [&](auto&, auto& v) { c.report_path = v; }},
            {"seed", [&](auto& k, auto& v) { c.seed = std::uint64_t(to_int(v, k)); }},
            {"threads", [&](auto& k, auto& v) { c.threads = unsigned(to_int(v, k)); }},
        };

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected 'key = value' on line " + std::to_string(line_no));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unquote(trim(line.substr(eq + 1)), line_no);
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("config: unknown key '" + key + "' on line " + std::to_string(line_no));
        }
        it->second(key, value);
    }
    return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str(), std::move(base));
}

}  // namespace panotok
