#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "panotok/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace panotok {

namespace {

constexpr char kMagic[6] = {'H', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::ofstream& f, std::uint16_t v) {
    f.write(reinterpret_cast<const char*>(&v), 2);
}
void put_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ofstream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
}

template <typename T>
T get_le(std::ifstream& f, const std::filesystem::path& path) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw DataError("checkpoint: truncated file " + path.string());
    return v;
}

// Exclusive lock file guarding concurrent checkpoint writes.
class LockFile {
public:
    explicit LockFile(const std::filesystem::path& target) : path_(target.string() + ".lock") {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw DataError("checkpoint: lock file " + path_ + " already held");
        std::fclose(f);
    }
    ~LockFile() { std::remove(path_.c_str()); }

private:
    std::string path_;
};

}  // namespace

void save_checkpoint_raw(const std::filesystem::path& path, const ModelConfig& cfg,
                         const std::vector<std::pair<std::string, std::vector<float>>>& records) {
    LockFile lock(path);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("checkpoint: cannot open " + tmp.string() + " for writing");
        f.write(kMagic, 6);
        put_u16(f, kVersion);
        put_u16(f, std::uint16_t(cfg.layers));
        put_u16(f, std::uint16_t(cfg.heads));
        put_u16(f, std::uint16_t(cfg.model_dim));
        put_u32(f, std::uint32_t(cfg.vocab));
        put_u16(f, std::uint16_t(cfg.sem_dim));
        const std::uint8_t variant = cfg.rotary == RotaryVariant::vanilla2d ? 0 : 1;
        f.put(char(variant));
        std::uint8_t flags = 0;
        if (cfg.sre_pass2_only) flags |= 1;
        if (cfg.trained_with_sc) flags |= 2;
        if (cfg.trained_with_semantic) flags |= 4;
        f.put(char(flags));
        put_u32(f, std::uint32_t(cfg.width));
        put_u32(f, std::uint32_t(cfg.height));
        put_u16(f, 0);  // reserved, pads the header to 32 bytes

        for (const auto& [name, data] : records) {
            if (name.size() > 0xffff) throw DataError("checkpoint: record name too long");
            put_u16(f, std::uint16_t(name.size()));
            f.write(name.data(), std::streamsize(name.size()));
            put_u64(f, std::uint64_t(data.size()));
            f.write(reinterpret_cast<const char*>(data.data()),
                    std::streamsize(data.size() * sizeof(float)));
        }
        if (!f) throw DataError("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::pair<ModelConfig, ExtraRecords> load_checkpoint_raw(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path.string());
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kMagic, 6) != 0) {
        throw DataError("checkpoint: bad magic in " + path.string() + " (expected HCKPT1)");
    }
    const auto version = get_le<std::uint16_t>(f, path);
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.layers = get_le<std::uint16_t>(f, path);
    cfg.heads = get_le<std::uint16_t>(f, path);
    cfg.model_dim = get_le<std::uint16_t>(f, path);
    cfg.vocab = int(get_le<std::uint32_t>(f, path));
    cfg.sem_dim = get_le<std::uint16_t>(f, path);
    const auto variant = get_le<std::uint8_t>(f, path);
    if (variant > 1) throw DataError("checkpoint: unknown rotary variant byte");
    cfg.rotary = variant == 0 ? RotaryVariant::vanilla2d : RotaryVariant::sphere;
    const auto flags = get_le<std::uint8_t>(f, path);
    cfg.sre_pass2_only = flags & 1;
    cfg.trained_with_sc = flags & 2;
    cfg.trained_with_semantic = flags & 4;
    cfg.width = int(get_le<std::uint32_t>(f, path));
    cfg.height = int(get_le<std::uint32_t>(f, path));
    (void)get_le<std::uint16_t>(f, path);  // reserved
    cfg.max_cond_tokens = 4 + 8 * cfg.width * cfg.height;  // generous bound; pipeline tightens
    cfg.validate();

    ExtraRecords records;
    while (true) {
        std::uint16_t name_len;
        f.read(reinterpret_cast<char*>(&name_len), 2);
        if (f.eof()) break;
        if (!f) throw DataError("checkpoint: truncated record header in " + path.string());
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto count = get_le<std::uint64_t>(f, path);
        if (count > (1ull << 32)) throw DataError("checkpoint: implausible record size");
        std::vector<float> data(count);
        f.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * sizeof(float)));
        if (!f) throw DataError("checkpoint: truncated record data in " + path.string());
        if (!records.emplace(std::move(name), std::move(data)).second) {
            throw DataError("checkpoint: duplicate record in " + path.string());
        }
    }
    return {cfg, std::move(records)};
}

}  // namespace panotok
