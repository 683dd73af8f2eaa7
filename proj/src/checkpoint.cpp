#include "slidemil/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "slidemil/errors.hpp"

namespace slidemil {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'M', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ofstream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated checkpoint " + path);
    return v;
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated checkpoint " + path);
    return v;
}

std::string read_string(std::ifstream& in, const std::string& path) {
    const std::uint32_t n = read_u32(in, path);
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw IoError("truncated checkpoint " + path);
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    write_string(out, ckpt.kind);
    write_string(out, ckpt.config.dump());
    write_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& [name, tensor] : ckpt.blobs) {
        write_string(out, name);
        write_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
        for (std::size_t e : tensor.shape()) write_u64(out, e);
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError(path.string() + " is not a checkpoint file");
    const std::uint32_t version = read_u32(in, path.string());
    if (version != kVersion)
        throw ValidationError("checkpoint " + path.string() + " has unsupported version " +
                              std::to_string(version));
    Checkpoint ckpt;
    ckpt.kind = read_string(in, path.string());
    const std::string config_str = read_string(in, path.string());
    ckpt.config = nlohmann::json::parse(config_str, nullptr, false);
    if (ckpt.config.is_discarded())
        throw ValidationError("checkpoint " + path.string() + " has malformed config JSON");
    const std::uint32_t n_blobs = read_u32(in, path.string());
    ckpt.blobs.reserve(n_blobs);
    for (std::uint32_t i = 0; i < n_blobs; ++i) {
        std::string name = read_string(in, path.string());
        const std::uint32_t ndim = read_u32(in, path.string());
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<std::size_t>(read_u64(in, path.string()));
            total *= shape[d];
        }
        std::vector<double> data(total);
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(total * sizeof(double))))
            throw IoError("truncated checkpoint " + path.string());
        ckpt.blobs.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

std::uint64_t config_hash(const nlohmann::json& config) {
    const std::string s = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash_hex(const nlohmann::json& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    return std::string(buf);
}

}  // namespace slidemil
