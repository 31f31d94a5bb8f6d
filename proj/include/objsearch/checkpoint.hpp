#ifndef OBJSEARCH_CHECKPOINT_HPP
#define OBJSEARCH_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "objsearch/error.hpp"
#include "objsearch/nn.hpp"

namespace objsearch {

// Checkpoint layout:
//   8 bytes   magic "OSCKPT\0\0"
//   u32       format version
//   u64       header length N
//   N bytes   JSON header {"kind", "meta", "tensors": [{"name", "rows", "cols"}]}
//   doubles   raw IEEE-754 little-endian values, tensors in header order
inline constexpr char kCheckpointMagic[8] = {'O', 'S', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    nn::ParamStore params;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["kind"] = ckpt.kind;
    header["meta"] = ckpt.meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& t : ckpt.params.tensors())
        header["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ckpt.params.tensors())
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw ParseError(path.string() + " is not a checkpoint file");
    if (version != kCheckpointVersion)
        throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    if (len > (1u << 26)) throw ParseError(path.string() + ": checkpoint header too large");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));

    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        ckpt.kind = header.at("kind").get<std::string>();
        ckpt.meta = header.value("meta", nlohmann::json::object());
        for (const auto& t : header.at("tensors"))
            ckpt.params.add(t.at("name").get<std::string>(), t.at("rows").get<std::size_t>(),
                            t.at("cols").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
    }
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) {
        auto& t = ckpt.params[i];
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!in) throw ParseError(path.string() + ": truncated checkpoint");
    if (auto bad = ckpt.params.first_non_finite(); !bad.empty())
        throw NonFiniteError(path.string() + ": tensor '" + bad + "' holds a non-finite value");
    return ckpt;
}

} // namespace objsearch

#endif // OBJSEARCH_CHECKPOINT_HPP
