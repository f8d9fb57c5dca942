#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "model.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace hexst {

// Layout (little-endian):
//   "HEXSTCKP"  u32 version
//   u64 n, n bytes of model config JSON
//   u64 tensor count, then per tensor:
//     u32 n, n bytes of name; u32 rank; u64 dims[rank]; float64 values[prod(dims)]

inline constexpr char kCheckpointMagic[8] = {'H', 'E', 'X', 'S', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ParamSet params;
};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw InputError("checkpoint truncated while reading " + what);
    return v;
}

inline std::string get_string(std::istream& is, std::uint64_t n, const std::string& what) {
    if (n > (1u << 30)) throw InputError("checkpoint: implausible length for " + what);
    std::string s(static_cast<std::size_t>(n), '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw InputError("checkpoint truncated while reading " + what);
    return s;
}

} // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelConfig& cfg, const ParamSet& params) {
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    const std::string cfg_text = to_json(cfg).dump();
    detail::put<std::uint64_t>(os, cfg_text.size());
    os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    detail::put<std::uint64_t>(os, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor& t = params.at(i);
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw InputError("not a checkpoint file");
    const auto version = detail::get<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = detail::get<std::uint64_t>(is, "config length");
    const std::string cfg_text = detail::get_string(is, cfg_len, "config");
    Checkpoint ck;
    try {
        from_json(json::parse(cfg_text), ck.config);
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint config: ") + e.what());
    }
    const auto count = detail::get<std::uint64_t>(is, "tensor count");
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = detail::get<std::uint32_t>(is, "name length");
        std::string name = detail::get_string(is, name_len, "tensor name");
        const auto rank = detail::get<std::uint32_t>(is, "rank");
        if (rank > 8) throw InputError("checkpoint: implausible rank for " + name);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(detail::get<std::uint64_t>(is, "dims")));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw InputError("checkpoint truncated in tensor " + name);
        ck.params.add(name, std::move(t));
    }
    const ParamSet expected = init_params(ck.config, 0);
    if (expected.size() != ck.params.size()) throw ConsistencyError("checkpoint: parameter set does not match its config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (expected.name(i) != ck.params.name(i) || expected.at(i).shape() != ck.params.at(i).shape()) {
            throw ConsistencyError("checkpoint: unexpected tensor " + ck.params.name(i));
        }
    }
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_checkpoint(os, cfg, params);
    if (!os) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    return read_checkpoint(is);
}

} // namespace hexst
