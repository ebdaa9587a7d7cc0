#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gem/autodiff/optimizer.hpp"
#include "gem/autodiff/tensor.hpp"
#include "gem/core/error.hpp"

namespace gem::autodiff {

// Parameter checkpoint: "GEMP" magic, u32 version, u64 tensor count, then per
// tensor name, shape, and raw little-endian float64 values.
inline constexpr char kCheckpointMagic[4] = {'G', 'E', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T read_le(std::istream& in) {
    static_assert(std::is_integral_v<T>);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        int c = in.get();
        if (c == EOF) throw ParseError("checkpoint: unexpected end of file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

inline void write_f64_le(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    write_le<std::uint64_t>(out, bits);
}

inline double read_f64_le(std::istream& in) {
    std::uint64_t bits = read_le<std::uint64_t>(in);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

}  // namespace detail

inline void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kCheckpointMagic, 4);
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint64_t>(out, params.count());
    params.for_each([&](const std::string& name, const Tensor& t) {
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::write_le<std::uint64_t>(out, d);
        for (double v : t.values) detail::write_f64_le(out, v);
    });
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline ParameterSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw ParseError("checkpoint '" + path.string() + "': bad magic");
    std::uint32_t version = detail::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint '" + path.string() + "': unsupported version " +
                         std::to_string(version));
    std::uint64_t count = detail::read_le<std::uint64_t>(in);
    ParameterSet params;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t name_len = detail::read_le<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw ParseError("checkpoint: truncated tensor name");
        std::uint32_t ndim = detail::read_le<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(detail::read_le<std::uint64_t>(in));
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.values) v = detail::read_f64_le(in);
        params.create(name, std::move(t));
    }
    return params;
}

}  // namespace gem::autodiff
