#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peace/ecg_data.hpp"
#include "peace/tensor.hpp"

namespace peace {

namespace detail {

inline void put_u64(std::string& buf, std::uint64_t v) {
    put_u32(buf, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(buf, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t get_u64(const unsigned char* p) {
    return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

}  // namespace detail

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline void save_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::string buf;
    buf += "PCKP";
    detail::put_u32(buf, 1);
    detail::put_u64(buf, config_hash);
    detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.empty() || name.size() > 0xffff) throw std::invalid_argument("checkpoint: bad tensor name");
        detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (int a = 0; a < t.rank(); ++a) detail::put_u32(buf, static_cast<std::uint32_t>(t.dim(a)));
        for (double v : t.data()) detail::put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) throw std::runtime_error(path.string() + ": truncated checkpoint");
    };
    need(16);
    if (std::string(reinterpret_cast<const char*>(bytes.data()), 4) != "PCKP")
        throw std::runtime_error(path.string() + ": not a checkpoint file");
    pos = 4;
    const std::uint32_t version = detail::get_u32(bytes.data() + pos);
    pos += 4;
    if (version != 1) throw std::runtime_error(path.string() + ": unsupported checkpoint version");
    Checkpoint ck;
    ck.config_hash = detail::get_u64(bytes.data() + pos);
    pos += 8;
    const std::uint32_t count = detail::get_u32(bytes.data() + pos);
    pos += 4;
    ck.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        need(4);
        const std::uint32_t name_len = detail::get_u32(bytes.data() + pos);
        pos += 4;
        need(name_len + 4);
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const std::uint32_t rank = detail::get_u32(bytes.data() + pos);
        pos += 4;
        if (rank > 8) throw std::runtime_error(path.string() + ": implausible tensor rank");
        need(4 * rank);
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t a = 0; a < rank; ++a) {
            const std::uint32_t dim = detail::get_u32(bytes.data() + pos);
            pos += 4;
            shape.push_back(static_cast<i64>(dim));
            numel *= dim;
        }
        need(8 * numel);
        std::vector<double> data(numel);
        for (std::size_t j = 0; j < numel; ++j) {
            data[j] = detail::get_f64(bytes.data() + pos);
            pos += 8;
        }
        ck.tensors.emplace_back(std::move(name), Tensor::from(shape, std::move(data)));
    }
    if (pos != bytes.size()) throw std::runtime_error(path.string() + ": trailing bytes in checkpoint");
    return ck;
}

inline void load_into(std::vector<std::pair<std::string, Tensor>> params, const Checkpoint& ck) {
    if (params.size() != ck.tensors.size())
        throw std::invalid_argument("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, dst] = params[i];
        const auto& [ck_name, src] = ck.tensors[i];
        if (name != ck_name) throw std::invalid_argument("checkpoint: name mismatch at " + name);
        if (dst.shape() != src.shape()) throw std::invalid_argument("checkpoint: shape mismatch at " + name);
        dst.data() = src.data();
    }
}

}  // namespace peace
