// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian scalar readers/writers for the binary formats.
#pragma once

#include <soit/common.hpp>

#include <bit>
#include <filesystem>
#include <istream>
#include <ostream>

namespace soit::binio {

template <typename U> U to_le(U v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            out |= ((v >> (8 * i)) & U(0xFF)) << (8 * (sizeof(U) - 1 - i));
        return out;
    }
}

class Writer {
  public:
    explicit Writer(std::ostream &out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(to_le(v)); }
    void u64(std::uint64_t v) { raw(to_le(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  private:
    template <typename U> void raw(U v) { out_.write(reinterpret_cast<const char *>(&v), sizeof(U)); }
    std::ostream &out_;
};

class Reader {
  public:
    Reader(std::istream &in, const std::filesystem::path &path) : in_(in), path_(path) {}
    std::uint8_t u8() { return raw<std::uint8_t>(); }
    std::uint32_t u32() { return to_le(raw<std::uint32_t>()); }
    std::uint64_t u64() { return to_le(raw<std::uint64_t>()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

  private:
    template <typename U> U raw() {
        U v{};
        in_.read(reinterpret_cast<char *>(&v), sizeof(U));
        if (!in_)
            throw IoError("'" + path_.string() + "': unexpected end of file");
        return v;
    }
    std::istream &in_;
    std::filesystem::path path_;
};

} // namespace soit::binio
