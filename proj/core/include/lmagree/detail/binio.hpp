// Little-endian stream readers/writers used by the checkpoint and encoded
// corpus formats. Byte-wise, so the layout is identical on any host.

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lmagree::detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    write_bytes(out, b, 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    write_bytes(out, b, 8);
}

inline void write_i32_le(std::ostream& out, std::int32_t v) {
    write_u32_le(out, static_cast<std::uint32_t>(v));
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, sizeof(bits));
    write_u64_le(out, bits);
}

inline void read_exact(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw std::runtime_error(std::string("truncated file while reading ") + what);
    }
}

inline std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    read_exact(in, b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
    unsigned char b[8];
    read_exact(in, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::int32_t read_i32_le(std::istream& in, const char* what) {
    return static_cast<std::int32_t>(read_u32_le(in, what));
}

inline double read_f64_le(std::istream& in, const char* what) {
    const std::uint64_t bits = read_u64_le(in, what);
    double v;
    __builtin_memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace lmagree::detail
