#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sgnn::util {

// Little-endian primitives for the binary file formats. Written byte by byte
// so files are identical regardless of host endianness.

template <class T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(value);
    char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    os.write(buf, sizeof(T));
}

inline void write_f32(std::ostream& os, float value) {
    write_le<uint32_t>(os, std::bit_cast<uint32_t>(value));
}

template <class T>
T read_le(std::istream& is) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (!is) throw std::runtime_error("unexpected end of file");
    U u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return static_cast<T>(u);
}

inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<uint32_t>(is)); }

inline void write_magic(std::ostream& os, const std::string& magic) {
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, const std::string& magic, const std::string& what) {
    std::string got(magic.size(), '\0');
    is.read(got.data(), static_cast<std::streamsize>(magic.size()));
    if (!is || got != magic) throw std::runtime_error("bad magic for " + what);
}

}  // namespace sgnn::util
