#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace csdetect::detail {

// 8-byte little-endian scalars, independent of host byte order.
template <class T>
void put_le(std::ostream& out, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    std::array<char, 8> bytes;
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes.data(), 8);
}

template <class T>
T get_le(std::istream& in) {
    static_assert(sizeof(T) == 8);
    std::array<unsigned char, 8> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) throw std::runtime_error("truncated binary file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

}  // namespace csdetect::detail
