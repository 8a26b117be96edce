#pragma once

// Internal little-endian binary IO helpers shared by the artifact
// readers/writers. Not part of the public API.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "proxroute/errors.hpp"

namespace proxroute::detail {

static_assert(std::endian::native == std::endian::little,
              "binary artifacts are little-endian");

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

template <typename T>
void put_pod(std::ostream& os, T v) {
    put_bytes(os, &v, sizeof(T));
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_pod(os, static_cast<std::uint32_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is || is.gcount() != static_cast<std::streamsize>(n))
        throw IoError("truncated artifact");
}

template <typename T>
T get_pod(std::istream& is) {
    T v;
    get_bytes(is, &v, sizeof(T));
    return v;
}

inline std::string get_str(std::istream& is) {
    const auto len = get_pod<std::uint32_t>(is);
    if (len > (1u << 20)) throw IoError("corrupt artifact: implausible string length");
    std::string s(len, '\0');
    get_bytes(is, s.data(), s.size());
    return s;
}

}  // namespace proxroute::detail
