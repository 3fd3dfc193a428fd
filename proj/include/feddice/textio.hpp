#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace feddice {

/// Fixed-point decimal, e.g. fmt_fixed(0.5, 3) == "0.500".
inline std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

/// Shortest representation that parses back to the same double.
inline std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace feddice
