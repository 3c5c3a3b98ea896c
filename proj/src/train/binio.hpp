#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "core/error.hpp"

// Little byte-level primitives shared by the binary checkpoint containers.
// Native byte order; the files are per-machine artifacts, not interchange.

namespace nmfg {

inline void wr_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void wr_u8(std::ostream& out, uint8_t v) { wr_bytes(out, &v, 1); }
inline void wr_u32(std::ostream& out, uint32_t v) { wr_bytes(out, &v, 4); }
inline void wr_i32(std::ostream& out, int32_t v) { wr_bytes(out, &v, 4); }
inline void wr_i64(std::ostream& out, int64_t v) { wr_bytes(out, &v, 8); }
inline void wr_f64(std::ostream& out, double v) { wr_bytes(out, &v, 8); }

inline void wr_str(std::ostream& out, const std::string& s) {
    wr_u32(out, static_cast<uint32_t>(s.size()));
    wr_bytes(out, s.data(), s.size());
}

inline void rd_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw format_error("truncated file: " + path);
}

inline uint8_t rd_u8(std::istream& in, const std::string& path) {
    uint8_t v;
    rd_bytes(in, &v, 1, path);
    return v;
}
inline uint32_t rd_u32(std::istream& in, const std::string& path) {
    uint32_t v;
    rd_bytes(in, &v, 4, path);
    return v;
}
inline int32_t rd_i32(std::istream& in, const std::string& path) {
    int32_t v;
    rd_bytes(in, &v, 4, path);
    return v;
}
inline int64_t rd_i64(std::istream& in, const std::string& path) {
    int64_t v;
    rd_bytes(in, &v, 8, path);
    return v;
}
inline double rd_f64(std::istream& in, const std::string& path) {
    double v;
    rd_bytes(in, &v, 8, path);
    return v;
}

inline std::string rd_str(std::istream& in, const std::string& path) {
    uint32_t n = rd_u32(in, path);
    if (n > (1u << 20)) throw format_error("unreasonable string length in " + path);
    std::string s(n, '\0');
    rd_bytes(in, s.data(), n, path);
    return s;
}

} // namespace nmfg
