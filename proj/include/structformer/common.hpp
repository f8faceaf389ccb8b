#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace structformer {

#ifdef STRUCTFORMER_REAL64
using real = double;
#else
using real = float;
#endif

// Config/data validation failures. CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Tensor shape mismatches; message names both shapes.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::runtime_error(msg);
    }
}

inline void check_config(bool cond, const std::string& msg) {
    if (!cond) {
        throw ConfigError(msg);
    }
}

inline void check_dims(bool cond, const std::string& msg) {
    if (!cond) {
        throw DimensionError(msg);
    }
}

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <class T>
bool is_finite(T v) {
    return std::isfinite(static_cast<double>(v));
}

}  // namespace structformer
