#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gasketlab {

// Characteristic exponents of the gasket.
inline constexpr double kDimension      = 1.5849625007211561815;  // log3/log2
inline constexpr double kWalkDimension  = 2.3219280948873623479;  // log5/log2
inline constexpr double kSpectralDim    = 2.0 * kDimension / kWalkDimension;

inline double dim_d() { return kDimension; }
inline double dim_dw() { return kWalkDimension; }

// Thrown when a requested graph or spectral problem exceeds the size budget.
class capacity_error : public std::runtime_error {
public:
    explicit capacity_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iterative solver fails to converge; carries the residual report.
class solver_error : public std::runtime_error {
public:
    explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on invalid experiment configuration (unknown keys, bad ranges).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

inline std::int64_t ipow3(int k) {
    std::int64_t r = 1;
    for (int i = 0; i < k; ++i) r *= 3;
    return r;
}

inline std::int64_t ipow2(int k) {
    return std::int64_t{1} << k;
}

inline double pow5(int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= 5.0;
    return r;
}

}  // namespace gasketlab
