#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace embedkit {

// Dot product with 64-bit accumulation. Callers guarantee equal extents.
inline double dot64(std::span<const float> u, std::span<const float> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return acc;
}

inline double dot64(std::span<const double> u, std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
    return acc;
}

inline double l2_norm(std::span<const float> v) { return std::sqrt(dot64(v, v)); }
inline double l2_norm(std::span<const double> v) { return std::sqrt(dot64(v, v)); }

inline double squared_distance(std::span<const float> u, std::span<const float> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
        acc += d * d;
    }
    return acc;
}

// Pairwise (tree) summation. Deterministic for a fixed input order and
// better conditioned than a running sum on long inputs.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 32) {
        double acc = 0.0;
        for (double x : xs) acc += x;
        return acc;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
    return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Streaming log-sum-exp: accumulates log(sum_i e^{x_i}) without materializing
// e^{x_i} for large-magnitude negative exponents. merge() order must be fixed
// by the caller for deterministic results.
struct LogSumExp {
    double max_exponent = -std::numeric_limits<double>::infinity();
    double scaled_sum = 0.0;  // sum of e^{x_i - max_exponent}

    void add(double x) { merge(x, 1.0); }

    // Folds in a partial accumulation (m, s) representing s * e^m.
    void merge(double m, double s) {
        if (s <= 0.0) return;
        if (m > max_exponent) {
            scaled_sum = scaled_sum * std::exp(max_exponent - m) + s;
            max_exponent = m;
        } else {
            scaled_sum += s * std::exp(m - max_exponent);
        }
    }

    bool empty() const { return scaled_sum == 0.0; }
    double log_sum() const { return max_exponent + std::log(scaled_sum); }
};

}  // namespace embedkit
