#pragma once

#include <cmath>
#include <string>

#include "embedkit/embedding.hpp"
#include "embedkit/rng.hpp"

namespace benchutil {

inline embedkit::EmbeddingMatrix unit_matrix(std::uint64_t seed, std::size_t n, std::size_t d,
                                             const std::string& prefix) {
    embedkit::Rng rng(seed);
    embedkit::EmbeddingMatrix m;
    m.dims = d;
    m.normalized = true;
    m.ids.reserve(n);
    m.values.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        m.ids.push_back(prefix + std::to_string(i));
        std::vector<double> row(d);
        double norm2 = 0.0;
        for (auto& x : row) {
            x = rng.normal();
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        for (double x : row) m.values.push_back(static_cast<float>(x / norm));
    }
    return m;
}

}  // namespace benchutil
