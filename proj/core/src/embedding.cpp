#include "embedkit/embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "embedkit/numeric.hpp"

namespace embedkit {

void validate_matrix(const EmbeddingMatrix& m) {
    if (m.dims == 0) throw std::invalid_argument("embedding matrix: dims must be positive");
    if (m.values.size() != m.rows() * m.dims)
        throw std::invalid_argument("embedding matrix: value count does not match rows*dims");

    std::unordered_set<std::string> seen;
    seen.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (m.ids[i].empty())
            throw std::invalid_argument("embedding matrix: empty id at row " + std::to_string(i + 1));
        if (!seen.insert(m.ids[i]).second)
            throw std::invalid_argument("embedding matrix: duplicate id '" + m.ids[i] +
                                        "' at row " + std::to_string(i + 1));
        for (float v : m.row(i)) {
            if (!std::isfinite(v))
                throw std::invalid_argument("embedding matrix: non-finite value at row " +
                                            std::to_string(i + 1) + " (id '" + m.ids[i] + "')");
        }
        if (m.normalized) {
            const double n = l2_norm(m.row(i));
            if (std::fabs(n - 1.0) > 1e-5)
                throw std::invalid_argument("embedding matrix: row " + std::to_string(i + 1) +
                                            " (id '" + m.ids[i] +
                                            "') marked normalized but has norm " + std::to_string(n));
        }
    }
}

EmbeddingMatrix normalize(const EmbeddingMatrix& m, ZeroNormPolicy policy,
                          std::vector<std::string>* dropped) {
    EmbeddingMatrix out;
    out.dims = m.dims;
    out.normalized = true;
    out.ids.reserve(m.rows());
    out.values.reserve(m.values.size());

    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        const double norm = l2_norm(row);
        if (norm == 0.0) {
            if (policy == ZeroNormPolicy::Error)
                throw std::invalid_argument("normalize: zero-norm row '" + m.ids[i] + "' (row " +
                                            std::to_string(i + 1) + ")");
            if (dropped) dropped->push_back(m.ids[i]);
            continue;
        }
        out.ids.push_back(m.ids[i]);
        for (float v : row) out.values.push_back(static_cast<float>(static_cast<double>(v) / norm));
    }
    return out;
}

std::unordered_map<std::string, std::size_t> build_id_index(const EmbeddingMatrix& m) {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) index.emplace(m.ids[i], i);
    return index;
}

}  // namespace embedkit
