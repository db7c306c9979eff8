#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "embedkit/embedding.hpp"

namespace embedkit {

struct DiagReport {
    double align = 0.0;    // >= 0
    double uniform = 0.0;  // <= 0
    double alpha = 2.0;
    double t = 2.0;
    std::size_t n_pos_pairs = 0;
    std::size_t n_data_points = 0;
    std::size_t batch_size = 0;
};

using RowPair = std::pair<std::span<const float>, std::span<const float>>;

// Mean ||x - y||^alpha over positive pairs; rows must be unit length.
double alignment(std::span<const RowPair> pairs, double alpha);

// log E[e^{-t ||x - y||^2}] over all distinct ordered pairs within each
// batch of a seeded shuffle. Per-batch sums are combined in batch-index
// order through a streaming log-sum-exp weighted by pair counts: at 300K+
// points the raw e^{-t d^2} terms underflow long before the mean does.
// batch_size >= n collapses to the exact all-pairs estimator.
double uniformity(const EmbeddingMatrix& points, double t, std::size_t batch_size,
                  std::uint64_t seed);

struct DiagOptions {
    double alpha = 2.0;
    double t = 2.0;
    std::size_t batch_size = 1024;
    std::uint64_t seed = 0;
};

// Alignment over (query, clicked-doc) pairs with gain > 0, uniformity over
// the union of the referenced query and doc points (first-appearance order,
// no vector deduplication). Inputs are normalized internally when needed.
DiagReport diagnose(const EmbeddingMatrix& query_emb, const EmbeddingMatrix& doc_emb,
                    const RelevanceSet& positives, const DiagOptions& options);

// One appendable scatter row: label<TAB>align<TAB>uniform[<TAB>recall].
void write_diag_report(const std::string& path, const std::string& label,
                       const DiagReport& report, std::optional<double> recall,
                       const std::vector<std::string>& header_lines);

}  // namespace embedkit
