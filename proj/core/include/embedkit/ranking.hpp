#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "embedkit/embedding.hpp"
#include "embedkit/simsearch.hpp"

namespace embedkit {

struct MetricReport {
    std::string metric_name;
    std::vector<std::pair<std::string, double>> per_query;
    double mean = 0.0;
    std::optional<std::size_t> k;
};

// Candidate indices sorted by cosine(query, candidate) descending; equal
// scores keep the original page order (stable).
std::vector<std::size_t> rerank_listing(const Listing& listing);

// DCG/IDCG with gain_i / log2(i + 1) discounts, both truncated at the same
// depth. All-zero gains score 0 by convention.
double ndcg(std::span<const double> gains_in_ranked_order,
            std::optional<std::size_t> truncation = std::nullopt);

// Per-listing NDCG of the cosine-reranked page, averaged over listings.
// binary_gains collapses click counts to 0/1 before scoring.
MetricReport evaluate_ranking(std::span<const Listing> listings,
                              std::optional<std::size_t> truncation = std::nullopt,
                              bool binary_gains = false);

// Fraction of each query's gain>0 documents found in the top k hits.
MetricReport recall_at_k(std::span<const NeighborList> runs, const RelevanceSet& rels,
                         std::size_t k);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

// Two-sided paired Student t-test on a[i] - b[i] with n-1 degrees of freedom.
// All-zero differences return (0, 1); zero variance with a nonzero mean
// returns (+-inf, 0).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// P(|T| >= |t|) for Student's t with `dof` degrees of freedom, evaluated via
// the regularized incomplete beta function (continued fraction), not a
// normal approximation.
double student_t_p_two_sided(double t, double dof);

// Report files: per-query rows `query_id<TAB>value` followed by an aggregate
// row with query id "all" (trec_eval convention).
void write_metric_report(const std::string& path, const MetricReport& report,
                         const std::vector<std::string>& header_lines);
MetricReport read_metric_report(const std::string& path);

void write_significance(const std::string& path, const std::string& label_a,
                        const std::string& label_b, const TTestResult& result,
                        const std::vector<std::string>& header_lines);

}  // namespace embedkit
