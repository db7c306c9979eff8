#include "embedkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "embedkit/numeric.hpp"
#include "embedkit/parallel.hpp"
#include "embedkit/rng.hpp"
#include "embedkit/store.hpp"

namespace embedkit {

namespace {

void require_unit(std::span<const float> row, const char* where) {
    // loose gate: catches un-normalized inputs, not float32 rounding
    const double n = l2_norm(row);
    if (std::fabs(n - 1.0) > 1e-3)
        throw std::invalid_argument(std::string(where) + ": rows must be unit-normalized (norm " +
                                    std::to_string(n) + ")");
}

}  // namespace

double alignment(std::span<const RowPair> pairs, double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("alignment: alpha must be positive");
    if (pairs.empty()) throw std::invalid_argument("alignment: no pairs");

    std::vector<double> terms;
    terms.reserve(pairs.size());
    for (const auto& [x, y] : pairs) {
        if (x.size() != y.size()) throw std::invalid_argument("alignment: dimension mismatch");
        require_unit(x, "alignment");
        require_unit(y, "alignment");
        const double d2 = squared_distance(x, y);
        terms.push_back(alpha == 2.0 ? d2 : std::pow(d2, 0.5 * alpha));
    }
    return pairwise_mean(terms);
}

double uniformity(const EmbeddingMatrix& points, double t, std::size_t batch_size,
                  std::uint64_t seed) {
    if (t <= 0.0) throw std::invalid_argument("uniformity: t must be positive");
    if (points.rows() < 2) throw std::invalid_argument("uniformity: need at least 2 points");
    if (batch_size < 2) throw std::invalid_argument("uniformity: batch_size must be >= 2");
    for (std::size_t i = 0; i < points.rows(); ++i) require_unit(points.row(i), "uniformity");

    const std::size_t n = points.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n_batches = (n + batch_size - 1) / batch_size;

    // Per-batch partial log-sum-exp over e^{-t d^2}; every unordered pair in
    // a batch stands for two ordered ones, hence weight 2.
    struct Partial {
        double max_exp = -std::numeric_limits<double>::infinity();
        double scaled = 0.0;
        std::uint64_t pairs = 0;
    };
    std::vector<Partial> partials(n_batches);

    parallel_chunks(n_batches, default_workers(), [&](std::size_t bfirst, std::size_t blast) {
        for (std::size_t b = bfirst; b < blast; ++b) {
            const std::size_t begin = b * batch_size;
            const std::size_t end = std::min(n, begin + batch_size);
            const std::size_t m = end - begin;
            if (m < 2) continue;

            Partial& part = partials[b];
            LogSumExp acc;
            for (std::size_t i = begin; i < end; ++i) {
                const auto xi = points.row(order[i]);
                for (std::size_t j = i + 1; j < end; ++j) {
                    acc.merge(-t * squared_distance(xi, points.row(order[j])), 2.0);
                }
            }
            part.max_exp = acc.max_exponent;
            part.scaled = acc.scaled_sum;
            part.pairs = static_cast<std::uint64_t>(m) * (m - 1);
        }
    });

    LogSumExp total;
    std::uint64_t total_pairs = 0;
    for (const auto& part : partials) {  // fixed order: deterministic reduction
        if (part.pairs == 0) continue;
        total.merge(part.max_exp, part.scaled);
        total_pairs += part.pairs;
    }
    if (total_pairs == 0)
        throw std::invalid_argument("uniformity: no within-batch pairs (batch layout degenerate)");
    return total.log_sum() - std::log(static_cast<double>(total_pairs));
}

DiagReport diagnose(const EmbeddingMatrix& query_emb, const EmbeddingMatrix& doc_emb,
                    const RelevanceSet& positives, const DiagOptions& options) {
    const EmbeddingMatrix* queries = &query_emb;
    const EmbeddingMatrix* docs = &doc_emb;
    EmbeddingMatrix qn, dn;
    if (!query_emb.normalized) {
        qn = normalize(query_emb);
        queries = &qn;
    }
    if (!doc_emb.normalized) {
        dn = normalize(doc_emb);
        docs = &dn;
    }
    if (queries->dims != docs->dims)
        throw std::invalid_argument("diagnose: query dims != doc dims");

    const auto query_index = build_id_index(*queries);
    const auto doc_index = build_id_index(*docs);

    std::vector<RowPair> pairs;
    EmbeddingMatrix cloud;
    cloud.dims = queries->dims;
    cloud.normalized = true;
    std::unordered_set<std::string> seen_queries, seen_docs;

    for (const auto& q : positives.query_order) {
        const auto qit = query_index.find(q);
        if (qit == query_index.end())
            throw std::invalid_argument("diagnose: query id '" + q +
                                        "' not found in query embeddings");
        for (const auto& [doc, gain] : positives.entries.at(q)) {
            if (gain <= 0.0) continue;
            const auto dit = doc_index.find(doc);
            if (dit == doc_index.end())
                throw std::invalid_argument("diagnose: doc id '" + doc +
                                            "' not found in doc embeddings");
            pairs.emplace_back(queries->row(qit->second), docs->row(dit->second));

            if (seen_queries.insert(q).second) {
                cloud.ids.push_back("q:" + q);
                const auto row = queries->row(qit->second);
                cloud.values.insert(cloud.values.end(), row.begin(), row.end());
            }
            if (seen_docs.insert(doc).second) {
                cloud.ids.push_back("d:" + doc);
                const auto row = docs->row(dit->second);
                cloud.values.insert(cloud.values.end(), row.begin(), row.end());
            }
        }
    }
    if (pairs.empty()) throw std::invalid_argument("diagnose: no positive pairs");

    DiagReport report;
    report.alpha = options.alpha;
    report.t = options.t;
    report.batch_size = options.batch_size;
    report.n_pos_pairs = pairs.size();
    report.n_data_points = cloud.rows();
    report.align = alignment(pairs, options.alpha);
    report.uniform = uniformity(cloud, options.t, options.batch_size, options.seed);
    return report;
}

void write_diag_report(const std::string& path, const std::string& label,
                       const DiagReport& report, std::optional<double> recall,
                       const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    char buf[96];
    out.append(label);
    std::snprintf(buf, sizeof(buf), "\t%.9f\t%.9f", report.align, report.uniform);
    out.append(buf);
    if (recall) {
        std::snprintf(buf, sizeof(buf), "\t%.9f", *recall);
        out.append(buf);
    }
    out.push_back('\n');
    atomic_write_file(path, out);
}

}  // namespace embedkit
