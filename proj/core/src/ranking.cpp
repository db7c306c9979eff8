#include "embedkit/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "embedkit/numeric.hpp"
#include "embedkit/store.hpp"

namespace embedkit {

std::vector<std::size_t> rerank_listing(const Listing& listing) {
    if (listing.candidates.empty())
        throw std::invalid_argument("rerank_listing: listing '" + listing.query_id +
                                    "' has no candidates");
    std::vector<double> scores;
    scores.reserve(listing.candidates.size());
    for (const auto& cand : listing.candidates)
        scores.push_back(cosine(listing.query_row, cand.row));

    std::vector<std::size_t> perm(listing.candidates.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return perm;
}

double ndcg(std::span<const double> gains_in_ranked_order, std::optional<std::size_t> truncation) {
    if (gains_in_ranked_order.empty()) throw std::invalid_argument("ndcg: no gains");
    for (double g : gains_in_ranked_order)
        if (!(g >= 0.0)) throw std::invalid_argument("ndcg: negative gain");

    const std::size_t depth =
        truncation ? std::min(*truncation, gains_in_ranked_order.size())
                   : gains_in_ranked_order.size();

    std::vector<double> ideal(gains_in_ranked_order.begin(), gains_in_ranked_order.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double dcg = 0.0, idcg = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        const double discount = std::log2(static_cast<double>(i) + 2.0);
        dcg += gains_in_ranked_order[i] / discount;
        idcg += ideal[i] / discount;
    }
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

MetricReport evaluate_ranking(std::span<const Listing> listings,
                              std::optional<std::size_t> truncation, bool binary_gains) {
    if (listings.empty()) throw std::invalid_argument("evaluate_ranking: no listings");

    MetricReport report;
    report.metric_name = "ndcg";
    report.k = truncation;
    report.per_query.reserve(listings.size());

    std::vector<double> values;
    values.reserve(listings.size());
    for (const auto& listing : listings) {
        const auto perm = rerank_listing(listing);
        std::vector<double> gains;
        gains.reserve(perm.size());
        for (std::size_t idx : perm) {
            const double g = listing.candidates[idx].gain;
            gains.push_back(binary_gains ? (g > 0.0 ? 1.0 : 0.0) : g);
        }
        const double v = ndcg(gains, truncation);
        report.per_query.emplace_back(listing.query_id, v);
        values.push_back(v);
    }
    report.mean = pairwise_mean(values);
    return report;
}

MetricReport recall_at_k(std::span<const NeighborList> runs, const RelevanceSet& rels,
                         std::size_t k) {
    if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
    if (runs.empty()) throw std::invalid_argument("recall_at_k: no runs");

    MetricReport report;
    report.metric_name = "recall";
    report.k = k;
    report.per_query.reserve(runs.size());

    std::vector<double> values;
    values.reserve(runs.size());
    for (const auto& run : runs) {
        const auto it = rels.entries.find(run.query_id);
        if (it == rels.entries.end())
            throw std::invalid_argument("recall_at_k: query '" + run.query_id +
                                        "' has no relevance entries");
        std::unordered_set<std::string_view> relevant;
        for (const auto& [doc, gain] : it->second)
            if (gain > 0.0) relevant.insert(doc);
        if (relevant.empty())
            throw std::invalid_argument("recall_at_k: query '" + run.query_id +
                                        "' has no relevant documents");

        const std::size_t depth = std::min(k, run.hits.size());
        std::size_t found = 0;
        for (std::size_t i = 0; i < depth; ++i)
            if (relevant.contains(run.hits[i].doc_id)) ++found;

        const double v = static_cast<double>(found) / static_cast<double>(relevant.size());
        report.per_query.emplace_back(run.query_id, v);
        values.push_back(v);
    }
    report.mean = pairwise_mean(values);
    return report;
}

namespace {

// Continued fraction for the regularized incomplete beta, modified Lentz.
double ibeta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * ibeta_cf(a, b, x) / a;
    return 1.0 - front * ibeta_cf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_p_two_sided(double t, double dof) {
    if (dof <= 0.0) throw std::invalid_argument("student_t_p_two_sided: dof must be positive");
    if (std::isinf(t)) return 0.0;
    return ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");

    std::vector<double> diffs(n);
    bool all_zero = true;
    for (std::size_t i = 0; i < n; ++i) {
        diffs[i] = a[i] - b[i];
        all_zero &= diffs[i] == 0.0;
    }
    if (all_zero) return {0.0, 1.0};

    const double mean = pairwise_mean(diffs);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (diffs[i] - mean) * (diffs[i] - mean);
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    if (var == 0.0) {
        const double inf = std::numeric_limits<double>::infinity();
        return {mean > 0.0 ? inf : -inf, 0.0};
    }
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    return {t, student_t_p_two_sided(t, static_cast<double>(n - 1))};
}

void write_metric_report(const std::string& path, const MetricReport& report,
                         const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    out.append("# metric: ").append(report.metric_name);
    if (report.k) out.append("@").append(std::to_string(*report.k));
    out.push_back('\n');

    char buf[32];
    for (const auto& [query, value] : report.per_query) {
        std::snprintf(buf, sizeof(buf), "%.9f", value);
        out.append(query).push_back('\t');
        out.append(buf).push_back('\n');
    }
    std::snprintf(buf, sizeof(buf), "%.9f", report.mean);
    out.append("all\t").append(buf).push_back('\n');
    atomic_write_file(path, out);
}

MetricReport read_metric_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);

    MetricReport report;
    bool have_mean = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const std::string prefix = "# metric: ";
            if (line.rfind(prefix, 0) == 0) report.metric_name = line.substr(prefix.size());
            continue;
        }
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 'query_id<TAB>value'");
        const std::string query = line.substr(0, tab);
        double value = 0.0;
        const char* first = line.data() + tab + 1;
        const char* last = line.data() + line.size();
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed value");
        if (query == "all") {
            report.mean = value;
            have_mean = true;
        } else {
            report.per_query.emplace_back(query, value);
        }
    }
    if (report.per_query.empty())
        throw std::runtime_error(path + ": no per-query rows");
    if (!have_mean) {
        std::vector<double> values;
        values.reserve(report.per_query.size());
        for (const auto& [_, v] : report.per_query) values.push_back(v);
        report.mean = pairwise_mean(values);
    }
    return report;
}

void write_significance(const std::string& path, const std::string& label_a,
                        const std::string& label_b, const TTestResult& result,
                        const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g\t%.9g", result.t, result.p);
    out.append(label_a).push_back('\t');
    out.append(label_b).push_back('\t');
    out.append(buf).push_back('\n');
    atomic_write_file(path, out);
}

}  // namespace embedkit
