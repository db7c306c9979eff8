#include "embedkit/nli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "embedkit/numeric.hpp"
#include "embedkit/store.hpp"

namespace embedkit {

std::map<std::string, ScoredTranslation> select_best_translation(
    const std::vector<ScoredTranslation>& scores) {
    if (scores.empty()) throw std::invalid_argument("select_best_translation: no scores");

    std::set<std::pair<std::string, std::string>> seen;
    std::map<std::string, ScoredTranslation> best;
    for (const auto& s : scores) {
        if (!seen.emplace(s.sentence_id, s.system).second)
            throw std::invalid_argument("select_best_translation: duplicate row (" +
                                        s.sentence_id + ", " + s.system + ")");
        auto [it, inserted] = best.try_emplace(s.sentence_id, s);
        if (inserted) continue;
        const auto& cur = it->second;
        if (s.score > cur.score || (s.score == cur.score && s.system < cur.system)) it->second = s;
    }
    return best;
}

FilterResult filter_by_threshold(const std::map<std::string, double>& scores, double threshold) {
    if (scores.empty()) throw std::invalid_argument("filter_by_threshold: no scores");

    FilterResult result;
    std::vector<double> before, after;
    before.reserve(scores.size());
    for (const auto& [id, score] : scores) {
        before.push_back(score);
        if (score >= threshold) {
            result.retained.push_back(id);
            after.push_back(score);
        }
    }

    FilterStats& st = result.stats;
    st.input_count = scores.size();
    st.output_count = result.retained.size();
    st.removed_fraction =
        1.0 - static_cast<double>(st.output_count) / static_cast<double>(st.input_count);
    st.mean_score_before = pairwise_mean(before);
    st.mean_score_after =
        after.empty() ? std::numeric_limits<double>::quiet_NaN() : pairwise_mean(after);
    return result;
}

std::map<std::string, double> aggregate_triplet_scores(
    const std::vector<TripletRecord>& records,
    const std::map<std::string, double>& sentence_scores, ScoreAggregate mode) {
    std::map<std::string, double> out;
    for (const auto& rec : records) {
        double acc = mode == ScoreAggregate::Min ? std::numeric_limits<double>::infinity() : 0.0;
        for (const std::string* id : {&rec.anchor_id, &rec.positive_id, &rec.negative_id}) {
            const auto it = sentence_scores.find(*id);
            if (it == sentence_scores.end())
                throw std::invalid_argument("aggregate_triplet_scores: sentence '" + *id +
                                            "' of triplet '" + rec.id + "' has no score");
            if (mode == ScoreAggregate::Min)
                acc = std::min(acc, it->second);
            else
                acc += it->second / 3.0;
        }
        out.emplace(rec.id, acc);
    }
    return out;
}

TripletSet materialize_filtered_triplets(const TripletSet& triplets,
                                         const std::vector<std::string>& retained) {
    std::unordered_set<std::string> keep(retained.begin(), retained.end());
    std::unordered_set<std::string> known(triplets.triplet_ids.begin(),
                                          triplets.triplet_ids.end());
    for (const auto& id : retained)
        if (!known.contains(id))
            throw std::invalid_argument("materialize_filtered_triplets: unknown triplet id '" +
                                        id + "'");

    TripletSet out;
    out.anchors.dims = triplets.anchors.dims;
    out.positives.dims = triplets.positives.dims;
    out.hard_negatives.dims = triplets.hard_negatives.dims;
    out.anchors.normalized = triplets.anchors.normalized;
    out.positives.normalized = triplets.positives.normalized;
    out.hard_negatives.normalized = triplets.hard_negatives.normalized;

    for (std::size_t i = 0; i < triplets.size(); ++i) {
        if (!keep.contains(triplets.triplet_ids[i])) continue;
        out.triplet_ids.push_back(triplets.triplet_ids[i]);
        for (auto [src, dst] : {std::pair{&triplets.anchors, &out.anchors},
                                std::pair{&triplets.positives, &out.positives},
                                std::pair{&triplets.hard_negatives, &out.hard_negatives}}) {
            const auto row = src->row(i);
            dst->ids.push_back(triplets.triplet_ids[i]);
            dst->values.insert(dst->values.end(), row.begin(), row.end());
        }
    }
    return out;
}

void write_retained_ids(const std::string& path, const std::vector<std::string>& ids,
                        const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    for (const auto& id : ids) out.append(id).push_back('\n');
    atomic_write_file(path, out);
}

void write_best_systems(const std::string& path,
                        const std::map<std::string, ScoredTranslation>& best,
                        const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    char buf[32];
    for (const auto& [id, s] : best) {
        std::snprintf(buf, sizeof(buf), "%.9g", s.score);
        out.append(id).push_back('\t');
        out.append(s.system).push_back('\t');
        out.append(buf).push_back('\n');
    }
    atomic_write_file(path, out);
}

void write_filter_stats(const std::string& path, const FilterStats& stats,
                        const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    out.append("# input_count\toutput_count\tremoved_fraction\tmean_before\tmean_after\n");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu\t%zu\t%.9f\t%.9g\t%.9g", stats.input_count,
                  stats.output_count, stats.removed_fraction, stats.mean_score_before,
                  stats.mean_score_after);
    out.append(buf).push_back('\n');
    atomic_write_file(path, out);
}

std::vector<std::string> read_retained_ids(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        ids.push_back(line);
    }
    return ids;
}

}  // namespace embedkit
