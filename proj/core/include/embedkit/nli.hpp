#pragma once

#include <map>
#include <string>
#include <vector>

#include "embedkit/embedding.hpp"

namespace embedkit {

// One row of a translation-quality score file.
struct ScoredTranslation {
    std::string sentence_id;
    std::string system;
    double score = 0.0;
};

struct FilterStats {
    std::size_t input_count = 0;
    std::size_t output_count = 0;
    double removed_fraction = 0.0;
    double mean_score_before = 0.0;
    double mean_score_after = 0.0;  // NaN when nothing survives
};

// Best-scoring system per sentence; ties go to the lexicographically smallest
// system name. Throws on duplicate (sentence, system) rows.
std::map<std::string, ScoredTranslation> select_best_translation(
    const std::vector<ScoredTranslation>& scores);

struct FilterResult {
    std::vector<std::string> retained;  // sorted by id
    FilterStats stats;
};

// Keeps ids whose score is >= threshold.
FilterResult filter_by_threshold(const std::map<std::string, double>& scores,
                                 double threshold);

enum class ScoreAggregate { Min, Mean };

// Sentence-level ids referenced by one triplet; the glue between score files
// and triplet files.
struct TripletRecord {
    std::string id;
    std::string anchor_id;
    std::string positive_id;
    std::string negative_id;
};

// Per-triplet score from its member sentences' scores. Min is the
// conservative default: one bad translation taints the whole example.
std::map<std::string, double> aggregate_triplet_scores(
    const std::vector<TripletRecord>& records,
    const std::map<std::string, double>& sentence_scores, ScoreAggregate mode);

// Row-aligned subset of `triplets` keeping original order. Every retained id
// must name an existing triplet.
TripletSet materialize_filtered_triplets(const TripletSet& triplets,
                                         const std::vector<std::string>& retained);

// File emitters (atomic: write temp, rename). header_lines are written first,
// each prefixed with "# ".
void write_retained_ids(const std::string& path, const std::vector<std::string>& ids,
                        const std::vector<std::string>& header_lines);
void write_best_systems(const std::string& path,
                        const std::map<std::string, ScoredTranslation>& best,
                        const std::vector<std::string>& header_lines);
void write_filter_stats(const std::string& path, const FilterStats& stats,
                        const std::vector<std::string>& header_lines);

std::vector<std::string> read_retained_ids(const std::string& path);

}  // namespace embedkit
