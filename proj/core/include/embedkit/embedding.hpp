#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace embedkit {

// Dense row-major float32 matrix with stable, opaque string ids. Matrices are
// immutable after loading and safe to share across concurrent readers.
struct EmbeddingMatrix {
    std::vector<std::string> ids;
    std::size_t dims = 0;
    std::vector<float> values;  // rows() * dims entries
    bool normalized = false;

    std::size_t rows() const { return ids.size(); }

    std::span<const float> row(std::size_t i) const {
        return {values.data() + i * dims, dims};
    }
    std::span<float> row_mut(std::size_t i) { return {values.data() + i * dims, dims}; }
};

// Per-query relevant documents with non-negative gains (clicks or labels).
// query_order preserves file order so downstream reports are reproducible.
struct RelevanceSet {
    std::vector<std::string> query_order;
    std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> entries;
};

// One search session: a query embedding plus the ordered result page with its
// click gains. Rows are views into the matrices they were resolved against.
struct ListingCandidate {
    std::string doc_id;
    std::span<const float> row;
    double gain = 0.0;
};

struct Listing {
    std::string query_id;
    std::span<const float> query_row;
    std::vector<ListingCandidate> candidates;
};

// Row-aligned (anchor, positive, hard-negative) embeddings; row i of each
// matrix belongs to triplet i and all three share triplet_ids as row ids.
struct TripletSet {
    std::vector<std::string> triplet_ids;
    EmbeddingMatrix anchors;
    EmbeddingMatrix positives;
    EmbeddingMatrix hard_negatives;

    std::size_t size() const { return triplet_ids.size(); }
};

// Throws std::invalid_argument naming the first offending row if ids are
// empty/duplicated, any entry is non-finite, the value count is inconsistent,
// or the normalized flag is set while some row is not unit length.
void validate_matrix(const EmbeddingMatrix& m);

enum class ZeroNormPolicy { Error, Skip };

// Returns a copy with every row divided by its L2 norm (accumulated in
// double). Zero-norm rows either raise or are dropped per policy; dropped ids
// are appended to *dropped when given.
EmbeddingMatrix normalize(const EmbeddingMatrix& m,
                          ZeroNormPolicy policy = ZeroNormPolicy::Error,
                          std::vector<std::string>* dropped = nullptr);

// id -> row index for resolving sidecar files against a matrix.
std::unordered_map<std::string, std::size_t> build_id_index(const EmbeddingMatrix& m);

}  // namespace embedkit
