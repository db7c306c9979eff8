#pragma once

#include <span>
#include <string>
#include <vector>

#include "embedkit/embedding.hpp"

namespace embedkit {

struct Neighbor {
    std::string doc_id;
    double score = 0.0;  // cosine, in [-1, 1]
};

// Hits sorted by score descending; ties broken by ascending corpus row index.
struct NeighborList {
    std::string query_id;
    std::vector<Neighbor> hits;
};

// cos(u, v) = dot(u,v) / (|u||v|), accumulated in double.
// Throws on dimension mismatch or a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);

// Exact brute-force top-k by cosine over the full corpus. Inputs are
// normalized internally when their flag is unset (zero rows raise). Each
// query keeps a bounded k-slot heap over the streamed corpus, so memory is
// O(k) per query. Queries are partitioned across workers; every query is
// scored by exactly one worker in corpus order, which makes the result
// independent of the worker count.
std::vector<NeighborList> top_k(const EmbeddingMatrix& queries,
                                const EmbeddingMatrix& corpus, std::size_t k);

// Run file: query_id<TAB>rank<TAB>doc_id<TAB>score with 9 decimal digits.
void write_run(const std::string& path, std::span<const NeighborList> runs,
               const std::vector<std::string>& header_lines);

}  // namespace embedkit
