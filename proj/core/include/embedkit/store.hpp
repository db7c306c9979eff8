#pragma once

#include <string>
#include <vector>

#include "embedkit/embedding.hpp"
#include "embedkit/nli.hpp"

namespace embedkit {

// On-disk formats owned by this module:
//
//   binary embeddings   magic "EMBV", u32 version=1, u32 count, u32 dims,
//                       `count` null-terminated UTF-8 ids, then count*dims
//                       little-endian float32 values, row-major
//   tsv embeddings      id<TAB>space-separated decimal floats
//   relevance (qrels)   query_id<TAB>doc_id<TAB>gain   (gain optional, default 1)
//   listings            listing_id<TAB>doc_id<TAB>position<TAB>gain
//   triplets            triplet_id<TAB>anchor_id<TAB>positive_id<TAB>negative_id
//   scores              sentence_id<TAB>system<TAB>score
//
// Binary files are little-endian regardless of host so a save/load round trip
// is bit-exact across platforms. Loaders report malformed input with the
// 1-based row/line it occurred on.

enum class Format { Binary, Tsv };

// Sniffs the magic bytes; anything that does not start with "EMBV" is TSV.
Format detect_format(const std::string& path);

EmbeddingMatrix load_embeddings(const std::string& path, Format format);
void save_embeddings(const EmbeddingMatrix& m, const std::string& path, Format format);

RelevanceSet load_relevance(const std::string& path);

// Candidate and query rows are resolved by id against the given matrices and
// returned as views; both matrices must outlive the listings.
std::vector<Listing> load_listings(const std::string& path,
                                   const EmbeddingMatrix& queries,
                                   const EmbeddingMatrix& docs);

std::vector<TripletRecord> load_triplet_records(const std::string& path);
TripletSet load_triplets(const std::string& path, const EmbeddingMatrix& embeddings);

std::vector<ScoredTranslation> load_scores(const std::string& path);

// Writes to `path + ".tmp"` then renames, so failed runs never leave a
// partial file behind.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace embedkit
