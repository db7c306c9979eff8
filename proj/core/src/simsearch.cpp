#include "embedkit/simsearch.hpp"

#include <algorithm>
#include <cstdio>
#include <queue>
#include <stdexcept>

#include "embedkit/numeric.hpp"
#include "embedkit/parallel.hpp"
#include "embedkit/store.hpp"

namespace embedkit {

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(u.size()) +
                                    " vs " + std::to_string(v.size()) + ")");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero vector");
    return dot64(u, v) / (nu * nv);
}

namespace {

struct Slot {
    double score;
    std::uint32_t row;
};

// Ranking order: higher score first, equal scores by lower corpus row.
inline bool ranks_before(const Slot& a, const Slot& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.row < b.row;
}

}  // namespace

std::vector<NeighborList> top_k(const EmbeddingMatrix& queries, const EmbeddingMatrix& corpus,
                                std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k: k must be positive");
    if (corpus.rows() == 0) throw std::invalid_argument("top_k: empty corpus");
    if (queries.dims != corpus.dims)
        throw std::invalid_argument("top_k: query dims " + std::to_string(queries.dims) +
                                    " != corpus dims " + std::to_string(corpus.dims));

    const EmbeddingMatrix* q = &queries;
    const EmbeddingMatrix* c = &corpus;
    EmbeddingMatrix q_norm, c_norm;
    if (!queries.normalized) {
        q_norm = normalize(queries);
        q = &q_norm;
    }
    if (!corpus.normalized) {
        c_norm = normalize(corpus);
        c = &c_norm;
    }

    const std::size_t keep = std::min(k, c->rows());
    std::vector<NeighborList> results(q->rows());

    parallel_chunks(q->rows(), default_workers(), [&](std::size_t begin, std::size_t end) {
        // top() is the worst kept hit under the ranking order
        const auto worst_on_top = [](const Slot& a, const Slot& b) { return ranks_before(a, b); };
        for (std::size_t qi = begin; qi < end; ++qi) {
            const auto query_row = q->row(qi);
            std::priority_queue<Slot, std::vector<Slot>, decltype(worst_on_top)> heap(worst_on_top);
            for (std::size_t ci = 0; ci < c->rows(); ++ci) {
                const Slot cand{dot64(query_row, c->row(ci)), static_cast<std::uint32_t>(ci)};
                if (heap.size() < keep) {
                    heap.push(cand);
                } else if (ranks_before(cand, heap.top())) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            std::vector<Slot> slots;
            slots.reserve(heap.size());
            while (!heap.empty()) {
                slots.push_back(heap.top());
                heap.pop();
            }
            std::reverse(slots.begin(), slots.end());

            NeighborList& out = results[qi];
            out.query_id = q->ids[qi];
            out.hits.reserve(slots.size());
            for (const Slot& s : slots) out.hits.push_back({c->ids[s.row], s.score});
        }
    });
    return results;
}

void write_run(const std::string& path, std::span<const NeighborList> runs,
               const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    char buf[32];
    for (const auto& run : runs) {
        for (std::size_t r = 0; r < run.hits.size(); ++r) {
            std::snprintf(buf, sizeof(buf), "%.9f", run.hits[r].score);
            out.append(run.query_id).push_back('\t');
            out.append(std::to_string(r + 1)).push_back('\t');
            out.append(run.hits[r].doc_id).push_back('\t');
            out.append(buf).push_back('\n');
        }
    }
    atomic_write_file(path, out);
}

}  // namespace embedkit
