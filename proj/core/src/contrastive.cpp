#include "embedkit/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "embedkit/numeric.hpp"
#include "embedkit/rng.hpp"
#include "embedkit/store.hpp"

namespace embedkit {

ProjectionHead ProjectionHead::identity(std::size_t d) {
    ProjectionHead head;
    head.d_out = head.d_in = d;
    head.weight.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) head.weight[i * d + i] = 1.0;
    return head;
}

std::vector<double> ProjectionHead::apply(std::span<const float> x) const {
    if (x.size() != d_in)
        throw std::invalid_argument("projection head: input dims " + std::to_string(x.size()) +
                                    " != d_in " + std::to_string(d_in));
    std::vector<double> out(d_out, 0.0);
    for (std::size_t i = 0; i < d_out; ++i) {
        const double* w = weight.data() + i * d_in;
        double acc = 0.0;
        for (std::size_t j = 0; j < d_in; ++j) acc += w[j] * static_cast<double>(x[j]);
        out[i] = acc;
    }
    if (bias)
        for (std::size_t i = 0; i < d_out; ++i) out[i] += (*bias)[i];
    return out;
}

namespace {

// Row-major double matrix used for projected batches.
struct Mat {
    std::size_t n = 0, d = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t n_, std::size_t d_) : n(n_), d(d_), v(n_ * d_, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {v.data() + i * d, d}; }
    std::span<double> row_mut(std::size_t i) { return {v.data() + i * d, d}; }
};

using RowRefs = std::vector<std::span<const float>>;

RowRefs all_rows(const EmbeddingMatrix& m) {
    RowRefs rows;
    rows.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(m.row(i));
    return rows;
}

Mat project(const RowRefs& rows, const ProjectionHead& head) {
    Mat out(rows.size(), head.d_out);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto h = head.apply(rows[i]);
        std::copy(h.begin(), h.end(), out.row_mut(i).begin());
    }
    return out;
}

Mat to_mat(const RowRefs& rows, std::size_t dims) {
    Mat out(rows.size(), dims);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        for (std::size_t j = 0; j < dims; ++j) out.v[i * dims + j] = r[j];
    }
    return out;
}

// Unit-normalizes rows in place, returning the original norms.
std::vector<double> unit_rows(Mat& m, const char* who) {
    std::vector<double> norms(m.n);
    for (std::size_t i = 0; i < m.n; ++i) {
        const double norm = l2_norm(m.row(i));
        if (norm == 0.0)
            throw std::invalid_argument(std::string("contrastive: zero-norm ") + who + " row " +
                                        std::to_string(i + 1));
        if (!std::isfinite(norm))
            throw std::invalid_argument(std::string("contrastive: non-finite ") + who + " row " +
                                        std::to_string(i + 1));
        norms[i] = norm;
        for (double& x : m.row_mut(i)) x /= norm;
    }
    return norms;
}

struct SoftmaxState {
    std::size_t n = 0;
    Mat sim_pos;           // cosine(anchor_i, positive_j)
    Mat sim_neg;           // cosine(anchor_i, negative_j), n x 0 when unused
    Mat prob_pos;          // softmax over row i of [sim_pos/tau | sim_neg/tau]
    Mat prob_neg;
    LossBreakdown loss;
    bool has_negatives = false;
};

// Shared forward pass: cosine tables, row-max-shifted softmax, per-example loss.
SoftmaxState forward(const Mat& anchors, const Mat& positives, const Mat* negatives, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive: tau must be positive");
    const std::size_t n = anchors.n;

    SoftmaxState st;
    st.n = n;
    st.has_negatives = negatives != nullptr;
    st.sim_pos = Mat(n, n);
    st.prob_pos = Mat(n, n);
    if (st.has_negatives) {
        st.sim_neg = Mat(n, n);
        st.prob_neg = Mat(n, n);
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            st.sim_pos.v[i * n + j] = dot64(anchors.row(i), positives.row(j));
            if (st.has_negatives) st.sim_neg.v[i * n + j] = dot64(anchors.row(i), negatives->row(j));
        }
    }

    st.loss.per_example.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row_max = std::max(row_max, st.sim_pos.v[i * n + j] / tau);
            if (st.has_negatives) row_max = std::max(row_max, st.sim_neg.v[i * n + j] / tau);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            st.prob_pos.v[i * n + j] = std::exp(st.sim_pos.v[i * n + j] / tau - row_max);
            denom += st.prob_pos.v[i * n + j];
            if (st.has_negatives) {
                st.prob_neg.v[i * n + j] = std::exp(st.sim_neg.v[i * n + j] / tau - row_max);
                denom += st.prob_neg.v[i * n + j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            st.prob_pos.v[i * n + j] /= denom;
            if (st.has_negatives) st.prob_neg.v[i * n + j] /= denom;
        }
        // -log softmax of the diagonal entry
        st.loss.per_example[i] = -(st.sim_pos.v[i * n + i] / tau - row_max) + std::log(denom);
    }
    st.loss.total = pairwise_mean(st.loss.per_example);
    return st;
}

LossBreakdown loss_from_rows(const RowRefs& a, const RowRefs& p, const RowRefs* h, double tau) {
    if (a.empty()) throw std::invalid_argument("contrastive: empty batch");
    if (a.size() != p.size() || (h && h->size() != a.size()))
        throw std::invalid_argument("contrastive: anchors/positives/negatives must be row-aligned");
    const std::size_t dims = a.front().size();

    Mat am = to_mat(a, dims), pm = to_mat(p, dims);
    unit_rows(am, "anchor");
    unit_rows(pm, "positive");
    Mat nm;
    if (h) {
        nm = to_mat(*h, dims);
        unit_rows(nm, "negative");
    }
    return forward(am, pm, h ? &nm : nullptr, tau).loss;
}

// d cos(a, c)/d a = (c_hat - cos * a_hat) / |a|; coef tables fold the softmax
// derivative (prob - indicator on the diagonal) / (N * tau).
LossAndGrad grad_from_rows(const RowRefs& x, const RowRefs& y, const RowRefs* z, double tau,
                           const ProjectionHead& head) {
    if (x.empty()) throw std::invalid_argument("contrastive: empty batch");
    if (x.size() != y.size() || (z && z->size() != x.size()))
        throw std::invalid_argument("contrastive: anchors/positives/negatives must be row-aligned");
    const std::size_t n = x.size();

    Mat hm = project(x, head);
    Mat qm = project(y, head);
    const std::vector<double> hn = unit_rows(hm, "anchor");
    const std::vector<double> qn = unit_rows(qm, "positive");
    Mat rm;
    std::vector<double> rn;
    if (z) {
        rm = project(*z, head);
        rn = unit_rows(rm, "negative");
    }

    SoftmaxState st = forward(hm, qm, z ? &rm : nullptr, tau);

    const std::size_t dout = head.d_out;
    const double scale = 1.0 / (static_cast<double>(n) * tau);

    Mat g_h(n, dout), g_q(n, dout), g_r(z ? n : 0, dout);

    for (std::size_t i = 0; i < n; ++i) {
        auto gh = g_h.row_mut(i);
        double along_anchor = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double cs = scale * (st.prob_pos.v[i * n + j] - (i == j ? 1.0 : 0.0));
            const auto qhat = qm.row(j);
            for (std::size_t d = 0; d < dout; ++d) gh[d] += cs * qhat[d];
            along_anchor += cs * st.sim_pos.v[i * n + j];
            if (z) {
                const double cu = scale * st.prob_neg.v[i * n + j];
                const auto rhat = rm.row(j);
                for (std::size_t d = 0; d < dout; ++d) gh[d] += cu * rhat[d];
                along_anchor += cu * st.sim_neg.v[i * n + j];
            }
        }
        const auto hhat = hm.row(i);
        for (std::size_t d = 0; d < dout; ++d) gh[d] = (gh[d] - along_anchor * hhat[d]) / hn[i];
    }

    for (std::size_t j = 0; j < n; ++j) {
        auto gq = g_q.row_mut(j);
        double along_pos = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double cs = scale * (st.prob_pos.v[i * n + j] - (i == j ? 1.0 : 0.0));
            const auto hhat = hm.row(i);
            for (std::size_t d = 0; d < dout; ++d) gq[d] += cs * hhat[d];
            along_pos += cs * st.sim_pos.v[i * n + j];
        }
        const auto qhat = qm.row(j);
        for (std::size_t d = 0; d < dout; ++d) gq[d] = (gq[d] - along_pos * qhat[d]) / qn[j];
    }

    if (z) {
        for (std::size_t j = 0; j < n; ++j) {
            auto gr = g_r.row_mut(j);
            double along_neg = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double cu = scale * st.prob_neg.v[i * n + j];
                const auto hhat = hm.row(i);
                for (std::size_t d = 0; d < dout; ++d) gr[d] += cu * hhat[d];
                along_neg += cu * st.sim_neg.v[i * n + j];
            }
            const auto rhat = rm.row(j);
            for (std::size_t d = 0; d < dout; ++d) gr[d] = (gr[d] - along_neg * rhat[d]) / rn[j];
        }
    }

    // Chain rule through the affine map: dL/dW = sum over rows of g ⊗ input.
    LossAndGrad out;
    out.loss = std::move(st.loss);
    out.grad.weight.assign(head.weight.size(), 0.0);
    if (head.bias) out.grad.bias.emplace(head.d_out, 0.0);

    auto accumulate = [&](const Mat& g, const RowRefs& inputs) {
        for (std::size_t i = 0; i < g.n; ++i) {
            const auto grow = g.row(i);
            const auto input = inputs[i];
            for (std::size_t d = 0; d < dout; ++d) {
                double* wrow = out.grad.weight.data() + d * head.d_in;
                const double gd = grow[d];
                if (gd == 0.0) continue;
                for (std::size_t j = 0; j < head.d_in; ++j)
                    wrow[j] += gd * static_cast<double>(input[j]);
            }
            if (out.grad.bias)
                for (std::size_t d = 0; d < dout; ++d) (*out.grad.bias)[d] += grow[d];
        }
    };
    accumulate(g_h, x);
    accumulate(g_q, y);
    if (z) accumulate(g_r, *z);
    return out;
}

}  // namespace

LossBreakdown contrastive_loss(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                               const EmbeddingMatrix* hard_negatives, double tau) {
    const RowRefs a = all_rows(anchors), p = all_rows(positives);
    if (anchors.dims != positives.dims ||
        (hard_negatives && hard_negatives->dims != anchors.dims))
        throw std::invalid_argument("contrastive: dimension mismatch");
    if (hard_negatives) {
        const RowRefs h = all_rows(*hard_negatives);
        return loss_from_rows(a, p, &h, tau);
    }
    return loss_from_rows(a, p, nullptr, tau);
}

LossAndGrad contrastive_loss_and_grad(const EmbeddingMatrix& anchors,
                                      const EmbeddingMatrix& positives,
                                      const EmbeddingMatrix* hard_negatives, double tau,
                                      const ProjectionHead& head) {
    if (anchors.dims != head.d_in)
        throw std::invalid_argument("contrastive: input dims != head d_in");
    if (anchors.dims != positives.dims ||
        (hard_negatives && hard_negatives->dims != anchors.dims))
        throw std::invalid_argument("contrastive: dimension mismatch");
    const RowRefs a = all_rows(anchors), p = all_rows(positives);
    if (hard_negatives) {
        const RowRefs h = all_rows(*hard_negatives);
        return grad_from_rows(a, p, &h, tau, head);
    }
    return grad_from_rows(a, p, nullptr, tau, head);
}

HeadGradient contrastive_grad(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                              const EmbeddingMatrix* hard_negatives, double tau,
                              const ProjectionHead& head) {
    return contrastive_loss_and_grad(anchors, positives, hard_negatives, tau, head).grad;
}

TrainResult train_head(const TripletSet& triplets, const TrainConfig& config,
                       const EvalHook& hook) {
    const std::size_t n = triplets.size();
    if (n == 0) throw std::invalid_argument("train_head: empty triplet set");
    if (config.tau <= 0.0) throw std::invalid_argument("train_head: tau must be positive");
    if (config.learning_rate <= 0.0)
        throw std::invalid_argument("train_head: learning_rate must be positive");
    if (config.batch_size < 2) throw std::invalid_argument("train_head: batch_size must be >= 2");
    if (config.batch_size > n)
        throw std::invalid_argument("train_head: batch_size " + std::to_string(config.batch_size) +
                                    " exceeds triplet count " + std::to_string(n));

    const std::size_t d_in = triplets.anchors.dims;
    const std::size_t d_out = config.d_out == 0 ? d_in : config.d_out;

    Rng rng(config.seed);
    ProjectionHead head;
    if (d_out == d_in) {
        head = ProjectionHead::identity(d_in);
    } else {
        head.d_out = d_out;
        head.d_in = d_in;
        head.weight.resize(d_out * d_in);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (double& w : head.weight) w = rng.uniform(-bound, bound);
    }

    TrainResult result;
    result.epoch_loss.reserve(config.epochs);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        std::vector<double> epoch_examples;
        epoch_examples.reserve(n);

        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            RowRefs a, p, h;
            a.reserve(end - begin);
            p.reserve(end - begin);
            h.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                a.push_back(triplets.anchors.row(order[i]));
                p.push_back(triplets.positives.row(order[i]));
                if (config.use_hard_negatives) h.push_back(triplets.hard_negatives.row(order[i]));
            }
            LossAndGrad step =
                grad_from_rows(a, p, config.use_hard_negatives ? &h : nullptr, config.tau, head);
            if (!std::isfinite(step.loss.total))
                throw std::runtime_error("train_head: non-finite loss at epoch " +
                                         std::to_string(epoch + 1) + ", batch starting at " +
                                         std::to_string(begin));
            for (std::size_t i = 0; i < head.weight.size(); ++i)
                head.weight[i] -= config.learning_rate * step.grad.weight[i];
            epoch_examples.insert(epoch_examples.end(), step.loss.per_example.begin(),
                                  step.loss.per_example.end());
        }

        const double mean_loss = pairwise_mean(epoch_examples);
        result.epoch_loss.push_back(mean_loss);
        if (hook) hook(epoch, mean_loss, head);
    }

    result.head = std::move(head);
    return result;
}

EmbeddingMatrix apply_head(const EmbeddingMatrix& m, const ProjectionHead& head) {
    if (m.dims != head.d_in)
        throw std::invalid_argument("apply_head: matrix dims " + std::to_string(m.dims) +
                                    " != head d_in " + std::to_string(head.d_in));
    EmbeddingMatrix out;
    out.ids = m.ids;
    out.dims = head.d_out;
    out.normalized = false;
    out.values.reserve(m.rows() * head.d_out);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto mapped = head.apply(m.row(i));
        for (double v : mapped) out.values.push_back(static_cast<float>(v));
    }
    return out;
}

void save_head(const ProjectionHead& head, const std::string& path) {
    if (head.bias)
        throw std::invalid_argument("save_head: heads with a bias are not persistable");
    EmbeddingMatrix m;
    m.dims = head.d_in;
    m.ids.reserve(head.d_out);
    m.values.reserve(head.weight.size());
    for (std::size_t i = 0; i < head.d_out; ++i) m.ids.push_back("w" + std::to_string(i));
    for (double w : head.weight) m.values.push_back(static_cast<float>(w));
    save_embeddings(m, path, Format::Binary);
}

ProjectionHead load_head(const std::string& path) {
    const EmbeddingMatrix m = load_embeddings(path, Format::Binary);
    if (m.rows() == 0) throw std::runtime_error("load_head: empty weight matrix in " + path);
    ProjectionHead head;
    head.d_out = m.rows();
    head.d_in = m.dims;
    head.weight.assign(m.values.begin(), m.values.end());
    return head;
}

void write_head_meta(const std::string& path, const TrainConfig& config,
                     std::span<const double> epoch_loss,
                     const std::vector<std::string>& header_lines) {
    std::string out;
    for (const auto& h : header_lines) out.append("# ").append(h).push_back('\n');
    char buf[64];
    auto kv = [&](const char* key, const std::string& value) {
        out.append(key).push_back('\t');
        out.append(value).push_back('\n');
    };
    std::snprintf(buf, sizeof(buf), "%.17g", config.tau);
    kv("tau", buf);
    std::snprintf(buf, sizeof(buf), "%.17g", config.learning_rate);
    kv("learning_rate", buf);
    kv("epochs", std::to_string(config.epochs));
    kv("batch_size", std::to_string(config.batch_size));
    kv("seed", std::to_string(config.seed));
    kv("use_hard_negatives", config.use_hard_negatives ? "1" : "0");
    kv("d_out", std::to_string(config.d_out));
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", epoch_loss[i]);
        out.append("epoch_loss\t").append(std::to_string(i + 1)).push_back('\t');
        out.append(buf).push_back('\n');
    }
    atomic_write_file(path, out);
}

}  // namespace embedkit
