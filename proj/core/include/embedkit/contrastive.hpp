#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embedkit/embedding.hpp"

namespace embedkit {

// Trainable affine map applied on top of frozen embeddings. Weights are kept
// in double; persisted files store float32 (the shared binary matrix format).
struct ProjectionHead {
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    std::vector<double> weight;  // d_out * d_in, row-major
    std::optional<std::vector<double>> bias;

    std::span<const double> weight_row(std::size_t i) const {
        return {weight.data() + i * d_in, d_in};
    }

    static ProjectionHead identity(std::size_t d);

    std::vector<double> apply(std::span<const float> x) const;
};

struct TrainConfig {
    double tau = 0.05;
    double learning_rate = 0.1;
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    bool use_hard_negatives = true;
    std::size_t d_out = 0;  // 0 selects d_in (identity-initialized)
};

struct LossBreakdown {
    double total = 0.0;  // mean of per_example
    std::vector<double> per_example;
};

struct HeadGradient {
    std::vector<double> weight;
    std::optional<std::vector<double>> bias;
};

// Softmax-over-cosines objective: each anchor's positive competes against
// every in-batch positive and, when given, every in-batch hard negative.
// Row-wise max subtraction keeps the exponentials in range at small tau.
// Anchors/positives/negatives are row-aligned; rows need not be unit length
// (cosine normalizes), but zero rows raise.
LossBreakdown contrastive_loss(const EmbeddingMatrix& anchors,
                               const EmbeddingMatrix& positives,
                               const EmbeddingMatrix* hard_negatives, double tau);

struct LossAndGrad {
    LossBreakdown loss;
    HeadGradient grad;
};

// Loss of the batch mapped through `head`, plus the exact analytic gradient
// of the mean loss with respect to the head parameters.
LossAndGrad contrastive_loss_and_grad(const EmbeddingMatrix& anchors,
                                      const EmbeddingMatrix& positives,
                                      const EmbeddingMatrix* hard_negatives, double tau,
                                      const ProjectionHead& head);

HeadGradient contrastive_grad(const EmbeddingMatrix& anchors,
                              const EmbeddingMatrix& positives,
                              const EmbeddingMatrix* hard_negatives, double tau,
                              const ProjectionHead& head);

struct TrainResult {
    ProjectionHead head;
    std::vector<double> epoch_loss;  // mean per-example loss per epoch
};

using EvalHook = std::function<void(std::size_t epoch, double mean_loss,
                                    const ProjectionHead& head)>;

// Plain gradient descent over seeded-shuffle batches. d_out == d_in starts
// from the exact identity so metrics begin at the frozen baseline; otherwise
// weights start uniform in (-1/sqrt(d_in), 1/sqrt(d_in)). A trailing short
// batch is trained like any other. Deterministic for a fixed seed; aborts on
// a non-finite loss.
TrainResult train_head(const TripletSet& triplets, const TrainConfig& config,
                       const EvalHook& hook = {});

// Affine map over every row; output rows are float32 and not normalized.
EmbeddingMatrix apply_head(const EmbeddingMatrix& m, const ProjectionHead& head);

// Weight matrix persisted in the binary embedding format (row ids w0..wN).
// Heads carrying a bias are in-memory objects only and refuse to save.
void save_head(const ProjectionHead& head, const std::string& path);
ProjectionHead load_head(const std::string& path);

void write_head_meta(const std::string& path, const TrainConfig& config,
                     std::span<const double> epoch_loss,
                     const std::vector<std::string>& header_lines);

}  // namespace embedkit
