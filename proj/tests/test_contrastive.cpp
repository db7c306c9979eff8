#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "embedkit/contrastive.hpp"
#include "embedkit/numeric.hpp"
#include "embedkit/rng.hpp"
#include "embedkit/store.hpp"
#include "test_util.hpp"

using namespace embedkit;
using testutil::make_matrix;

namespace {

// Direct evaluation of the displayed objective from cosine tables built with
// plain double loops; no shared code with the implementation path.
double brute_force_loss(const EmbeddingMatrix& a, const EmbeddingMatrix& p,
                        const EmbeddingMatrix* h, double tau) {
    const std::size_t n = a.rows();
    auto cos = [](std::span<const float> u, std::span<const float> v) {
        double uu = 0, vv = 0, uv = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            uu += double(u[i]) * u[i];
            vv += double(v[i]) * v[i];
            uv += double(u[i]) * v[i];
        }
        return uv / std::sqrt(uu * vv);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            denom += std::exp(cos(a.row(i), p.row(j)) / tau);
            if (h) denom += std::exp(cos(a.row(i), h->row(j)) / tau);
        }
        total += -std::log(std::exp(cos(a.row(i), p.row(i)) / tau) / denom);
    }
    return total / static_cast<double>(n);
}

TripletSet make_triplets(const EmbeddingMatrix& a, const EmbeddingMatrix& p,
                         const EmbeddingMatrix& h) {
    TripletSet ts;
    ts.triplet_ids = a.ids;
    ts.anchors = a;
    ts.positives = p;
    ts.hard_negatives = h;
    return ts;
}

// Recoverable task: clustered unit vectors pushed through a fixed
// ill-conditioned diagonal squash. Identity-initialized training has real
// headroom because re-amplifying the crushed dimensions separates the
// clusters again. Cluster count stays above the batch size so in-batch
// same-cluster collisions do not dominate the loss floor.
TripletSet recoverable_triplets(Rng& rng, std::size_t n, std::size_t d, std::size_t clusters) {
    auto centers = testutil::random_unit_matrix(rng, clusters, d, "c");
    std::vector<double> scales(d);
    for (std::size_t j = 0; j < d; ++j)
        scales[j] = std::pow(0.02, static_cast<double>(j) / (d - 1));
    EmbeddingMatrix a, p, h;
    a.dims = p.dims = h.dims = d;
    auto sample = [&](std::size_t cluster, EmbeddingMatrix& dest, const std::string& id) {
        std::vector<double> v(d);
        const auto center = centers.row(cluster);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            v[j] = (center[j] + 0.05 * rng.normal()) * scales[j];
            norm2 += v[j] * v[j];
        }
        dest.ids.push_back(id);
        for (double x : v) dest.values.push_back(static_cast<float>(x / std::sqrt(norm2)));
    };
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.index(clusters);
        std::size_t other = rng.index(clusters - 1);
        if (other >= c) ++other;
        const std::string id = "t" + std::to_string(i);
        sample(c, a, id);
        sample(c, p, id);
        sample(other, h, id);
    }
    TripletSet ts = make_triplets(a, p, h);
    return ts;
}

}  // namespace

TEST_CASE("loss fixed points") {
    SUBCASE("single example without negatives is exactly zero") {
        const auto a = make_matrix({"a"}, 3, {0.2f, -0.4f, 0.9f});
        const auto p = make_matrix({"p"}, 3, {0.5f, 0.5f, 0.1f});
        const auto loss = contrastive_loss(a, p, nullptr, 0.05);
        CHECK(loss.total == 0.0);
        CHECK(loss.per_example[0] == 0.0);
    }

    SUBCASE("uniform similarities give ln N") {
        // four identical anchors and positives: every cosine is 1
        EmbeddingMatrix a, p;
        a.dims = p.dims = 2;
        for (int i = 0; i < 4; ++i) {
            a.ids.push_back("a" + std::to_string(i));
            p.ids.push_back("p" + std::to_string(i));
            a.values.insert(a.values.end(), {0.6f, 0.8f});
            p.values.insert(p.values.end(), {0.6f, 0.8f});
        }
        const auto loss = contrastive_loss(a, p, nullptr, 0.05);
        CHECK(loss.total == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }

    SUBCASE("saturated batch: positives at cosine 1, everything else at -1") {
        const auto a = make_matrix({"a1", "a2"}, 2, {1, 0, -1, 0});
        const auto p = a;
        const auto loss = contrastive_loss(a, p, nullptr, 0.05);
        CHECK(loss.total < 1e-8);
        const auto head = ProjectionHead::identity(2);
        const auto grad = contrastive_grad(a, p, nullptr, 0.05, head);
        double max_abs = 0.0;
        for (double g : grad.weight) max_abs = std::max(max_abs, std::fabs(g));
        CHECK(max_abs < 1e-6);
    }
}

TEST_CASE("loss equals a brute-force evaluation of the objective") {
    // constructed similarity table: orthogonal/antipodal pairs in 2-D
    const auto a = make_matrix({"a1", "a2"}, 2, {1, 0, 0, 1});
    const auto p = make_matrix({"p1", "p2"}, 2, {1, 0, 0, 1});
    const auto h = make_matrix({"h1", "h2"}, 2, {-1, 0, 0, -1});
    const auto loss = contrastive_loss(a, p, &h, 1.0);
    CHECK(loss.total == doctest::Approx(brute_force_loss(a, p, &h, 1.0)).epsilon(1e-12));

    Rng rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.index(6);
        const std::size_t d = 2 + rng.index(8);
        const auto ra = testutil::random_matrix(rng, n, d, "a");
        const auto rp = testutil::random_matrix(rng, n, d, "p");
        const auto rh = testutil::random_matrix(rng, n, d, "h");
        const double tau = 0.2 + rng.uniform();
        CHECK(contrastive_loss(ra, rp, &rh, tau).total ==
              doctest::Approx(brute_force_loss(ra, rp, &rh, tau)).epsilon(1e-10));
        CHECK(contrastive_loss(ra, rp, nullptr, tau).total ==
              doctest::Approx(brute_force_loss(ra, rp, nullptr, tau)).epsilon(1e-10));
    }
}

TEST_CASE("loss properties") {
    Rng rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.index(5);
        const auto a = testutil::random_matrix(rng, n, 6, "a");
        const auto p = testutil::random_matrix(rng, n, 6, "p");
        const auto h = testutil::random_matrix(rng, n, 6, "h");
        const double tau = 0.3 + rng.uniform();

        const double plain = contrastive_loss(a, p, nullptr, tau).total;
        const double hard = contrastive_loss(a, p, &h, tau).total;
        CHECK(plain >= 0.0);
        CHECK(hard >= plain);  // extra denominator mass never helps

        // per-vector positive rescaling leaves every cosine unchanged;
        // power-of-two factors rescale float32 rows without rounding
        auto scale = [&](const EmbeddingMatrix& m) {
            auto out = m;
            for (std::size_t i = 0; i < out.rows(); ++i) {
                const float f = std::ldexp(1.0f, static_cast<int>(rng.index(6)) - 2);
                for (auto& v : out.row_mut(i)) v *= f;
            }
            return out;
        };
        const double rescaled =
            contrastive_loss(scale(a), scale(p), nullptr, tau).total;
        CHECK(std::fabs(rescaled - plain) < 1e-9);
    }
}

TEST_CASE("loss error paths") {
    const auto a = make_matrix({"a"}, 2, {1, 0});
    const auto p = make_matrix({"p"}, 2, {0, 1});
    CHECK_THROWS_AS(contrastive_loss(a, p, nullptr, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(contrastive_loss(a, p, nullptr, -1.0), std::invalid_argument);
    const auto zero = make_matrix({"z"}, 2, {0, 0});
    CHECK_THROWS_AS(contrastive_loss(a, zero, nullptr, 1.0), std::invalid_argument);
    const auto mismatch = make_matrix({"m"}, 3, {1, 0, 0});
    CHECK_THROWS_AS(contrastive_loss(a, mismatch, nullptr, 1.0), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(97);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t n = 2 + rng.index(6);
        const std::size_t d_in = 3 + rng.index(5);
        const bool with_hard = trial % 2 == 0;
        const bool with_bias = trial % 3 == 0;
        const double tau = 0.5 + rng.uniform();

        const auto a = testutil::random_matrix(rng, n, d_in, "a");
        const auto p = testutil::random_matrix(rng, n, d_in, "p");
        const auto h = testutil::random_matrix(rng, n, d_in, "h");

        ProjectionHead head;
        head.d_out = d_in;
        head.d_in = d_in;
        head.weight.resize(d_in * d_in);
        for (auto& w : head.weight) w = rng.uniform(-0.8, 0.8);
        for (std::size_t i = 0; i < d_in; ++i) head.weight[i * d_in + i] += 1.0;
        if (with_bias) {
            head.bias.emplace(d_in);
            for (auto& b : *head.bias) b = rng.uniform(-0.1, 0.1);
        }

        const auto result =
            contrastive_loss_and_grad(a, p, with_hard ? &h : nullptr, tau, head);

        // double-precision forward evaluation; routing the perturbed loss
        // through apply_head would quantize to float32 and swamp the 1e-6 step
        auto loss_at = [&](const ProjectionHead& hd) {
            return contrastive_loss_and_grad(a, p, with_hard ? &h : nullptr, tau, hd)
                .loss.total;
        };

        const double step = 1e-6;
        for (std::size_t i = 0; i < head.weight.size(); ++i) {
            ProjectionHead plus = head, minus = head;
            plus.weight[i] += step;
            minus.weight[i] -= step;
            const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * step);
            const double an = result.grad.weight[i];
            const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-3});
            CHECK(rel < 1e-5);
        }
        if (with_bias) {
            REQUIRE(result.grad.bias.has_value());
            for (std::size_t i = 0; i < d_in; ++i) {
                ProjectionHead plus = head, minus = head;
                (*plus.bias)[i] += step;
                (*minus.bias)[i] -= step;
                const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * step);
                const double an = (*result.grad.bias)[i];
                const double rel =
                    std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-3});
                CHECK(rel < 1e-5);
            }
        }
    }
}

TEST_CASE("apply_head fixtures") {
    const auto m = make_matrix({"x"}, 2, {3.0f, -2.0f});
    CHECK_THROWS_AS(apply_head(m, ProjectionHead::identity(3)), std::invalid_argument);

    const auto id = apply_head(m, ProjectionHead::identity(2));
    CHECK(id.values[0] == doctest::Approx(3.0f).epsilon(1e-7));
    CHECK(id.values[1] == doctest::Approx(-2.0f).epsilon(1e-7));
    CHECK_FALSE(id.normalized);

    ProjectionHead swap;
    swap.d_out = swap.d_in = 2;
    swap.weight = {0, 1, 1, 0};
    const auto swapped = apply_head(m, swap);
    CHECK(swapped.values[0] == doctest::Approx(-2.0f));
    CHECK(swapped.values[1] == doctest::Approx(3.0f));

    // independent dot-product oracle on a random head
    Rng rng(111);
    ProjectionHead rnd;
    rnd.d_out = 3;
    rnd.d_in = 2;
    rnd.weight.resize(6);
    for (auto& w : rnd.weight) w = rng.uniform(-1.0, 1.0);
    const auto mapped = apply_head(m, rnd);
    for (std::size_t i = 0; i < 3; ++i) {
        const double want = rnd.weight[i * 2] * 3.0 + rnd.weight[i * 2 + 1] * -2.0;
        CHECK(static_cast<double>(mapped.values[i]) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("train_head: epochs=0 returns the initialization") {
    Rng rng(121);
    const auto ts = recoverable_triplets(rng, 12, 4, 6);
    TrainConfig config;
    config.epochs = 0;
    config.batch_size = 4;
    const auto result = train_head(ts, config);
    const auto id = ProjectionHead::identity(4);
    CHECK(result.head.weight == id.weight);
    CHECK(result.epoch_loss.empty());
}

TEST_CASE("train_head: loss improves on a recoverable fixture") {
    Rng rng(131);
    const auto ts = recoverable_triplets(rng, 60, 8, 16);
    TrainConfig config;
    config.tau = 0.05;
    config.learning_rate = 0.5;
    config.epochs = 5;
    config.batch_size = 20;
    config.seed = 7;
    const auto result = train_head(ts, config);
    REQUIRE(result.epoch_loss.size() == 5);
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
}

TEST_CASE("train_head is bit-deterministic for a fixed seed") {
    Rng rng(141);
    const auto ts = recoverable_triplets(rng, 30, 6, 12);
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 10;
    config.seed = 42;
    const auto r1 = train_head(ts, config);
    const auto r2 = train_head(ts, config);
    CHECK(r1.head.weight == r2.head.weight);
    CHECK(r1.epoch_loss == r2.epoch_loss);
}

TEST_CASE("train_head: random init for d_out != d_in and validation") {
    Rng rng(151);
    const auto ts = recoverable_triplets(rng, 16, 6, 8);
    TrainConfig config;
    config.epochs = 0;
    config.batch_size = 8;
    config.d_out = 3;
    const auto init = train_head(ts, config);
    CHECK(init.head.d_out == 3);
    CHECK(init.head.d_in == 6);
    const double bound = 1.0 / std::sqrt(6.0);
    for (double w : init.head.weight) CHECK(std::fabs(w) < bound);

    config.epochs = 1;
    const auto stepped = train_head(ts, config);
    CHECK(stepped.head.weight != init.head.weight);

    TrainConfig bad = config;
    bad.batch_size = 17;  // > n
    CHECK_THROWS_AS(train_head(ts, bad), std::invalid_argument);
    bad = config;
    bad.tau = 0.0;
    CHECK_THROWS_AS(train_head(ts, bad), std::invalid_argument);
    bad = config;
    bad.batch_size = 1;
    CHECK_THROWS_AS(train_head(ts, bad), std::invalid_argument);
}

TEST_CASE("train_head invokes the eval hook per epoch") {
    Rng rng(161);
    const auto ts = recoverable_triplets(rng, 12, 4, 6);
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 6;
    std::vector<double> seen;
    train_head(ts, config, [&](std::size_t epoch, double loss, const ProjectionHead&) {
        CHECK(epoch == seen.size());
        seen.push_back(loss);
    });
    CHECK(seen.size() == 3);
}

TEST_CASE("head persistence round trip (float32 storage)") {
    testutil::TempDir dir("head");
    Rng rng(171);
    ProjectionHead head;
    head.d_out = 3;
    head.d_in = 4;
    head.weight.resize(12);
    for (auto& w : head.weight) w = rng.uniform(-2.0, 2.0);

    save_head(head, dir.file("head.emb"));
    const auto back = load_head(dir.file("head.emb"));
    CHECK(back.d_out == 3);
    CHECK(back.d_in == 4);
    for (std::size_t i = 0; i < head.weight.size(); ++i)
        CHECK(back.weight[i] ==
              doctest::Approx(static_cast<double>(static_cast<float>(head.weight[i]))));

    ProjectionHead biased = head;
    biased.bias.emplace(3, 0.1);
    CHECK_THROWS_AS(save_head(biased, dir.file("bad.emb")), std::invalid_argument);
}

TEST_CASE("head meta file records config and loss history") {
    testutil::TempDir dir("head");
    TrainConfig config;
    config.tau = 0.05;
    config.learning_rate = 0.25;
    config.epochs = 2;
    config.batch_size = 16;
    config.seed = 9;
    const std::vector<double> history{1.5, 0.75};
    write_head_meta(dir.file("meta.tsv"), config, history, {"invocation: test"});
    const auto text = testutil::read_text(dir.file("meta.tsv"));
    CHECK(text.find("tau\t0.05") != std::string::npos);
    CHECK(text.find("epoch_loss\t1\t1.5\n") != std::string::npos);
    CHECK(text.find("epoch_loss\t2\t0.75\n") != std::string::npos);
}
