#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "vqs/errors.hpp"
#include "vqs/model.hpp"

using namespace vqs;
using testing::max_abs_diff;
using testing::random_matrix;

namespace {

NetworkParams random_net(SplitMix64& rng, std::size_t in, std::size_t h1, std::size_t h2, std::size_t d,
                         Activation act = Activation::relu) {
    ModelShape s;
    s.input_width = in;
    s.hidden1 = h1;
    s.hidden2 = h2;
    s.latent_dim = d;
    s.codebook_size = 3;
    s.activation = act;
    auto p = init_network(s, rng);
    for (auto* side : {&p.encoder, &p.decoder})
        for (auto& layer : *side)
            for (double& b : layer.bias) b = rng.uniform(-0.3, 0.3);
    return p;
}

Codebook codebook_of(const Matrix& e) {
    Codebook cb;
    cb.embeddings = e;
    cb.ema_counts.assign(e.rows(), 0.0);
    cb.ema_sums = Matrix(e.rows(), e.cols());
    return cb;
}

// 1-wide identity layers: x → x for non-negative scalar input under ReLU.
NetworkParams identity_net() {
    NetworkParams p;
    for (auto* side : {&p.encoder, &p.decoder})
        for (auto& layer : *side) layer = DenseLayer{Matrix{{1.0}}, {0.0}};
    return p;
}

}  // namespace

TEST_CASE("activation and codebook mode names") {
    CHECK(parse_activation("relu") == Activation::relu);
    CHECK(parse_activation("tanh") == Activation::tanh);
    CHECK_THROWS_AS(parse_activation("gelu"), ValidationError);
    CHECK(parse_codebook_mode("ema") == CodebookMode::ema);
    CHECK(parse_codebook_mode("loss") == CodebookMode::loss);
    CHECK(to_string(CodebookMode::loss) == "loss");
    CHECK_THROWS_AS(parse_codebook_mode("kmeans"), ValidationError);
}

TEST_CASE("init_network shapes, bounds and determinism") {
    ModelShape s;
    s.input_width = 30;
    s.hidden1 = 20;
    s.hidden2 = 10;
    s.latent_dim = 4;
    SplitMix64 a(1), b(1);
    const auto p = init_network(s, a);
    CHECK(p == init_network(s, b));
    p.validate();
    CHECK(p.encoder[0].weight.rows() == 30);
    CHECK(p.encoder[2].weight.cols() == 4);
    CHECK(p.decoder[0].weight.rows() == 4);
    CHECK(p.decoder[2].weight.cols() == 30);
    for (const auto* side : {&p.encoder, &p.decoder})
        for (const auto& layer : *side) {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
            for (double w : layer.weight.values()) CHECK_UNARY(std::abs(w) <= limit);
            for (double bias : layer.bias) CHECK(bias == 0.0);
        }

    s.hidden2 = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("init_codebook scale") {
    SplitMix64 rng(2);
    const auto cb = init_codebook(2000, 16, 0.99, 1e-5, rng);
    double sq = 0.0;
    for (double v : cb.embeddings.values()) sq += v * v;
    CHECK(sq / static_cast<double>(cb.embeddings.size()) == doctest::Approx(1.0 / 16.0).epsilon(0.03));
    for (double c : cb.ema_counts) CHECK(c == 0.0);
    for (double m : cb.ema_sums.values()) CHECK(m == 0.0);
}

TEST_CASE("encode and decode trivial nets") {
    SplitMix64 rng(3);
    auto zero = random_net(rng, 5, 4, 3, 2);
    for (auto* side : {&zero.encoder, &zero.decoder})
        for (auto& layer : *side) {
            layer.weight = Matrix(layer.weight.rows(), layer.weight.cols());
            std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
        }
    CHECK(encode(zero, random_matrix(3, 5, rng)) == Matrix(3, 2));
    CHECK(decode(zero, random_matrix(3, 2, rng)) == Matrix(3, 5));

    const auto id = identity_net();
    CHECK(encode(id, Matrix{{2.0}}) == Matrix{{2.0}});
    CHECK(decode(id, Matrix{{2.0}}) == Matrix{{2.0}});

    CHECK_THROWS_AS(encode(zero, Matrix(1, 4)), ShapeError);
    CHECK_THROWS_AS(decode(zero, Matrix(1, 3)), ShapeError);
}

TEST_CASE("encode and decode agree with a straight-line forward pass") {
    SplitMix64 rng(4);
    for (auto act : {Activation::relu, Activation::tanh}) {
        const auto p = random_net(rng, 7, 6, 5, 3, act);
        const Matrix x = random_matrix(4, 7, rng);
        CHECK(max_abs_diff(encode(p, x), oracle::mlp(p.encoder, act, x)) < 1e-12);
        const Matrix z = random_matrix(4, 3, rng);
        CHECK(max_abs_diff(decode(p, z), oracle::mlp(p.decoder, act, z)) < 1e-12);
    }
}

TEST_CASE("quantize examples") {
    const auto two = codebook_of(Matrix{{0, 0}, {2, 2}});
    auto q = quantize(two, Matrix{{0.9, 0.8}});
    CHECK(q.indices == std::vector<std::size_t>{0});

    const auto four = codebook_of(Matrix{{0, 0}, {1, 0}, {0, 1}, {5, -2}});
    q = quantize(four, Matrix{{5, -2}});
    CHECK(q.indices[0] == 3);
    CHECK(q.z_q == Matrix{{5, -2}});

    q = quantize(four, Matrix{{0.5, 0.0}});
    CHECK(q.indices[0] == 0);

    CHECK_THROWS_AS(quantize(four, Matrix(1, 3)), ShapeError);
}

TEST_CASE("quantize matches the exhaustive oracle and copies rows") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto k = 1 + rng.below(64), d = 1 + rng.below(16);
        Matrix e(k, d);
        for (double& v : e.values()) v = static_cast<double>(rng.below(3));  // many ties
        const auto cb = codebook_of(e);
        Matrix z(10, d);
        for (double& v : z.values()) v = static_cast<double>(rng.below(3)) * 0.5;
        const auto q = quantize(cb, z);
        CHECK(q.indices == oracle::nearest_codes(e, z));
        for (std::size_t r = 0; r < z.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) CHECK(q.z_q(r, c) == e(q.indices[r], c));
    }
}

TEST_CASE("loss_terms hand example") {
    ForwardTrace t;
    t.encoder.out = Matrix{{1, 1}};
    t.z_q = Matrix{{0, 1}};
    t.indices = {0};
    t.decoder.out = Matrix{{0, 0}};
    const Matrix x{{1, 0}};
    const auto l = loss_terms(x, t, 0.25, CodebookMode::loss);
    CHECK(l.recons == 1.0);
    CHECK(l.codebook == 1.0);
    CHECK(l.commit == 0.25);
    CHECK(l.total == 2.25);

    const auto ema = loss_terms(x, t, 0.25, CodebookMode::ema);
    CHECK(ema.total == 1.25);
    CHECK(loss_terms(x, t, 0.0, CodebookMode::ema).commit == 0.0);

    t.decoder.out = x;
    t.z_q = t.encoder.out;
    const auto zero = loss_terms(x, t, 0.25, CodebookMode::loss);
    CHECK(zero.total == 0.0);

    t.decoder.out = Matrix{{std::nan(""), 0}};
    CHECK_THROWS_AS(loss_terms(x, t, 0.25, CodebookMode::ema), NumericError);
    CHECK_THROWS_AS(loss_terms(x, ForwardTrace{}, 0.25, CodebookMode::ema), UsageError);
}

TEST_CASE("backward: zero error gives zero gradients") {
    SplitMix64 rng(6);
    const auto p = random_net(rng, 4, 3, 3, 2);
    const Matrix x = random_matrix(2, 4, rng);
    const Matrix z = encode(p, x);
    const Codebook cb = codebook_of(Matrix{{z(0, 0), z(0, 1)}, {z(1, 0), z(1, 1)}});
    auto trace = forward(p, cb, x);
    const Matrix target = trace.recon();
    auto g = backward(p, target, trace, cb, 0.25, CodebookMode::loss);
    for (const auto t : g.params.tensors())
        for (double v : t) CHECK(v == 0.0);
    for (double v : g.codebook.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(backward(p, x, ForwardTrace{}, cb, 0.25, CodebookMode::ema), UsageError);
}

TEST_CASE("backward: straight-through copy, commitment linearity, stop-gradients") {
    SplitMix64 rng(7);
    const auto p = random_net(rng, 5, 4, 3, 2);
    auto cb = init_codebook(3, 2, 0.99, 1e-5, rng);
    const Matrix x = random_matrix(2, 5, rng);
    const auto trace = forward(p, cb, x);

    const auto g0 = backward(p, x, trace, cb, 0.0, CodebookMode::ema);
    CHECK(g0.d_z_e == g0.d_z_q);

    const auto g1 = backward(p, x, trace, cb, 0.25, CodebookMode::ema);
    const auto g2 = backward(p, x, trace, cb, 0.5, CodebookMode::ema);
    CHECK(g1.d_z_q == g0.d_z_q);
    CHECK(g2.d_z_q == g0.d_z_q);
    const Matrix c1 = commitment_gradient(trace, 0.25), c2 = commitment_gradient(trace, 0.5);
    for (std::size_t i = 0; i < c1.size(); ++i) {
        CHECK(c2.values()[i] == 2.0 * c1.values()[i]);
        CHECK(c1.values()[i] == 2.0 * 0.25 * (trace.z_e().values()[i] - trace.z_q.values()[i]) / 2.0);
    }

    for (double v : g1.codebook.values()) CHECK(v == 0.0);
    // perturbing the embeddings changes the losses but not the EMA-mode embedding gradient
    auto moved = cb;
    for (double& v : moved.embeddings.values()) v += 0.1;
    auto t2 = trace;
    for (std::size_t r = 0; r < t2.z_q.rows(); ++r)
        for (std::size_t c = 0; c < t2.z_q.cols(); ++c) t2.z_q(r, c) = moved.embeddings(t2.indices[r], c);
    CHECK(loss_terms(x, t2, 0.25, CodebookMode::ema).commit != loss_terms(x, trace, 0.25, CodebookMode::ema).commit);
    const auto g_moved = backward(p, x, t2, moved, 0.25, CodebookMode::ema);
    for (double v : g_moved.codebook.values()) CHECK(v == 0.0);

    const auto gl = backward(p, x, trace, cb, 0.25, CodebookMode::loss);
    Matrix expect(3, 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            expect(trace.indices[r], c) += 2.0 * (trace.z_q(r, c) - trace.z_e()(r, c)) / 2.0;
    CHECK(max_abs_diff(gl.codebook, expect) < 1e-15);
}

TEST_CASE("gradient check on the 5-4-3-2 net with K = 3 and batch 2") {
    SplitMix64 rng(8);
    for (double beta : {0.0, 0.25})
        for (auto mode : {CodebookMode::ema, CodebookMode::loss}) {
            for (auto act : {Activation::relu, Activation::tanh}) {
                NetworkParams p;
                Codebook cb;
                Matrix x;
                do {
                    p = random_net(rng, 5, 4, 3, 2, act);
                    cb = init_codebook(3, 2, 0.99, 1e-5, rng);
                    x = random_matrix(2, 5, rng);
                } while (oracle::min_hidden_margin(p, x, forward(p, cb, x).z_q) < 1e-3);
                const auto trace = forward(p, cb, x);
                const auto g = backward(p, x, trace, cb, beta, mode);
                const oracle::Surrogate loss{x, trace.z_e(), trace.z_q, trace.indices, beta, mode};
                const double h = 1e-6;
                auto pt = p.tensors();
                auto gp = g.params;
                auto gt = gp.tensors();
                double worst = 0.0;
                for (std::size_t t = 0; t < pt.size(); ++t)
                    for (std::size_t i = 0; i < pt[t].size(); ++i) {
                        const double n = loss.derivative(pt[t][i], h, p, cb.embeddings);
                        worst = std::max(worst, oracle::relative_error(gt[t][i], n, 1e-6));
                    }
                for (std::size_t i = 0; i < cb.embeddings.size(); ++i) {
                    const double n = loss.derivative(cb.embeddings.values()[i], h, p, cb.embeddings);
                    worst = std::max(worst, oracle::relative_error(g.codebook.values()[i], n, 1e-6));
                }
                CHECK(worst < 1e-5);
            }
        }
}

TEST_CASE("ema_update hand example and decay of unused codes") {
    Codebook cb = codebook_of(Matrix{{9, 9}});
    cb.decay = 0.5;
    cb.epsilon = 1e-5;
    cb.ema_counts = {1.0};
    cb.ema_sums = Matrix{{0, 0}};
    const std::vector<std::size_t> idx{0, 0};
    ema_update(cb, Matrix{{1, 0}, {3, 0}}, idx);
    CHECK(cb.ema_counts[0] == 1.5);
    CHECK(cb.ema_sums == Matrix{{2, 0}});
    CHECK(cb.embeddings(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
    CHECK(cb.embeddings(0, 1) == 0.0);

    Codebook two = codebook_of(Matrix{{0, 0}, {1, 1}});
    two.decay = 0.9;
    two.ema_counts = {2.0, 4.0};
    two.ema_sums = Matrix{{2, 2}, {4, 4}};
    const std::vector<std::size_t> only_first{0};
    ema_update(two, Matrix{{1, 1}}, only_first);
    CHECK(two.ema_counts[1] == 0.9 * 4.0);
    CHECK(two.ema_sums(1, 0) == 0.9 * 4.0);
}

TEST_CASE("ema_update with tiny decay jumps to the batch centroid") {
    Codebook cb = codebook_of(Matrix{{0, 0}, {0, 0}});
    cb.decay = 1e-12;
    const std::vector<std::size_t> idx{1, 1, 0};
    ema_update(cb, Matrix{{2, 4}, {4, 0}, {-1, 1}}, idx);
    CHECK(cb.embeddings(1, 0) == doctest::Approx(3.0).epsilon(1e-4));
    CHECK(cb.embeddings(1, 1) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(cb.embeddings(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("perplexity") {
    const std::vector<std::size_t> one{2, 2, 2};
    CHECK(perplexity(one, 5) == doctest::Approx(1.0));
    const std::vector<std::size_t> four{0, 1, 2, 3};
    CHECK(perplexity(four, 9) == doctest::Approx(4.0));
    const std::vector<std::size_t> skewed{0, 0, 1};
    CHECK(perplexity(skewed, 2) == doctest::Approx(1.8899).epsilon(1e-4));
    CHECK_THROWS_AS(perplexity(std::vector<std::size_t>{}, 3), UsageError);

    SplitMix64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto k = 1 + rng.below(20);
        std::vector<std::size_t> idx(1 + rng.below(50));
        for (auto& i : idx) i = rng.below(k);
        const double p = perplexity(idx, k);
        CHECK_UNARY(p >= 1.0 - 1e-12);
        CHECK_UNARY(p <= static_cast<double>(k) + 1e-12);
    }
}
