#include <doctest.h>

#include <cmath>

#include "dft/error.hpp"
#include "dft/graph.hpp"
#include "dft/layers.hpp"
#include "support.hpp"

using namespace dft;
using dft::testing::contract;
using dft::testing::grad_rel_error;
using dft::testing::max_abs_diff;
using dft::testing::random_param;
using dft::testing::random_tensor;

namespace {

Tensor random_laplacian(std::size_t n, Rng& rng) {
    return laplacian_from(normalized_adjacency(erdos_renyi(n, 0.4, rng)));
}

double gram_defect(const Tensor& h) {
    return std::sqrt(sq_frobenius(sub(matmul(h, transpose(h)), Tensor::identity(h.rows()))).item());
}

// Brute-force attention over explicit neighbour lists.
std::vector<double> attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& adj,
                                     bool literal) {
    const std::size_t n = q.rows(), d = q.cols();
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> cols;
        std::vector<double> score;
        for (std::size_t j = 0; j < n; ++j) {
            const bool edge = adj(i, j) != 0.0 || i == j;
            if (!literal && !edge) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += q(i, c) * k(j, c);
            s = literal ? s * adj(i, j) / std::sqrt(static_cast<double>(d)) : s / std::sqrt(static_cast<double>(d));
            cols.push_back(j);
            score.push_back(s);
        }
        const double mx = *std::max_element(score.begin(), score.end());
        double z = 0.0;
        for (double& s : score) z += (s = std::exp(s - mx));
        for (std::size_t t = 0; t < cols.size(); ++t)
            for (std::size_t c = 0; c < d; ++c) out[i * d + c] += score[t] / z * v(cols[t], c);
    }
    return out;
}

}  // namespace

TEST_CASE("decorr_gradient vanishes at the trivial fixed points") {
    Rng rng(1);
    Tensor x = random_tensor(5, 3, rng);
    Tensor lap = random_laplacian(5, rng);
    DecorrConfig off{0.0, 0.0, 0.1, 1};
    Tensor g0 = decorr_gradient(x, x, lap, off);
    for (double v : g0.values()) CHECK(v == 0.0);

    // Orthonormal rows: a 3x3 rotation.
    const double c = std::cos(0.3), s = std::sin(0.3);
    Tensor r = Tensor::from_rows({{c, -s, 0}, {s, c, 0}, {0, 0, 1}});
    DecorrConfig decor{0.0, 0.7, 0.1, 1};
    Tensor g1 = decorr_gradient(r, r, random_laplacian(3, rng), decor);
    for (double v : g1.values()) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("decorr_gradient is the gradient of the objective") {
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 4, d = 3;
        Tensor h = random_tensor(n, d, rng);
        Tensor x = random_tensor(n, d, rng);
        Tensor lap = random_laplacian(n, rng);
        DecorrConfig cfg{rng.uniform(0, 5), rng.uniform(0, 2), 0.01, 1};
        Tensor g = decorr_gradient(h, x, lap, cfg);
        const double eps = 1e-5;
        double diff = 0.0, norm = 0.0;
        auto hv = h.mutable_values();
        for (std::size_t i = 0; i < hv.size(); ++i) {
            const double orig = hv[i];
            hv[i] = orig + eps;
            const double fp = decorr_objective(h, x, lap, cfg).item();
            hv[i] = orig - eps;
            const double fm = decorr_objective(h, x, lap, cfg).item();
            hv[i] = orig;
            const double fd = (fp - fm) / (2 * eps);
            diff += (fd - g.values()[i]) * (fd - g.values()[i]);
            norm += fd * fd;
        }
        CHECK(std::sqrt(diff / norm) < 1e-5);
    }
}

TEST_CASE("decorr_gradient rejects mismatched shapes") {
    CHECK_THROWS_AS(decorr_gradient(Tensor(3, 2), Tensor(3, 3), Tensor(3, 3), DecorrConfig{}), DimensionError);
    CHECK_THROWS_AS(decorr_gradient(Tensor(3, 2), Tensor(3, 2), Tensor(4, 4), DecorrConfig{}), DimensionError);
}

TEST_CASE("decorr_stack: gamma 1 without regularisers, and gamma 0, return x") {
    Rng rng(3);
    Tensor x = random_tensor(6, 4, rng);
    Tensor lap = random_laplacian(6, rng);
    Tensor h0 = random_tensor(6, 4, rng);
    for (std::size_t layers : {1u, 3u}) {
        CHECK(max_abs_diff(decorr_stack(x, lap, DecorrConfig{0, 0, 1.0, layers}, h0).values(), x.values()) < 1e-15);
        CHECK(max_abs_diff(decorr_stack(x, lap, DecorrConfig{100, 0.001, 0.0, layers}).values(), x.values()) == 0.0);
    }
}

TEST_CASE("decorr_stack converges linearly from an injected start") {
    Rng rng(4);
    Tensor x = random_tensor(6, 4, rng);
    Tensor h0 = random_tensor(6, 4, rng);
    Tensor lap = random_laplacian(6, rng);
    const double gamma = 0.3;
    const double start = std::sqrt(sq_frobenius(sub(h0, x)).item());
    for (std::size_t l = 1; l <= 5; ++l) {
        Tensor h = decorr_stack(x, lap, DecorrConfig{0, 0, gamma, l}, h0);
        const double dist = std::sqrt(sq_frobenius(sub(h, x)).item());
        CHECK(dist == doctest::Approx(std::pow(1 - gamma, static_cast<double>(l)) * start).epsilon(1e-12));
    }
}

TEST_CASE("decorrelation lowers the gram defect") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Graph g = erdos_renyi(64, 0.1, rng);
        Tensor lap = laplacian_from(normalized_adjacency(g));
        Tensor x = random_tensor(64, 32, rng);
        for (auto& v : x.mutable_values()) v = rng.normal();
        const double with = gram_defect(decorr_stack(x, lap, DecorrConfig{100, 0.001, 0.01, 3}));
        const double without = gram_defect(decorr_stack(x, lap, DecorrConfig{100, 0.0, 0.01, 3}));
        wins += with < without;
    }
    CHECK(wins >= 9);
}

TEST_CASE("decorrelated stack passes a finite-difference check") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor lap = random_laplacian(5, rng);
        Tensor w = random_tensor(5, 3, rng);
        DecorrConfig cfg{rng.uniform(0, 3), rng.uniform(0, 1), 0.05, 3};
        CHECK(grad_rel_error([&](auto& in) { return contract(decorr_stack(in[0], lap, cfg), w); },
                             {random_param(5, 3, rng)}) < 1e-4);
    }
}

TEST_CASE("sparse attention: uniform weights and self-only mask") {
    Rng rng(6);
    Tensor v = random_tensor(4, 3, rng);
    Tensor out = sparse_attention(Tensor(4, 3), Tensor(4, 3), v, Tensor(4, 4, 1.0));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4;
            CHECK(out(i, c) == doctest::Approx(mean).epsilon(1e-14));
        }
    Tensor self = sparse_attention(random_tensor(4, 3, rng), random_tensor(4, 3, rng), v, Tensor::identity(4));
    CHECK(max_abs_diff(self.values(), v.values()) == 0.0);
    // A row with no unmasked entry attends to itself.
    Tensor empty = sparse_attention(random_tensor(4, 3, rng), random_tensor(4, 3, rng), v, Tensor(4, 4, 0.0));
    CHECK(max_abs_diff(empty.values(), v.values()) == 0.0);
}

TEST_CASE("sparse attention matches a brute-force oracle") {
    Rng rng(7);
    Graph p3(3, {{0, 1}, {1, 2}}, Tensor(3, 1));
    Tensor adj = attention_mask(p3);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng), v = random_tensor(3, 4, rng);
        CHECK(max_abs_diff(sparse_attention(q, k, v, adj).values(), attention_oracle(q, k, v, adj, false)) < 1e-12);
        CHECK(max_abs_diff(sparse_attention(q, k, v, adj, AttentionMask::literal).values(),
                           attention_oracle(q, k, v, adj, true)) < 1e-12);
    }
}

TEST_CASE("attention rows are distributions over the neighbourhood") {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        Graph g = erdos_renyi(10, 0.3, rng);
        Tensor adj = attention_mask(g);
        Tensor w = sparse_attention_weights(random_tensor(10, 4, rng), random_tensor(10, 4, rng), adj);
        for (std::size_t i = 0; i < 10; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 10; ++j) {
                CHECK(w(i, j) >= 0.0);
                if (adj(i, j) == 0.0) CHECK(w(i, j) == 0.0);
                total += w(i, j);
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("literal mask spreads weight onto non-neighbours") {
    Rng rng(9);
    Graph g(4, {{0, 1}}, Tensor(4, 1));
    Tensor w = sparse_attention_weights(random_tensor(4, 2, rng), random_tensor(4, 2, rng), attention_mask(g),
                                        AttentionMask::literal);
    CHECK(w(0, 3) > 0.0);
}

TEST_CASE("transformer layer keeps the shape") {
    Rng rng(10);
    for (std::size_t n : {3u, 7u})
        for (std::size_t d : {2u, 5u}) {
            auto params = TransformerLayerParams::init(d, 2 * d, 2, true, rng);
            Graph g = erdos_renyi(n, 0.5, rng);
            Tensor out = transformer_layer(random_tensor(n, d, rng), random_tensor(n, 2, rng), attention_mask(g),
                                           params, true, ForwardMode{true, 0.0, nullptr});
            CHECK(out.rows() == n);
            CHECK(out.cols() == d);
        }
}

TEST_CASE("transformer layer reduces to the residual path") {
    Rng rng(11);
    auto params = TransformerLayerParams::init(4, 8, 2, false, rng);
    for (auto& v : params.wv.mutable_values()) v = 0.0;
    for (auto& v : params.ffn2.weight.mutable_values()) v = 0.0;
    Tensor h = random_tensor(6, 4, rng);
    Tensor out = transformer_layer(h, Tensor(6, 2), Tensor(6, 6, 1.0), params, false, ForwardMode{});
    CHECK(max_abs_diff(out.values(), h.values()) < 1e-7);
}

TEST_CASE("transformer layer applies dropout to its output only in train mode") {
    Rng rng(12);
    auto params = TransformerLayerParams::init(4, 8, 2, true, rng);
    Tensor h = random_tensor(6, 4, rng), pe = random_tensor(6, 2, rng), adj(6, 6, 1.0);
    Rng r1(1), r2(1);
    Tensor a = transformer_layer(h, pe, adj, params, true, ForwardMode{true, 0.5, &r1});
    Tensor b = transformer_layer(h, pe, adj, params, true, ForwardMode{true, 0.0, &r2});
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.values()[i] == 0.0) ++zeros;
        else CHECK(a.values()[i] == doctest::Approx(2.0 * b.values()[i]));
    }
    CHECK(zeros > 0);
}

TEST_CASE("transformer layer passes a finite-difference check") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 5, d = 3;
        auto params = TransformerLayerParams::init(d, 2 * d, 2, true, rng);
        Graph g = erdos_renyi(n, 0.5, rng);
        Tensor adj = attention_mask(g);
        Tensor pe = random_tensor(n, 2, rng);
        Tensor w = random_tensor(n, d, rng);
        const AttentionMask mask = rep % 2 ? AttentionMask::literal : AttentionMask::neighbors;
        std::vector<Tensor> inputs{random_param(n, d, rng)};
        for (const auto& p : params.parameters()) inputs.push_back(p);
        CHECK(grad_rel_error(
                  [&](auto& in) {
                      Rng drop(rep);
                      return contract(
                          transformer_layer(in[0], pe, adj, params, true, ForwardMode{true, 0.2, &drop}, mask), w);
                  },
                  inputs) < 1e-4);
    }
}

TEST_CASE("gcn layer examples") {
    Rng rng(14);
    Tensor h = random_tensor(3, 3, rng);
    CHECK(max_abs_diff(gcn_layer(h, Tensor::identity(3), Tensor::identity(3), false).values(), h.values()) == 0.0);

    Tensor a = normalized_adjacency(Graph(2, {{0, 1}}, Tensor(2, 1)));
    Tensor out = gcn_layer(Tensor::identity(2), a, Tensor::identity(2), false);
    for (double v : out.values()) CHECK(v == doctest::Approx(0.5));

    Tensor neg = gcn_layer(scale(Tensor::identity(2), -1.0), Tensor::identity(2), Tensor::identity(2), true);
    for (double v : neg.values()) CHECK(v == 0.0);
}

TEST_CASE("glorot init stays inside its bound") {
    Rng rng(15);
    Tensor w = glorot_uniform(30, 10, rng);
    const double a = std::sqrt(6.0 / 40.0);
    for (double v : w.values()) CHECK(std::abs(v) <= a);
}

TEST_CASE("decorr config validation") {
    CHECK_THROWS_AS((DecorrConfig{-1, 0, 0.1, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((DecorrConfig{1, 0, 0.1, 0}.validate()), ConfigError);
    CHECK_NOTHROW(DecorrConfig{}.validate());
}
