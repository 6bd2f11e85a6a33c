#include <doctest.h>

#include <cmath>

#include "dft/error.hpp"
#include "dft/graph.hpp"
#include "dft/linalg.hpp"
#include "dft/metrics.hpp"
#include "support.hpp"

using namespace dft;
using dft::testing::random_tensor;

namespace {

std::vector<int> random_labels(std::size_t n, int c, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
    return y;
}

Tensor gaussian(std::size_t n, std::size_t d, Rng& rng, double shift = 0.0) {
    Tensor t(n, d);
    for (auto& v : t.mutable_values()) v = rng.normal(shift, 1.0);
    return t;
}

// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
Tensor random_orthogonal(std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.normal();
        for (const auto& u : cols) {
            double dot = 0;
            for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
            for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
        }
        double n = 0;
        for (double x : v) n += x * x;
        for (auto& x : v) x /= std::sqrt(n);
        cols.push_back(v);
    }
    Tensor q(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) q.mutable_values()[i * d + j] = cols[j][i];
    return q;
}

}  // namespace

TEST_CASE("f1 examples") {
    const std::vector<int> y{0, 1, 2, 1, 0};
    F1Scores perfect = f1_scores(y, y, 3);
    CHECK(perfect.micro == 1.0);
    CHECK(perfect.macro == 1.0);

    F1Scores half = f1_scores(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}, 2);
    CHECK(half.micro == doctest::Approx(0.5));
    CHECK(half.macro == doctest::Approx(0.5));

    F1Scores one = f1_scores(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}, 2);
    CHECK(one.micro == doctest::Approx(0.5));
    CHECK(one.macro == doctest::Approx(1.0 / 3));

    CHECK_THROWS_AS(f1_scores(std::vector<int>{}, std::vector<int>{}, 2), ContractError);
    CHECK_THROWS_AS(f1_scores(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DimensionError);
    CHECK_THROWS_AS(f1_scores(std::vector<int>{3}, std::vector<int>{0}, 2), ContractError);
}

TEST_CASE("macro f1 skips classes absent from both prediction and truth") {
    F1Scores s = f1_scores(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 0}, 4);
    CHECK_FALSE(s.present[2]);
    CHECK_FALSE(s.present[3]);
    CHECK(s.macro == doctest::Approx((2.0 / 3 + 2.0 / 3) / 2));
}

TEST_CASE("micro f1 equals accuracy") {
    Rng rng(1);
    for (int rep = 0; rep < 100; ++rep) {
        const int c = 2 + static_cast<int>(rng.index(5));
        const std::size_t n = 1 + rng.index(60);
        const auto p = random_labels(n, c, rng), t = random_labels(n, c, rng);
        double hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += p[i] == t[i];
        CHECK(std::abs(f1_scores(p, t, c).micro - hits / static_cast<double>(n)) < 1e-12);
    }
}

TEST_CASE("argmax picks the lowest index on ties") {
    CHECK(argmax_rows(Tensor::from_rows({{0.2, 0.5, 0.5}, {1, 0, 0}})) == std::vector<int>{1, 0});
}

TEST_CASE("icdr examples") {
    Tensor coincident = Tensor::from_rows({{0, 0}, {0, 0}, {5, 1}, {5, 1}});
    CHECK(icdr(coincident, std::vector<int>{0, 0, 1, 1}) == 0.0);

    Tensor tetra = Tensor::from_rows({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
    CHECK(icdr(tetra, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(0.5).epsilon(1e-15));

    Tensor four = Tensor::from_rows({{0, 0}, {0, 1}, {10, 0}, {10, 1}});
    const double inter = (2 * std::sqrt(101.0) + 20.0) / 4;
    const double expect = 1.0 / (1.0 + inter);
    const double got = icdr(four, std::vector<int>{0, 0, 1, 1});
    CHECK(std::abs(got - expect) < 1e-12);
    CHECK(std::abs(got - 0.0908) < 1e-4);
}

TEST_CASE("icdr rejects degenerate partitions") {
    Tensor z = Tensor::from_rows({{0, 0}, {1, 1}, {2, 2}});
    CHECK_THROWS_AS(icdr(z, std::vector<int>{0, 1, 2}), ContractError);
    CHECK_THROWS_AS(icdr(z, std::vector<int>{0, 0, 0}), ContractError);
    CHECK_THROWS_AS(icdr(Tensor(1, 2), std::vector<int>{0}), ContractError);
}

TEST_CASE("icdr is invariant under rigid motions and scaling") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor z = random_tensor(30, 5, rng);
        const auto y = random_labels(30, 3, rng);
        const double base = icdr(z, y);
        Tensor moved = add(matmul(z, random_orthogonal(5, rng)), random_tensor(1, 5, rng, -10, 10));
        CHECK(std::abs(icdr(moved, y) - base) < 1e-9);
        CHECK(std::abs(icdr(scale(z, rng.uniform(0.1, 50)), y) - base) < 1e-12);
        CHECK(base >= 0.0);
        CHECK(base <= 1.0);
    }
}

TEST_CASE("silhouette examples") {
    Rng rng(3);
    Tensor tight(20, 2);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
        y[i] = i < 10 ? 0 : 1;
        tight.mutable_values()[i * 2] = (i < 10 ? 0.0 : 10.0) + rng.uniform(0, 0.01);
        tight.mutable_values()[i * 2 + 1] = rng.uniform(0, 0.01);
    }
    CHECK(silhouette(tight, y) > 0.9);

    std::vector<int> swapped(y);
    for (std::size_t i = 0; i < 20; ++i) swapped[i] = i % 2 == 0 ? 1 - y[i] : y[i];
    // Half of each cluster relabelled: every point is as close to the other label.
    CHECK(silhouette(tight, swapped) < 0.1);

    // Labels swapped across the two clusters.
    Tensor pairs = Tensor::from_rows({{0, 0}, {0, 0.1}, {10, 0}, {10, 0.1}});
    CHECK(silhouette(pairs, std::vector<int>{0, 1, 0, 1}) < 0.0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r(seed);
        Tensor cloud = gaussian(200, 2, r);
        CHECK(std::abs(silhouette(cloud, random_labels(200, 2, r))) < 0.1);
    }
    CHECK_THROWS_AS(silhouette(tight, std::vector<int>(20, 0)), ContractError);
}

TEST_CASE("silhouette scores singletons as zero") {
    Tensor z = Tensor::from_rows({{0, 0}, {0, 1}, {5, 5}});
    const double s = silhouette(z, std::vector<int>{0, 0, 1});
    // Two non-singleton points contribute; the singleton adds 0.
    const double a = 1.0, b0 = std::sqrt(50.0), b1 = std::sqrt(41.0);
    CHECK(s == doctest::Approx(((b0 - a) / b0 + (b1 - a) / b1) / 3));
}

TEST_CASE("knn majority vote and tie rule") {
    Tensor pool = Tensor::from_rows({{0}, {1}, {2}, {3}});
    const std::vector<int> labels{2, 1, 1, 2};
    // Query at 1.5: nearest two are 1 and 2, both label 1.
    CHECK(knn_majority(Tensor::from_rows({{1.5}}), pool, labels, 2) == std::vector<int>{1});
    // k = 4: two votes each, tie goes to label 1.
    CHECK(knn_majority(Tensor::from_rows({{1.5}}), pool, labels, 4) == std::vector<int>{1});
    CHECK(knn_majority(Tensor::from_rows({{0.0}}), pool, std::vector<int>{3, 0, 0, 3}, 2) == std::vector<int>{0});
}

TEST_CASE("covariate probe: identical domains and shuffled control") {
    Rng rng(4);
    Tensor x = gaussian(120, 3, rng);
    const auto y = random_labels(120, 3, rng);
    CHECK(covariate_shift_probe(x, y, x, y, 5) == 1.0);

    // One neighbour keeps the pooled votes close to independent, so the
    // binomial band applies.
    const int c = 3;
    const std::size_t n = 1500;
    Tensor xs(n, 2), xt(n, 2);
    std::vector<int> ys(n), yt(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = yt[i] = static_cast<int>(i % c);
        for (std::size_t k = 0; k < 2; ++k) {
            xs.mutable_values()[i * 2 + k] = rng.normal(3.0 * ys[i], 1.0);
            xt.mutable_values()[i * 2 + k] = rng.normal(3.0 * yt[i], 1.0);
        }
    }
    CHECK(covariate_shift_probe(xs, ys, xt, yt, 15) > 0.9);
    const auto shuffled = shuffled_labels(yt, rng);
    const double agree = covariate_shift_probe(xs, ys, xt, shuffled, 1);
    const double m = 2.0 * n, p = 1.0 / c;
    CHECK(std::abs(agree - p) < 3.0 * std::sqrt(p * (1 - p) / m));
    CHECK_THROWS_AS(covariate_shift_probe(xs, ys, xt, yt, n + 1), ContractError);
}

TEST_CASE("shuffled labels keep the histogram") {
    Rng rng(5);
    const auto y = random_labels(50, 4, rng);
    auto s = shuffled_labels(y, rng);
    auto a = y;
    std::sort(a.begin(), a.end());
    std::sort(s.begin(), s.end());
    CHECK(a == s);
}

TEST_CASE("expected correlation at depth 0") {
    for (std::size_t n : {1u, 3u, 6u})
        for (std::size_t d : {1u, 2u, 4u}) {
            const double nd = static_cast<double>(n), dd = static_cast<double>(d);
            CHECK(expected_correlation(Tensor::identity(n), 0, d) == dd * ((dd + 1) * nd + nd * nd));
        }
    CHECK(expected_correlation(Tensor::identity(3), 0, 2) == 36.0);
}

TEST_CASE("expected correlation is nondecreasing in k") {
    Rng rng(6);
    for (int rep = 0; rep < 30; ++rep) {
        Graph g = erdos_renyi(2 + rng.index(8), rng.uniform(0.1, 0.8), rng);
        Tensor at = add(adjacency_matrix(g), Tensor::identity(g.num_nodes()));
        double prev = -1;
        const std::size_t d = 1 + rng.index(4);
        for (unsigned k = 0; k <= 5; ++k) {
            const double v = expected_correlation(at, k, d);
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("monte carlo: fourth moment and the P3 closed form") {
    Rng rng(7);
    McEstimate m = monte_carlo_correlation(Tensor::identity(1), 0, 1, 20000, rng);
    CHECK(std::abs(m.mean - 3.0) < 3.0 * m.stderr_);

    Graph p3(3, {{0, 1}, {1, 2}}, Tensor(3, 1));
    Tensor at = add(adjacency_matrix(p3), Tensor::identity(3));
    McEstimate e = monte_carlo_correlation(at, 1, 2, 20000, rng);
    CHECK(std::abs(e.mean - expected_correlation(at, 1, 2)) < 3.0 * e.stderr_);
    CHECK_THROWS_AS(monte_carlo_correlation(at, 1, 2, 10, rng), ContractError);
}

TEST_CASE("monte carlo standard error shrinks as 1/sqrt(samples)") {
    Rng rng(8);
    Graph p3(3, {{0, 1}, {1, 2}}, Tensor(3, 1));
    Tensor at = add(adjacency_matrix(p3), Tensor::identity(3));
    const double small = monte_carlo_correlation(at, 1, 2, 10000, rng).stderr_;
    const double large = monte_carlo_correlation(at, 1, 2, 40000, rng).stderr_;
    CHECK(std::abs(small / large - 2.0) < 0.4);
}

TEST_CASE("glorot curve: depth 0 matches the closed form, seeded") {
    Rng g_rng(9);
    Graph g = erdos_renyi(12, 0.3, g_rng);
    Tensor at = add(adjacency_matrix(g), Tensor::identity(12));
    Rng a(10), b(10);
    const auto c1 = glorot_correlation_curve(at, 3, 4, 2000, a);
    const auto c2 = glorot_correlation_curve(at, 3, 4, 2000, b);
    REQUIRE(c1.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(c1[k].mean == c2[k].mean);
    CHECK(std::abs(c1[0].mean - expected_correlation(at, 0, 4)) < 3.0 * c1[0].stderr_);
}

TEST_CASE("evaluate fills the optional metrics when possible") {
    Rng rng(11);
    Tensor z = random_tensor(10, 3, rng);
    const std::vector<int> y{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    MetricsReport r = evaluate(y, y, 2, &z);
    CHECK(r.num_nodes == 10);
    CHECK(r.f1.micro == 1.0);
    CHECK(r.icdr.has_value());
    CHECK(r.silhouette.has_value());
    MetricsReport bare = evaluate(y, std::vector<int>(10, 1), 2, &z);
    CHECK_FALSE(bare.icdr.has_value());
}
