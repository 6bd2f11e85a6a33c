#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dft/rng.hpp"
#include "dft/simd/kernels.hpp"

using namespace dft;
using namespace dft::simd;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

bool close(double a, double b, double scale) { return std::abs(a - b) <= 1e-12 * std::max(1.0, scale); }

std::vector<const KernelTable*> variants() {
    std::vector<const KernelTable*> out;
    if (isa_supported(Isa::avx2) && avx2_table()) out.push_back(avx2_table());
    if (isa_supported(Isa::neon) && neon_table()) out.push_back(neon_table());
    return out;
}

// Sizes covering empty input, every tail length and multi-block bodies.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 257, 1023};

}  // namespace

TEST_CASE("scalar table against hand sums") {
    const auto& t = scalar_table();
    const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
    CHECK(t.dot(a, b, 3) == 32.0);
    CHECK(t.sq_dist(a, b, 3) == 27.0);
    CHECK(t.sum(a, 3) == 6.0);
    double y[] = {1, 1, 1};
    t.axpy(2.0, a, y, 3);
    CHECK(y[2] == 7.0);
    double o[3];
    t.mul(a, b, o, 3);
    CHECK(o[1] == 10.0);
}

TEST_CASE("SIMD kernels agree with the scalar reference") {
    const auto simd = variants();
    if (simd.empty()) MESSAGE("no SIMD variant available on this host; scalar only");
    Rng rng(7);
    const auto& ref = scalar_table();
    for (const KernelTable* t : simd) {
        CAPTURE(isa_name(t->isa));
        for (std::size_t n : kSizes) {
            CAPTURE(n);
            const auto a = randv(n, rng), b = randv(n, rng);
            double mag = 0.0;
            for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
            CHECK(close(t->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), mag));
            CHECK(close(t->sq_dist(a.data(), b.data(), n), ref.sq_dist(a.data(), b.data(), n),
                        ref.sq_dist(a.data(), b.data(), n)));
            double amag = 0.0;
            for (double v : a) amag += std::abs(v);
            CHECK(close(t->sum(a.data(), n), ref.sum(a.data(), n), amag));

            auto y1 = b, y2 = b;
            t->axpy(0.37, a.data(), y1.data(), n);
            ref.axpy(0.37, a.data(), y2.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i], std::abs(y2[i])));

            std::vector<double> m1(n), m2(n);
            t->mul(a.data(), b.data(), m1.data(), n);
            ref.mul(a.data(), b.data(), m2.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(close(m1[i], m2[i], std::abs(m2[i])));
        }
    }
}

TEST_CASE("gemm variants match a triple loop under every ISA") {
    Rng rng(13);
    std::vector<Isa> isas{Isa::scalar};
    for (const KernelTable* t : variants()) isas.push_back(t->isa);
    const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 4, 9}, {17, 13, 11}, {33, 6, 19}};
    for (Isa isa : isas) {
        ScopedIsa scoped(isa);
        CAPTURE(isa_name(isa));
        for (const auto& s : shapes) {
            const std::size_t m = s[0], k = s[1], n = s[2];
            const auto a = randv(m * k, rng), b = randv(k * n, rng), bt = randv(n * k, rng), at = randv(k * m, rng);
            std::vector<double> c(m * n), cnt(m * n), ctn(m * n);
            gemm(m, k, n, a.data(), b.data(), c.data());
            gemm_nt(m, k, n, a.data(), bt.data(), cnt.data());
            gemm_tn(m, k, n, at.data(), b.data(), ctn.data());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double r = 0, rnt = 0, rtn = 0, mag = 0;
                    for (std::size_t p = 0; p < k; ++p) {
                        r += a[i * k + p] * b[p * n + j];
                        rnt += a[i * k + p] * bt[j * k + p];
                        rtn += at[p * m + i] * b[p * n + j];
                        mag += std::abs(a[i * k + p] * b[p * n + j]) + std::abs(at[p * m + i] * b[p * n + j]);
                    }
                    CHECK(close(c[i * n + j], r, mag));
                    CHECK(close(cnt[i * n + j], rnt, mag + k * 4.0));
                    CHECK(close(ctn[i * n + j], rtn, mag));
                }
        }
    }
}

TEST_CASE("gemm is independent of the thread count") {
    Rng rng(21);
    const std::size_t m = 65, k = 40, n = 30;
    const auto a = randv(m * k, rng), b = randv(k * n, rng);
    const std::size_t saved = thread_count();
    std::vector<double> c1(m * n), c4(m * n);
    set_thread_count(1);
    gemm(m, k, n, a.data(), b.data(), c1.data());
    set_thread_count(4);
    gemm(m, k, n, a.data(), b.data(), c4.data());
    set_thread_count(saved);
    CHECK(c1 == c4);
}

TEST_CASE("unsupported ISA is rejected") {
    for (Isa isa : {Isa::avx2, Isa::neon}) {
        if (!isa_supported(isa)) CHECK_THROWS_AS(set_isa(isa), std::invalid_argument);
    }
    CHECK(isa_supported(Isa::scalar));
}
