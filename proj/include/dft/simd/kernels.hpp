#pragma once

// Dense f64 kernels with a scalar reference implementation and SIMD variants
// (AVX2+FMA on x86-64, NEON on AArch64) picked once at startup.
//
// The scalar table is the reference: every SIMD variant must agree with it to
// within 1e-12 relative error (see tests/test_simd.cpp). Set DFT_SIMD=scalar
// to force the reference path.

#include <cstddef>
#include <string_view>

namespace dft::simd {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
    Isa isa;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i (a[i] - b[i])^2
    double (*sq_dist)(const double* a, const double* b, std::size_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // sum_i a[i]
    double (*sum)(const double* a, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled into this binary.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

// Currently selected table. Resolved on first use from DFT_SIMD (scalar|avx2|neon|auto)
// and CPU feature detection.
const KernelTable& kernels();
Isa active_isa();

// Switches the active table. Throws std::invalid_argument when unsupported.
void set_isa(Isa isa);

class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
    ~ScopedIsa() { set_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

// Worker cap for row-parallel products; DFT_THREADS, default hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Row-major products. Rows of the output are partitioned across threads, so each
// output element is computed by one thread in a fixed order and results do not
// depend on the thread count.
//
// C[m x n] = A[m x k] * B[k x n]
void gemm(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
// C[m x n] = A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);

}  // namespace dft::simd
