#include "dft/simd/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dft::simd {

#if !DFT_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !DFT_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* table_for(Isa isa) {
    switch (isa) {
        case Isa::scalar: return &scalar_table();
        case Isa::avx2: return avx2_table();
        case Isa::neon: return neon_table();
    }
    return nullptr;
}

const KernelTable* resolve_default() {
    const char* env = std::getenv("DFT_SIMD");
    const std::string choice = env ? env : "auto";
    if (choice == "scalar") return &scalar_table();
    if (choice == "avx2" && isa_supported(Isa::avx2)) return avx2_table();
    if (choice == "neon" && isa_supported(Isa::neon)) return neon_table();
    if (isa_supported(Isa::avx2)) return avx2_table();
    if (isa_supported(Isa::neon)) return neon_table();
    return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{resolve_default()};
    return slot;
}

std::size_t default_threads() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DFT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return std::min<std::size_t>(static_cast<std::size_t>(v), hw);
        } catch (const std::exception&) {
        }
    }
    return hw;
}

std::atomic<std::size_t>& thread_slot() {
    static std::atomic<std::size_t> slot{default_threads()};
    return slot;
}

// Splits [0, rows) into contiguous chunks. Small problems stay on the calling thread.
template <typename Fn>
void for_rows(std::size_t rows, double flops, Fn&& fn) {
    constexpr double kMinFlopsPerThread = 4.0e6;
    std::size_t workers = std::min<std::size_t>(thread_count(), rows);
    workers = std::min<std::size_t>(workers, static_cast<std::size_t>(flops / kMinFlopsPerThread) + 1);
    if (workers <= 1) {
        fn(std::size_t{0}, rows);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (rows + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(std::size_t{0}, std::min(rows, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if DFT_HAVE_AVX2 && (defined(__x86_64__) || defined(__i386__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon: return neon_table() != nullptr;
    }
    return false;
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

void set_isa(Isa isa) {
    if (!isa_supported(isa)) {
        throw std::invalid_argument("SIMD variant not supported on this machine: " + std::string(isa_name(isa)));
    }
    active_slot().store(table_for(isa), std::memory_order_relaxed);
}

std::size_t thread_count() { return thread_slot().load(std::memory_order_relaxed); }

void set_thread_count(std::size_t n) { thread_slot().store(std::max<std::size_t>(1, n)); }

// Exact zeros in A are skipped: adjacency-like operands are mostly zero and the
// skip is applied identically on every ISA.
void gemm(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    const KernelTable& kt = kernels();
    for_rows(m, 2.0 * m * k * n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* ci = c + i * n;
            std::fill(ci, ci + n, 0.0);
            const double* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                if (ai[p] != 0.0) kt.axpy(ai[p], b + p * n, ci, n);
            }
        }
    });
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    const KernelTable& kt = kernels();
    for_rows(m, 2.0 * m * k * n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* ai = a + i * k;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] = kt.dot(ai, b + j * k, k);
        }
    });
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    const KernelTable& kt = kernels();
    for_rows(m, 2.0 * m * k * n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* ci = c + i * n;
            std::fill(ci, ci + n, 0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const double api = a[p * m + i];
                if (api != 0.0) kt.axpy(api, b + p * n, ci, n);
            }
        }
    });
}

}  // namespace dft::simd
