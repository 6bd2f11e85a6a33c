#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dft/graph.hpp"
#include "dft/rng.hpp"
#include "dft/tensor.hpp"

namespace dft::testing {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor random_param(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0);

// sum(t o w): reduces any tensor to a scalar with a generic cotangent.
Tensor contract(const Tensor& t, const Tensor& w);

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Worst norm-wise relative error |g_tape - g_fd| / max(|g_tape|, |g_fd|, 1e-6)
// over the inputs, with central differences of step h. Inputs must be tracked
// leaves; f must return a 1x1 tensor and be deterministic.
double grad_rel_error(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

// Two-block SBM with unit-variance features around means `separation` apart.
Graph two_block_sbm(std::size_t per_block, double p_in, double p_out, std::size_t dim, double separation,
                    Rng& rng);

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);

// Swallows library log lines for its lifetime.
struct QuietLog {
    QuietLog();
    ~QuietLog();
};

}  // namespace dft::testing
