#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dft/rng.hpp"
#include "dft/tensor.hpp"

namespace dft {

struct F1Scores {
    double micro = 0.0;
    double macro = 0.0;
    // Indexed by class. Classes absent from both pred and truth have
    // present[c] == false and do not enter the macro average.
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<bool> present;
};

F1Scores f1_scores(std::span<const int> pred, std::span<const int> truth, int num_classes);

// Row-wise argmax, lowest index on ties.
std::vector<int> argmax_rows(const Tensor& probs);

// Mean intra-class over (mean intra + mean inter) pairwise euclidean distance.
double icdr(const Tensor& z, std::span<const int> labels);

// Mean silhouette coefficient; points in singleton classes score 0.
double silhouette(const Tensor& z, std::span<const int> labels);

// Fraction of pooled samples whose k-NN majority label among the source rows
// equals the one among the target rows. Distances are euclidean; a sample is
// its own neighbour in its own domain; vote ties go to the smallest label.
double covariate_shift_probe(const Tensor& x_s, std::span<const int> y_s, const Tensor& x_t,
                             std::span<const int> y_t, std::size_t k = 128);

// Labels of the k nearest rows of `pool` for every row of `queries`, majority
// voted. Exposed for testing.
std::vector<int> knn_majority(const Tensor& queries, const Tensor& pool, std::span<const int> pool_labels,
                              std::size_t k);

std::vector<int> shuffled_labels(std::span<const int> labels, Rng& rng);

// Exact E |H H^T|_F^2 for H = a_tilde^k X with X an N x D standard normal
// matrix: D [ (D+1) sum_ij B_ij^2 + (tr B)^2 ], B = a_tilde^{2k}.
double expected_correlation(const Tensor& a_tilde, unsigned k, std::size_t d);

struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Sample mean and standard error of |H H^T|_F^2 for H = a_tilde^k X.
// Requires samples >= 1000.
McEstimate monte_carlo_correlation(const Tensor& a_tilde, unsigned k, std::size_t d, std::size_t samples, Rng& rng);

// E |H_k H_k^T|_F^2 for H_0 = X, H_k = op H_{k-1} W_k with fresh
// Glorot-uniform W_k (d x d) every layer and sample. Entries k = 0..depth_max.
std::vector<McEstimate> glorot_correlation_curve(const Tensor& op, unsigned depth_max, std::size_t d,
                                                 std::size_t samples, Rng& rng);

struct MetricsReport {
    std::size_t num_nodes = 0;
    int num_classes = 0;
    F1Scores f1;
    std::optional<double> icdr;
    std::optional<double> silhouette;
};

// F1 always; ICDR and silhouette on z when the labelling permits them.
MetricsReport evaluate(std::span<const int> pred, std::span<const int> truth, int num_classes,
                       const Tensor* z = nullptr);

}  // namespace dft
