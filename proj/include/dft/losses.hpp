#pragma once

#include <span>

#include "dft/model.hpp"
#include "dft/rng.hpp"
#include "dft/tensor.hpp"

namespace dft {

// Mean negative log-probability of the true class. y_hat holds probabilities.
Tensor loss_source(const Tensor& y_hat, std::span<const int> labels);

// Mean Shannon entropy of the rows of y_hat.
Tensor loss_target_entropy(const Tensor& y_hat);

// mean(q_s) - mean(q_t)
Tensor loss_critic(const Tensor& q_s, const Tensor& q_t);

enum class GpMode {
    at_samples,   // penalise the critic's input gradient at z_s and z_t
    interpolate,  // penalise at random points between paired source/target rows
};

// at_samples: sum over both domains of mean_i (|grad f(z_i)| - 1)^2.
// interpolate: one mean over n_s points z_s[i] + e_i (z_t[i mod n_t] - z_s[i]),
// e_i ~ U(0, 1); needs rng.
Tensor gradient_penalty(const CriticParams& critic, const Tensor& z_s, const Tensor& z_t,
                        GpMode mode = GpMode::at_samples, Rng* rng = nullptr);

// Bandwidth for loss_mmd: median euclidean distance over all distinct pairs of
// the pooled rows, or 1 when that median is 0.
double mmd_bandwidth(const Tensor& z_s, const Tensor& z_t);

// Biased squared MMD with k(a, b) = exp(-|a - b|^2 / (2 h^2)), h from
// mmd_bandwidth (held constant during differentiation).
Tensor loss_mmd(const Tensor& z_s, const Tensor& z_t);
// Same estimator with a caller-chosen bandwidth h > 0.
Tensor loss_mmd(const Tensor& z_s, const Tensor& z_t, double bandwidth);

// epoch / (epochs * 100)
double lambda_t_schedule(std::size_t epoch, std::size_t epochs);

}  // namespace dft
