#include "dft/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dft/error.hpp"

namespace dft {

Tensor loss_source(const Tensor& y_hat, std::span<const int> labels) {
    const std::size_t n = y_hat.rows(), c = y_hat.cols();
    if (labels.size() != n) {
        throw DimensionError("loss_source: " + std::to_string(labels.size()) + " labels for predictions " +
                             y_hat.shape_str());
    }
    if (n == 0) throw ContractError("loss_source: empty batch");
    std::vector<double> onehot(n * c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw ContractError("loss_source: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(c) + ")");
        }
        onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    Tensor y(n, c, std::move(onehot));
    return scale(sum(hadamard(y, log(y_hat))), -1.0 / static_cast<double>(n));
}

Tensor loss_target_entropy(const Tensor& y_hat) {
    if (y_hat.rows() == 0) throw ContractError("loss_target_entropy: empty batch");
    return scale(sum(hadamard(y_hat, log(y_hat))), -1.0 / static_cast<double>(y_hat.rows()));
}

Tensor loss_critic(const Tensor& q_s, const Tensor& q_t) {
    if (q_s.size() == 0 || q_t.size() == 0) throw ContractError("loss_critic: empty critic scores");
    return sub(mean(q_s), mean(q_t));
}

namespace {

Tensor penalty_term(const CriticParams& critic, const Tensor& z) {
    Tensor g = critic_input_gradient(z, critic);
    Tensor dev = add_scalar(row_norm(g), -1.0);
    return mean(hadamard(dev, dev));
}

}  // namespace

Tensor gradient_penalty(const CriticParams& critic, const Tensor& z_s, const Tensor& z_t, GpMode mode, Rng* rng) {
    if (z_s.cols() != z_t.cols()) {
        throw DimensionError("gradient_penalty: z_s " + z_s.shape_str() + " and z_t " + z_t.shape_str() + " differ");
    }
    if (mode == GpMode::at_samples) return add(penalty_term(critic, z_s), penalty_term(critic, z_t));

    if (!rng) throw ContractError("gradient_penalty: interpolate mode needs an Rng");
    if (z_t.rows() == 0) throw ContractError("gradient_penalty: empty target batch");
    const std::size_t n = z_s.rows(), d = z_s.cols();
    std::vector<double> pts(n * d);
    const auto s = z_s.values();
    const auto t = z_t.values();
    for (std::size_t i = 0; i < n; ++i) {
        const double e = rng->uniform();
        const std::size_t j = i % z_t.rows();
        for (std::size_t k = 0; k < d; ++k) {
            pts[i * d + k] = s[i * d + k] + e * (t[j * d + k] - s[i * d + k]);
        }
    }
    return penalty_term(critic, Tensor(n, d, std::move(pts)));
}

double mmd_bandwidth(const Tensor& z_s, const Tensor& z_t) {
    const std::size_t d = z_s.cols();
    const std::size_t n = z_s.rows() + z_t.rows();
    auto row = [&](std::size_t i) {
        return i < z_s.rows() ? z_s.values().subspan(i * d, d) : z_t.values().subspan((i - z_s.rows()) * d, d);
    };
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
            dists.push_back(std::sqrt(acc));
        }
    }
    if (dists.empty()) return 1.0;
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double med = *mid;
    if (dists.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(dists.begin(), mid));
    }
    return med > 0.0 ? med : 1.0;
}

namespace {

// mean over (i, j) of k(a_i, b_j)
Tensor mean_kernel(const Tensor& a, const Tensor& b, double inv_two_h2) {
    const double d = static_cast<double>(a.cols());
    Tensor sa = scale(mean_cols(hadamard(a, a)), d);             // n_a x 1
    Tensor sb = transpose(scale(mean_cols(hadamard(b, b)), d));  // 1 x n_b
    Tensor sq = add(add(scale(matmul(a, transpose(b)), -2.0), sa), sb);
    return mean(exp(scale(sq, -inv_two_h2)));
}

}  // namespace

Tensor loss_mmd(const Tensor& z_s, const Tensor& z_t) {
    if (z_s.cols() != z_t.cols()) {
        throw DimensionError("loss_mmd: z_s " + z_s.shape_str() + " and z_t " + z_t.shape_str() + " differ");
    }
    if (z_s.rows() == 0 || z_t.rows() == 0) throw ContractError("loss_mmd: empty batch");
    return loss_mmd(z_s, z_t, mmd_bandwidth(z_s, z_t));
}

Tensor loss_mmd(const Tensor& z_s, const Tensor& z_t, double h) {
    if (z_s.cols() != z_t.cols()) {
        throw DimensionError("loss_mmd: z_s " + z_s.shape_str() + " and z_t " + z_t.shape_str() + " differ");
    }
    if (z_s.rows() == 0 || z_t.rows() == 0) throw ContractError("loss_mmd: empty batch");
    if (!(h > 0.0)) throw ContractError("loss_mmd: bandwidth must be > 0");
    const double inv = 1.0 / (2.0 * h * h);
    Tensor kss = mean_kernel(z_s, z_s, inv);
    Tensor ktt = mean_kernel(z_t, z_t, inv);
    Tensor kst = mean_kernel(z_s, z_t, inv);
    return sub(add(kss, ktt), scale(kst, 2.0));
}

double lambda_t_schedule(std::size_t epoch, std::size_t epochs) {
    if (epochs == 0 || epoch > epochs) {
        throw ContractError("lambda_t_schedule: need 0 <= epoch <= epochs and epochs >= 1");
    }
    return static_cast<double>(epoch) / (static_cast<double>(epochs) * 100.0);
}

}  // namespace dft
