#include "dft/optim.hpp"

#include <cmath>

#include "dft/error.hpp"

namespace dft {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.tracked() || !p.is_leaf()) throw ContractError("Adam: parameters must be tracked leaves");
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) {
            throw ContractError("Adam::step: parameter " + std::to_string(i) + " " + params_[i].shape_str() +
                                " has no gradient");
        }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].mutable_values();
        auto g = params_[i].grad();
        auto& m = first_[i];
        auto& v = second_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace dft
