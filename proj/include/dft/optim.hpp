#pragma once

#include <cstddef>
#include <vector>

#include "dft/tensor.hpp"

namespace dft {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction over a fixed group of leaf parameters.
// A negative learning rate performs gradient ascent.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    // Requires a populated grad on every parameter.
    void step(double lr);
    void zero_grad();

    std::size_t steps() const { return step_; }
    const std::vector<Tensor>& params() const { return params_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::size_t step_ = 0;
    AdamConfig cfg_;
};

}  // namespace dft
