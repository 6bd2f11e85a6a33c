#pragma once

#include <vector>

#include "dft/tensor.hpp"

namespace dft {

struct SymmetricEigen {
    std::vector<double> values;  // ascending
    Tensor vectors;              // n x n, column j pairs with values[j]
};

// Dense symmetric eigendecomposition: Householder reduction to tridiagonal form
// followed by implicit QL with shifts. Only the lower triangle is read.
SymmetricEigen symmetric_eigen(const Tensor& a);

// a^p for square a and p >= 0 by repeated squaring.
Tensor matrix_power(const Tensor& a, unsigned p);

}  // namespace dft
