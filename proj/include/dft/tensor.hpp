#pragma once

// Dense row-major f64 matrices with tape-based reverse-mode differentiation.
//
// Every Tensor is rank 2: scalars are 1x1 and vectors are n x 1. A Tensor is a
// handle; copies share the same node, which is how parameters are shared
// between the source and target forward passes. clone() makes a deep copy.
//
// An op produces a tracked result whenever one of its operands is tracked (and
// no NoGradGuard is active). backward() walks the recorded graph in reverse
// topological order and accumulates d(loss)/d(leaf) into each tracked leaf.

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dft/rng.hpp"

namespace dft {

enum class OpKind {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    scale,
    add_scalar,
    hadamard,
    relu,
    masked_softmax,
    log,
    exp,
    trace,
    sq_frobenius,
    sum,
    mean_rows,
    mean_cols,
    batch_norm,
    dropout,
    row_norm,
    concat_cols,
    slice_cols,
};

std::string_view op_name(OpKind op);

namespace detail {

struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // empty when absent
    bool tracked = false;
    OpKind op = OpKind::leaf;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads self.grad and accumulates into the grads of tracked inputs.
    std::function<void(Node& self)> backward;
};

}  // namespace detail

class Tensor {
public:
    using Shape = std::array<std::size_t, 2>;

    Tensor();
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor identity(std::size_t n);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    // Column vector n x 1.
    static Tensor column(std::vector<double> values);
    // Tracked leaf.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const;
    std::size_t cols() const;
    std::size_t size() const;
    Shape shape() const { return {rows(), cols()}; }
    std::string shape_str() const;

    std::span<const double> values() const;
    // Direct write access. Only meaningful on leaves (initialisation, optimiser).
    std::span<double> mutable_values();
    double operator()(std::size_t r, std::size_t c) const;
    double item() const;

    bool tracked() const;
    bool is_leaf() const;
    OpKind op() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    // Untracked copy of the values.
    Tensor detach() const;
    // Deep copy that keeps the tracked flag but not the history.
    Tensor clone() const;
    // Same underlying node.
    bool same(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Populates grads of every tracked leaf reachable from scalar_loss (shape 1x1).
void backward(const Tensor& scalar_loss);

// --- op vocabulary -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// b may match a's shape, be a 1 x cols row, an rows x 1 column, or 1x1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// Untracked 0/1 indicator of a > 0.
Tensor step(const Tensor& a);
// Softmax along each row. Entries where mask == 0 are excluded (-inf) and come
// out exactly 0. A row with no unmasked entry falls back to its diagonal entry.
Tensor masked_row_softmax(const Tensor& a, const Tensor& mask);
Tensor row_softmax(const Tensor& a);
inline constexpr double kLogFloor = 1e-12;
// log(max(a, kLogFloor)).
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor trace(const Tensor& a);
Tensor sq_frobenius(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean over rows: 1 x cols.
Tensor mean_rows(const Tensor& a);
// Mean over columns: rows x 1.
Tensor mean_cols(const Tensor& a);
// Euclidean norm of each row: rows x 1. The subgradient at 0 is taken as 0.
Tensor row_norm(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-8;

    explicit BatchNormStats(std::size_t features = 0)
        : running_mean(features, 0.0), running_var(features, 1.0) {}
};

// Per-feature normalisation over rows with learnable gamma/beta (1 x cols).
// Train mode uses batch statistics and updates stats; eval mode uses the
// running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool train);

// Inverted dropout; identity when !train or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train);

}  // namespace dft
