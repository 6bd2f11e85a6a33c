#include "dft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "dft/error.hpp"
#include "dft/simd/kernels.hpp"

namespace dft {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

NodePtr make_node(std::size_t rows, std::size_t cols) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, 0.0);
    return n;
}

std::string shape_of(const Node& n) { return "[" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + "]"; }

[[noreturn]] void dim_error(OpKind op, const Node& a, const Node& b) {
    throw DimensionError(std::string(op_name(op)) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

[[noreturn]] void dim_error(OpKind op, const Node& a, const std::string& why) {
    throw DimensionError(std::string(op_name(op)) + ": " + why + " (shape " + shape_of(a) + ")");
}

const Node& ref(const Tensor& t) {
    if (!t.node()) throw ContractError("use of an empty Tensor");
    return *t.node();
}

// Wires inputs and backward onto out when any input is tracked.
Tensor finish(NodePtr out, OpKind op, std::vector<NodePtr> inputs, std::function<void(Node&)> bw) {
    out->op = op;
    bool any = false;
    for (const auto& in : inputs) any = any || in->tracked;
    if (any && g_grad_enabled) {
        out->tracked = true;
        out->inputs = std::move(inputs);
        out->backward = std::move(bw);
    }
    return Tensor(std::move(out));
}

double* grad_buffer(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
}

void accumulate(Node& n, const double* g) {
    if (!n.tracked) return;
    simd::kernels().axpy(1.0, g, grad_buffer(n), n.value.size());
}

enum class Bcast { same, row, col, scalar };

Bcast broadcast_kind(OpKind op, const Node& a, const Node& b) {
    if (a.rows == b.rows && a.cols == b.cols) return Bcast::same;
    if (b.rows == 1 && b.cols == 1) return Bcast::scalar;
    if (b.rows == 1 && b.cols == a.cols) return Bcast::row;
    if (b.cols == 1 && b.rows == a.rows) return Bcast::col;
    dim_error(op, a, b);
}

inline std::size_t bindex(Bcast k, std::size_t r, std::size_t c, std::size_t cols) {
    switch (k) {
        case Bcast::same: return r * cols + c;
        case Bcast::row: return c;
        case Bcast::col: return r;
        case Bcast::scalar: return 0;
    }
    return 0;
}

// Shared forward/backward for add and sub.
Tensor add_sub(const Tensor& ta, const Tensor& tb, double sign, OpKind op) {
    const Node& a = ref(ta);
    const Node& b = ref(tb);
    const Bcast k = broadcast_kind(op, a, b);
    auto out = make_node(a.rows, a.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) {
            const std::size_t i = r * a.cols + c;
            out->value[i] = a.value[i] + sign * b.value[bindex(k, r, c, a.cols)];
        }
    }
    return finish(out, op, {ta.node(), tb.node()}, [k, sign](Node& self) {
        Node& a = *self.inputs[0];
        Node& b = *self.inputs[1];
        accumulate(a, self.grad.data());
        if (!b.tracked) return;
        double* gb = grad_buffer(b);
        if (k == Bcast::same) {
            simd::kernels().axpy(sign, self.grad.data(), gb, self.grad.size());
            return;
        }
        for (std::size_t r = 0; r < self.rows; ++r) {
            for (std::size_t c = 0; c < self.cols; ++c) {
                gb[bindex(k, r, c, self.cols)] += sign * self.grad[r * self.cols + c];
            }
        }
    });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& ta, OpKind op, Fwd fwd, Deriv deriv) {
    const Node& a = ref(ta);
    auto out = make_node(a.rows, a.cols);
    for (std::size_t i = 0; i < a.value.size(); ++i) out->value[i] = fwd(a.value[i]);
    return finish(out, op, {ta.node()}, [deriv](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * deriv(a.value[i], self.value[i]);
    });
}

}  // namespace

std::string_view op_name(OpKind op) {
    switch (op) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::scale: return "scale";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::hadamard: return "hadamard";
        case OpKind::relu: return "relu";
        case OpKind::masked_softmax: return "masked_row_softmax";
        case OpKind::log: return "log";
        case OpKind::exp: return "exp";
        case OpKind::trace: return "trace";
        case OpKind::sq_frobenius: return "sq_frobenius";
        case OpKind::sum: return "sum";
        case OpKind::mean_rows: return "mean_rows";
        case OpKind::mean_cols: return "mean_cols";
        case OpKind::batch_norm: return "batch_norm";
        case OpKind::dropout: return "dropout";
        case OpKind::row_norm: return "row_norm";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::slice_cols: return "slice_cols";
    }
    return "unknown";
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor() : node_(make_node(0, 0)) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : node_(make_node(rows, cols)) {
    std::fill(node_->value.begin(), node_->value.end(), fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values) : node_(std::make_shared<Node>()) {
    if (values.size() != rows * cols) {
        throw DimensionError("Tensor: " + std::to_string(values.size()) + " values for shape [" +
                             std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, v); }

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("Tensor::from_rows: ragged rows");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(v));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(n, 1, std::move(values));
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
    Tensor t(rows, cols, std::move(values));
    t.node_->tracked = true;
    return t;
}

std::size_t Tensor::rows() const { return node_->rows; }
std::size_t Tensor::cols() const { return node_->cols; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::string Tensor::shape_str() const { return shape_of(*node_); }

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item(): tensor has shape " + shape_str());
    return node_->value[0];
}

bool Tensor::tracked() const { return node_->tracked; }
bool Tensor::is_leaf() const { return node_->op == OpKind::leaf; }
OpKind Tensor::op() const { return node_->op; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad; }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(rows(), cols(), node_->value); }

Tensor Tensor::clone() const {
    Tensor t(rows(), cols(), node_->value);
    t.node_->tracked = node_->tracked && is_leaf();
    return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// --- backward ---------------------------------------------------------------

void backward(const Tensor& scalar_loss) {
    const NodePtr& root = scalar_loss.node();
    if (!root || root->value.size() != 1) {
        throw ContractError("backward: loss must have shape [1x1], got " + scalar_loss.shape_str());
    }
    if (!root->tracked) throw ContractError("backward: loss is not tracked (no tracked leaf reachable)");

    // Iterative post-order DFS over tracked nodes.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->tracked && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (n->op != OpKind::leaf) {
            n->grad.assign(n->value.size(), 0.0);
        } else if (n->grad.empty()) {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->op == OpKind::leaf) continue;
        n->backward(*n);
        // Intermediate adjoints are not needed once propagated.
        std::vector<double>().swap(n->grad);
    }
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    const Node& a = ref(ta);
    const Node& b = ref(tb);
    if (a.cols != b.rows) dim_error(OpKind::matmul, a, b);
    auto out = make_node(a.rows, b.cols);
    simd::gemm(a.rows, a.cols, b.cols, a.value.data(), b.value.data(), out->value.data());
    return finish(out, OpKind::matmul, {ta.node(), tb.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        Node& b = *self.inputs[1];
        const std::size_t m = a.rows, k = a.cols, n = b.cols;
        if (a.tracked) {
            std::vector<double> tmp(m * k);
            simd::gemm_nt(m, n, k, self.grad.data(), b.value.data(), tmp.data());
            accumulate(a, tmp.data());
        }
        if (b.tracked) {
            std::vector<double> tmp(k * n);
            simd::gemm_tn(k, m, n, a.value.data(), self.grad.data(), tmp.data());
            accumulate(b, tmp.data());
        }
    });
}

Tensor transpose(const Tensor& ta) {
    const Node& a = ref(ta);
    auto out = make_node(a.cols, a.rows);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out->value[c * a.rows + r] = a.value[r * a.cols + c];
    return finish(out, OpKind::transpose, {ta.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c) ga[r * a.cols + c] += self.grad[c * a.rows + r];
    });
}

Tensor add(const Tensor& a, const Tensor& b) { return add_sub(a, b, 1.0, OpKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_sub(a, b, -1.0, OpKind::sub); }

Tensor hadamard(const Tensor& ta, const Tensor& tb) {
    const Node& a = ref(ta);
    const Node& b = ref(tb);
    const Bcast k = broadcast_kind(OpKind::hadamard, a, b);
    auto out = make_node(a.rows, a.cols);
    if (k == Bcast::same) {
        simd::kernels().mul(a.value.data(), b.value.data(), out->value.data(), a.value.size());
    } else {
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c)
                out->value[r * a.cols + c] = a.value[r * a.cols + c] * b.value[bindex(k, r, c, a.cols)];
    }
    return finish(out, OpKind::hadamard, {ta.node(), tb.node()}, [k](Node& self) {
        Node& a = *self.inputs[0];
        Node& b = *self.inputs[1];
        const std::size_t cols = self.cols;
        if (a.tracked) {
            double* ga = grad_buffer(a);
            for (std::size_t r = 0; r < self.rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    ga[r * cols + c] += self.grad[r * cols + c] * b.value[bindex(k, r, c, cols)];
        }
        if (b.tracked) {
            double* gb = grad_buffer(b);
            for (std::size_t r = 0; r < self.rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    gb[bindex(k, r, c, cols)] += self.grad[r * cols + c] * a.value[r * cols + c];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, OpKind::scale, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, OpKind::add_scalar, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    return unary(a, OpKind::relu, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor step(const Tensor& ta) {
    const Node& a = ref(ta);
    Tensor out(a.rows, a.cols);
    auto v = out.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value[i] > 0.0 ? 1.0 : 0.0;
    return out;
}

Tensor log(const Tensor& a) {
    return unary(a, OpKind::log, [](double x) { return std::log(std::max(x, kLogFloor)); },
                 [](double x, double) { return x > kLogFloor ? 1.0 / x : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, OpKind::exp, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor masked_row_softmax(const Tensor& ta, const Tensor& tmask) {
    const Node& a = ref(ta);
    const Node& m = ref(tmask);
    if (m.rows != a.rows || m.cols != a.cols) dim_error(OpKind::masked_softmax, a, m);
    auto out = make_node(a.rows, a.cols);
    const std::size_t cols = a.cols;
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* x = a.value.data() + r * cols;
        const double* mk = m.value.data() + r * cols;
        double* y = out->value.data() + r * cols;
        bool any = false;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) {
            if (mk[c] != 0.0) {
                any = true;
                mx = std::max(mx, x[c]);
            }
        }
        if (!any) {
            if (r >= cols) dim_error(OpKind::masked_softmax, a, "row " + std::to_string(r) + " fully masked");
            y[r] = 1.0;
            continue;
        }
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (mk[c] != 0.0) {
                y[c] = std::exp(x[c] - mx);
                z += y[c];
            }
        }
        for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
    }
    return finish(out, OpKind::masked_softmax, {ta.node(), tmask.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        const std::size_t cols = self.cols;
        for (std::size_t r = 0; r < self.rows; ++r) {
            const double* y = self.value.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            const double dotgy = simd::kernels().dot(g, y, cols);
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y[c] * (g[c] - dotgy);
        }
    });
}

Tensor row_softmax(const Tensor& a) { return masked_row_softmax(a, Tensor(a.rows(), a.cols(), 1.0)); }

Tensor trace(const Tensor& ta) {
    const Node& a = ref(ta);
    if (a.rows != a.cols) dim_error(OpKind::trace, a, "matrix is not square");
    auto out = make_node(1, 1);
    for (std::size_t i = 0; i < a.rows; ++i) out->value[0] += a.value[i * a.cols + i];
    return finish(out, OpKind::trace, {ta.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t i = 0; i < a.rows; ++i) ga[i * a.cols + i] += self.grad[0];
    });
}

Tensor sq_frobenius(const Tensor& ta) {
    const Node& a = ref(ta);
    auto out = make_node(1, 1);
    out->value[0] = simd::kernels().dot(a.value.data(), a.value.data(), a.value.size());
    return finish(out, OpKind::sq_frobenius, {ta.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        simd::kernels().axpy(2.0 * self.grad[0], a.value.data(), grad_buffer(a), a.value.size());
    });
}

Tensor sum(const Tensor& ta) {
    const Node& a = ref(ta);
    auto out = make_node(1, 1);
    out->value[0] = simd::kernels().sum(a.value.data(), a.value.size());
    return finish(out, OpKind::sum, {ta.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t i = 0; i < a.value.size(); ++i) ga[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& ta) {
    const Node& a = ref(ta);
    if (a.rows == 0) dim_error(OpKind::mean_rows, a, "no rows");
    auto out = make_node(1, a.cols);
    const double inv = 1.0 / static_cast<double>(a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) simd::kernels().axpy(inv, a.value.data() + r * a.cols, out->value.data(), a.cols);
    return finish(out, OpKind::mean_rows, {ta.node()}, [inv](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t r = 0; r < a.rows; ++r) simd::kernels().axpy(inv, self.grad.data(), ga + r * a.cols, a.cols);
    });
}

Tensor mean_cols(const Tensor& ta) {
    const Node& a = ref(ta);
    if (a.cols == 0) dim_error(OpKind::mean_cols, a, "no columns");
    auto out = make_node(a.rows, 1);
    const double inv = 1.0 / static_cast<double>(a.cols);
    for (std::size_t r = 0; r < a.rows; ++r) out->value[r] = inv * simd::kernels().sum(a.value.data() + r * a.cols, a.cols);
    return finish(out, OpKind::mean_cols, {ta.node()}, [inv](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c) ga[r * a.cols + c] += inv * self.grad[r];
    });
}

Tensor row_norm(const Tensor& ta) {
    const Node& a = ref(ta);
    auto out = make_node(a.rows, 1);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* x = a.value.data() + r * a.cols;
        out->value[r] = std::sqrt(simd::kernels().dot(x, x, a.cols));
    }
    return finish(out, OpKind::row_norm, {ta.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t r = 0; r < a.rows; ++r) {
            const double nrm = self.value[r];
            if (nrm == 0.0) continue;
            simd::kernels().axpy(self.grad[r] / nrm, a.value.data() + r * a.cols, ga + r * a.cols, a.cols);
        }
    });
}

Tensor concat_cols(const Tensor& ta, const Tensor& tb) {
    const Node& a = ref(ta);
    const Node& b = ref(tb);
    if (a.rows != b.rows) dim_error(OpKind::concat_cols, a, b);
    const std::size_t cols = a.cols + b.cols;
    auto out = make_node(a.rows, cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        std::copy_n(a.value.data() + r * a.cols, a.cols, out->value.data() + r * cols);
        std::copy_n(b.value.data() + r * b.cols, b.cols, out->value.data() + r * cols + a.cols);
    }
    return finish(out, OpKind::concat_cols, {ta.node(), tb.node()}, [](Node& self) {
        Node& a = *self.inputs[0];
        Node& b = *self.inputs[1];
        const std::size_t cols = self.cols;
        for (std::size_t r = 0; r < self.rows; ++r) {
            const double* g = self.grad.data() + r * cols;
            if (a.tracked) simd::kernels().axpy(1.0, g, grad_buffer(a) + r * a.cols, a.cols);
            if (b.tracked) simd::kernels().axpy(1.0, g + a.cols, grad_buffer(b) + r * b.cols, b.cols);
        }
    });
}

Tensor slice_cols(const Tensor& ta, std::size_t start, std::size_t count) {
    const Node& a = ref(ta);
    if (start + count > a.cols) {
        dim_error(OpKind::slice_cols, a,
                  "columns [" + std::to_string(start) + ", " + std::to_string(start + count) + ") out of range");
    }
    auto out = make_node(a.rows, count);
    for (std::size_t r = 0; r < a.rows; ++r)
        std::copy_n(a.value.data() + r * a.cols + start, count, out->value.data() + r * count);
    return finish(out, OpKind::slice_cols, {ta.node()}, [start](Node& self) {
        Node& a = *self.inputs[0];
        if (!a.tracked) return;
        double* ga = grad_buffer(a);
        for (std::size_t r = 0; r < self.rows; ++r)
            simd::kernels().axpy(1.0, self.grad.data() + r * self.cols, ga + r * a.cols + start, self.cols);
    });
}

Tensor batch_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta, BatchNormStats& stats, bool train) {
    const Node& x = ref(tx);
    const Node& g = ref(tgamma);
    const Node& b = ref(tbeta);
    const std::size_t n = x.rows, d = x.cols;
    if (g.rows != 1 || g.cols != d) dim_error(OpKind::batch_norm, x, g);
    if (b.rows != 1 || b.cols != d) dim_error(OpKind::batch_norm, x, b);
    if (stats.running_mean.size() != d || stats.running_var.size() != d) {
        dim_error(OpKind::batch_norm, x, "running statistics sized " + std::to_string(stats.running_mean.size()));
    }
    if (n == 0) dim_error(OpKind::batch_norm, x, "no rows");

    std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
    if (train) {
        std::vector<double> var(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) mu[c] += x.value[r * d + c];
        for (auto& m : mu) m /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double dv = x.value[r * d + c] - mu[c];
                var[c] += dv * dv;
            }
        for (std::size_t c = 0; c < d; ++c) {
            var[c] /= static_cast<double>(n);
            inv_std[c] = 1.0 / std::sqrt(var[c] + stats.eps);
            const double unbiased = n > 1 ? var[c] * static_cast<double>(n) / static_cast<double>(n - 1) : var[c];
            stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu[c];
            stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < d; ++c) {
            mu[c] = stats.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
        }
    }

    std::vector<double> xhat(n * d);
    auto out = make_node(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            const std::size_t i = r * d + c;
            xhat[i] = (x.value[i] - mu[c]) * inv_std[c];
            out->value[i] = g.value[c] * xhat[i] + b.value[c];
        }

    return finish(out, OpKind::batch_norm, {tx.node(), tgamma.node(), tbeta.node()},
                  [train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                      Node& x = *self.inputs[0];
                      Node& g = *self.inputs[1];
                      Node& b = *self.inputs[2];
                      const std::size_t n = self.rows, d = self.cols;
                      const double* dy = self.grad.data();
                      if (g.tracked || b.tracked) {
                          double* gg = g.tracked ? grad_buffer(g) : nullptr;
                          double* gb = b.tracked ? grad_buffer(b) : nullptr;
                          for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < d; ++c) {
                                  const std::size_t i = r * d + c;
                                  if (gg) gg[c] += dy[i] * xhat[i];
                                  if (gb) gb[c] += dy[i];
                              }
                      }
                      if (!x.tracked) return;
                      double* gx = grad_buffer(x);
                      if (!train) {
                          for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < d; ++c)
                                  gx[r * d + c] += dy[r * d + c] * g.value[c] * inv_std[c];
                          return;
                      }
                      // dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                      std::vector<double> s1(d, 0.0), s2(d, 0.0);
                      for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t c = 0; c < d; ++c) {
                              const std::size_t i = r * d + c;
                              const double dxh = dy[i] * g.value[c];
                              s1[c] += dxh;
                              s2[c] += dxh * xhat[i];
                          }
                      const double nn = static_cast<double>(n);
                      for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t c = 0; c < d; ++c) {
                              const std::size_t i = r * d + c;
                              const double dxh = dy[i] * g.value[c];
                              gx[i] += inv_std[c] / nn * (nn * dxh - s1[c] - xhat[i] * s2[c]);
                          }
                  });
}

Tensor dropout(const Tensor& tx, double rate, Rng& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return tx;
    const Node& x = ref(tx);
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value.size());
    auto out = make_node(x.rows, x.cols);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
        out->value[i] = x.value[i] * mask[i];
    }
    return finish(out, OpKind::dropout, {tx.node()}, [mask = std::move(mask)](Node& self) {
        Node& x = *self.inputs[0];
        if (!x.tracked) return;
        double* gx = grad_buffer(x);
        for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
    });
}

}  // namespace dft
