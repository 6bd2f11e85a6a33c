#include "dft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dft/error.hpp"
#include "dft/linalg.hpp"
#include "dft/simd/kernels.hpp"

namespace dft {

namespace {

constexpr std::size_t kTile = 1024;

void check_labels(std::span<const int> labels, std::size_t n, const char* who) {
    if (labels.size() != n) {
        throw DimensionError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " rows");
    }
    for (int l : labels) {
        if (l < 0) throw ContractError(std::string(who) + ": negative label " + std::to_string(l));
    }
}

int label_count(std::span<const int> labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

const double* row_ptr(const Tensor& t, std::size_t i) { return t.values().data() + i * t.cols(); }

}  // namespace

F1Scores f1_scores(std::span<const int> pred, std::span<const int> truth, int num_classes) {
    if (pred.empty()) throw ContractError("f1_scores: empty input");
    if (pred.size() != truth.size()) {
        throw DimensionError("f1_scores: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " labels");
    }
    if (num_classes < 1) throw ContractError("f1_scores: num_classes must be >= 1");
    const auto c = static_cast<std::size_t>(num_classes);
    std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (int v : {pred[i], truth[i]}) {
            if (v < 0 || v >= num_classes) {
                throw ContractError("f1_scores: class " + std::to_string(v) + " outside [0, " +
                                    std::to_string(num_classes) + ")");
            }
        }
        const auto p = static_cast<std::size_t>(pred[i]);
        const auto t = static_cast<std::size_t>(truth[i]);
        if (p == t) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    F1Scores out;
    out.precision.assign(c, 0.0);
    out.recall.assign(c, 0.0);
    out.f1.assign(c, 0.0);
    out.present.assign(c, false);
    std::size_t sum_tp = 0, sum_fp = 0, sum_fn = 0, classes = 0;
    double macro = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        sum_tp += tp[k];
        sum_fp += fp[k];
        sum_fn += fn[k];
        if (tp[k] + fp[k] + fn[k] == 0) continue;
        out.present[k] = true;
        const auto tpk = static_cast<double>(tp[k]);
        if (tp[k] + fp[k] > 0) out.precision[k] = tpk / static_cast<double>(tp[k] + fp[k]);
        if (tp[k] + fn[k] > 0) out.recall[k] = tpk / static_cast<double>(tp[k] + fn[k]);
        out.f1[k] = tpk / (tpk + 0.5 * static_cast<double>(fp[k] + fn[k]));
        macro += out.f1[k];
        ++classes;
    }
    out.macro = macro / static_cast<double>(classes);
    out.micro = static_cast<double>(sum_tp) /
                (static_cast<double>(sum_tp) + 0.5 * static_cast<double>(sum_fp + sum_fn));
    return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const double* r = row_ptr(probs, i);
        out[i] = static_cast<int>(std::max_element(r, r + probs.cols()) - r);
    }
    return out;
}

double icdr(const Tensor& z, std::span<const int> labels) {
    const std::size_t n = z.rows(), d = z.cols();
    check_labels(labels, n, "icdr");
    if (n < 2) throw ContractError("icdr: need at least 2 nodes");
    const auto& kt = simd::kernels();
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    // Row tiles keep the working set bounded; pairs are summed in a fixed order.
    for (std::size_t i0 = 0; i0 < n; i0 += kTile) {
        const std::size_t i1 = std::min(n, i0 + kTile);
        for (std::size_t i = i0; i < i1; ++i) {
            const double* a = row_ptr(z, i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dist = std::sqrt(kt.sq_dist(a, row_ptr(z, j), d));
                if (labels[i] == labels[j]) {
                    intra += dist;
                    ++n_intra;
                } else {
                    inter += dist;
                    ++n_inter;
                }
            }
        }
    }
    if (n_intra == 0) throw ContractError("icdr: no intra-class pairs (every class is a singleton)");
    if (n_inter == 0) throw ContractError("icdr: no inter-class pairs (only one class present)");
    const double mi = intra / static_cast<double>(n_intra);
    const double me = inter / static_cast<double>(n_inter);
    if (mi + me == 0.0) throw ContractError("icdr: all points coincide");
    return mi / (mi + me);
}

double silhouette(const Tensor& z, std::span<const int> labels) {
    const std::size_t n = z.rows(), d = z.cols();
    check_labels(labels, n, "silhouette");
    const auto c = static_cast<std::size_t>(label_count(labels));
    std::vector<std::size_t> sizes(c, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    std::size_t nonempty = 0;
    for (auto s : sizes) nonempty += s > 0 ? 1 : 0;
    if (nonempty < 2) throw ContractError("silhouette: need at least 2 classes");

    const auto& kt = simd::kernels();
    std::vector<double> sums(c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto li = static_cast<std::size_t>(labels[i]);
        if (sizes[li] < 2) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        const double* a = row_ptr(z, i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[static_cast<std::size_t>(labels[j])] += std::sqrt(kt.sq_dist(a, row_ptr(z, j), d));
        }
        const double ai = sums[li] / static_cast<double>(sizes[li] - 1);
        double bi = INFINITY;
        for (std::size_t k = 0; k < c; ++k) {
            if (k != li && sizes[k] > 0) bi = std::min(bi, sums[k] / static_cast<double>(sizes[k]));
        }
        const double m = std::max(ai, bi);
        total += m > 0.0 ? (bi - ai) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

std::vector<int> knn_majority(const Tensor& queries, const Tensor& pool, std::span<const int> pool_labels,
                              std::size_t k) {
    if (queries.cols() != pool.cols()) {
        throw DimensionError("knn: queries " + queries.shape_str() + " and pool " + pool.shape_str() + " differ");
    }
    check_labels(pool_labels, pool.rows(), "knn");
    if (k == 0 || k > pool.rows()) {
        throw ContractError("knn: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(pool.rows()) + "]");
    }
    const std::size_t d = pool.cols();
    const auto c = static_cast<std::size_t>(label_count(pool_labels));
    const auto& kt = simd::kernels();
    std::vector<std::pair<double, std::size_t>> dist(pool.rows());
    std::vector<std::size_t> votes(c);
    std::vector<int> out(queries.rows());
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const double* a = row_ptr(queries, q);
        for (std::size_t j = 0; j < pool.rows(); ++j) dist[j] = {kt.sq_dist(a, row_ptr(pool, j), d), j};
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t j = 0; j < k; ++j) ++votes[static_cast<std::size_t>(pool_labels[dist[j].second])];
        out[q] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    return out;
}

double covariate_shift_probe(const Tensor& x_s, std::span<const int> y_s, const Tensor& x_t,
                             std::span<const int> y_t, std::size_t k) {
    if (k > std::min(x_s.rows(), x_t.rows())) {
        throw ContractError("covariate_shift_probe: k = " + std::to_string(k) + " exceeds min(n_s, n_t) = " +
                            std::to_string(std::min(x_s.rows(), x_t.rows())));
    }
    std::size_t agree = 0;
    for (const Tensor* queries : {&x_s, &x_t}) {
        const auto from_s = knn_majority(*queries, x_s, y_s, k);
        const auto from_t = knn_majority(*queries, x_t, y_t, k);
        for (std::size_t i = 0; i < from_s.size(); ++i) agree += from_s[i] == from_t[i] ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(x_s.rows() + x_t.rows());
}

std::vector<int> shuffled_labels(std::span<const int> labels, Rng& rng) {
    std::vector<int> out(labels.begin(), labels.end());
    // Fisher-Yates with the project's generator so results depend only on the seed.
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.index(i)]);
    return out;
}

double expected_correlation(const Tensor& a_tilde, unsigned k, std::size_t d) {
    if (a_tilde.rows() != a_tilde.cols()) throw DimensionError("expected_correlation: operator must be square");
    const Tensor b = matrix_power(a_tilde, 2 * k);
    double sq = 0.0;
    for (double v : b.values()) sq += v * v;
    double tr = 0.0;
    for (std::size_t i = 0; i < b.rows(); ++i) tr += b(i, i);
    const auto dd = static_cast<double>(d);
    return dd * ((dd + 1.0) * sq + tr * tr);
}

namespace {

// |H H^T|_F^2 evaluated as |H^T H|_F^2 (D x D instead of N x N).
double correlation_of(const std::vector<double>& h, std::size_t n, std::size_t d) {
    std::vector<double> g(d * d);
    simd::gemm_tn(d, n, d, h.data(), h.data(), g.data());
    double acc = 0.0;
    for (double v : g) acc += v * v;
    return acc;
}

McEstimate finish(double sum, double sum_sq, std::size_t samples) {
    const auto s = static_cast<double>(samples);
    const double mean = sum / s;
    const double var = samples > 1 ? std::max(0.0, (sum_sq - s * mean * mean) / (s - 1.0)) : 0.0;
    return {mean, std::sqrt(var / s)};
}

}  // namespace

McEstimate monte_carlo_correlation(const Tensor& a_tilde, unsigned k, std::size_t d, std::size_t samples, Rng& rng) {
    if (a_tilde.rows() != a_tilde.cols()) throw DimensionError("monte_carlo_correlation: operator must be square");
    if (samples < 1000) {
        throw ContractError("monte_carlo_correlation: need at least 1000 samples, got " + std::to_string(samples));
    }
    const std::size_t n = a_tilde.rows();
    const Tensor p = matrix_power(a_tilde, k);
    std::vector<double> x(n * d), h(n * d);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (auto& v : x) v = rng.normal();
        simd::gemm(n, n, d, p.values().data(), x.data(), h.data());
        const double v = correlation_of(h, n, d);
        sum += v;
        sum_sq += v * v;
    }
    return finish(sum, sum_sq, samples);
}

std::vector<McEstimate> glorot_correlation_curve(const Tensor& op, unsigned depth_max, std::size_t d,
                                                 std::size_t samples, Rng& rng) {
    if (op.rows() != op.cols()) throw DimensionError("glorot_correlation_curve: operator must be square");
    if (samples < 2) throw ContractError("glorot_correlation_curve: need at least 2 samples");
    const std::size_t n = op.rows();
    const double limit = std::sqrt(6.0 / static_cast<double>(2 * d));
    std::vector<double> sum(depth_max + 1, 0.0), sum_sq(depth_max + 1, 0.0);
    std::vector<double> h(n * d), ah(n * d), w(d * d);
    for (std::size_t s = 0; s < samples; ++s) {
        for (auto& v : h) v = rng.normal();
        for (unsigned k = 0; k <= depth_max; ++k) {
            if (k > 0) {
                for (auto& v : w) v = rng.uniform(-limit, limit);
                simd::gemm(n, n, d, op.values().data(), h.data(), ah.data());
                simd::gemm(n, d, d, ah.data(), w.data(), h.data());
            }
            const double v = correlation_of(h, n, d);
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    std::vector<McEstimate> out;
    for (unsigned k = 0; k <= depth_max; ++k) out.push_back(finish(sum[k], sum_sq[k], samples));
    return out;
}

MetricsReport evaluate(std::span<const int> pred, std::span<const int> truth, int num_classes, const Tensor* z) {
    MetricsReport r;
    r.num_nodes = pred.size();
    r.num_classes = num_classes;
    r.f1 = f1_scores(pred, truth, num_classes);
    if (z) {
        try {
            r.icdr = icdr(*z, truth);
        } catch (const ContractError&) {
        }
        try {
            r.silhouette = silhouette(*z, truth);
        } catch (const ContractError&) {
        }
    }
    return r;
}

}  // namespace dft
