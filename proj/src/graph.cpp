#include "dft/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "dft/error.hpp"
#include "dft/linalg.hpp"
#include "dft/log.hpp"

namespace dft {

Graph::Graph(std::size_t n, std::vector<Edge> edges, Tensor features, std::optional<std::vector<int>> labels,
             std::optional<int> num_classes)
    : n_(n), features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (features_.rows() != n) {
        throw DimensionError("Graph: feature matrix has " + std::to_string(features_.rows()) + " rows for " +
                             std::to_string(n) + " nodes");
    }
    edges_.reserve(edges.size());
    for (Edge e : edges) {
        if (e.u >= n || e.v >= n) {
            throw ContractError("Graph: edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                ") has an endpoint >= n = " + std::to_string(n));
        }
        if (e.u == e.v) continue;
        if (e.u > e.v) std::swap(e.u, e.v);
        edges_.push_back(e);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    if (labels_) {
        if (labels_->size() != n) {
            throw DimensionError("Graph: " + std::to_string(labels_->size()) + " labels for " + std::to_string(n) +
                                 " nodes");
        }
        if (!num_classes_) {
            const int mx = labels_->empty() ? -1 : *std::max_element(labels_->begin(), labels_->end());
            num_classes_ = mx + 1;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const int y = (*labels_)[i];
            if (y < 0 || y >= *num_classes_) {
                throw ContractError("Graph: label " + std::to_string(y) + " of node " + std::to_string(i) +
                                    " outside [0, " + std::to_string(*num_classes_) + ")");
            }
        }
    }
}

const std::vector<int>& Graph::labels() const {
    if (!labels_) throw ContractError("Graph: labels requested from an unlabeled graph");
    return *labels_;
}

std::vector<std::vector<std::uint32_t>> Graph::adjacency_lists() const {
    std::vector<std::vector<std::uint32_t>> adj(n_);
    for (const Edge& e : edges_) {
        adj[e.u].push_back(e.v);
        adj[e.v].push_back(e.u);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

std::vector<std::size_t> Graph::degrees() const {
    std::vector<std::size_t> deg(n_, 0);
    for (const Edge& e : edges_) {
        ++deg[e.u];
        ++deg[e.v];
    }
    return deg;
}

Graph Graph::without_labels() const {
    Graph g = *this;
    g.labels_.reset();
    g.num_classes_.reset();
    return g;
}

Graph Graph::with_edges(std::vector<Edge> edges) const {
    return Graph(n_, std::move(edges), features_, labels_, num_classes_);
}

Graph Graph::with_labels(std::vector<int> labels, int num_classes) const {
    return Graph(n_, edges_, features_, std::move(labels), num_classes);
}

bool operator==(const Graph& a, const Graph& b) {
    if (a.n_ != b.n_ || a.edges_ != b.edges_ || a.labels_ != b.labels_ || a.num_classes_ != b.num_classes_) return false;
    if (a.features_.shape() != b.features_.shape()) return false;
    const auto fa = a.features_.values();
    const auto fb = b.features_.values();
    return fa.empty() || std::memcmp(fa.data(), fb.data(), fa.size_bytes()) == 0;
}

bool is_connected(const Graph& g) {
    const std::size_t n = g.num_nodes();
    if (n == 0) return true;
    const auto adj = g.adjacency_lists();
    std::vector<char> seen(n, 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                stack.push_back(v);
            }
        }
    }
    return count == n;
}

Tensor adjacency_matrix(const Graph& g) {
    const std::size_t n = g.num_nodes();
    Tensor a(n, n);
    auto v = a.mutable_values();
    for (const Edge& e : g.edges()) {
        v[e.u * n + e.v] = 1.0;
        v[e.v * n + e.u] = 1.0;
    }
    return a;
}

Tensor attention_mask(const Graph& g) {
    Tensor a = adjacency_matrix(g);
    const std::size_t n = g.num_nodes();
    auto v = a.mutable_values();
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return a;
}

Tensor normalize_operator(const Tensor& weights) {
    if (weights.rows() != weights.cols()) throw DimensionError("normalize_operator: not square " + weights.shape_str());
    const std::size_t n = weights.rows();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += weights(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(deg + 1.0);
    }
    Tensor out(n, n);
    auto v = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double w = weights(i, j) + (i == j ? 1.0 : 0.0);
            if (w != 0.0) v[i * n + j] = inv_sqrt[i] * w * inv_sqrt[j];
        }
    return out;
}

Tensor normalized_adjacency(const Graph& g) { return normalize_operator(adjacency_matrix(g)); }

Tensor laplacian_from(const Tensor& a_norm) {
    const std::size_t n = a_norm.rows();
    Tensor out(n, n);
    auto v = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = (i == j ? 1.0 : 0.0) - a_norm(i, j);
    return out;
}

Tensor ppmi_matrix(const Graph& g, const PpmiConfig& cfg, Rng& rng) {
    if (cfg.window < 1 || cfg.walk_len < cfg.window) {
        throw ContractError("ppmi_matrix: require walk_len >= window >= 1 (walk_len=" + std::to_string(cfg.walk_len) +
                            ", window=" + std::to_string(cfg.window) + ")");
    }
    const std::size_t n = g.num_nodes();
    Tensor out(n, n);
    if (g.num_edges() == 0) return out;

    const auto adj = g.adjacency_lists();
    std::vector<double> counts(n * n, 0.0);
    std::vector<std::uint32_t> walk;
    walk.reserve(cfg.walk_len);
    for (std::size_t start = 0; start < n; ++start) {
        if (adj[start].empty()) continue;
        for (std::size_t w = 0; w < cfg.walks_per_node; ++w) {
            walk.clear();
            walk.push_back(static_cast<std::uint32_t>(start));
            while (walk.size() < cfg.walk_len) {
                const auto& nb = adj[walk.back()];
                walk.push_back(nb[rng.index(nb.size())]);
            }
            for (std::size_t i = 0; i < walk.size(); ++i) {
                const std::size_t hi = std::min(walk.size(), i + cfg.window + 1);
                for (std::size_t j = i + 1; j < hi; ++j) {
                    counts[walk[i] * n + walk[j]] += 1.0;
                    counts[walk[j] * n + walk[i]] += 1.0;
                }
            }
        }
    }

    std::vector<double> row(n, 0.0), col(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double c = counts[i * n + j];
            row[i] += c;
            col[j] += c;
            total += c;
        }

    auto v = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double c = counts[i * n + j];
            if (c > 0.0) v[i * n + j] = std::max(0.0, std::log(c * total / (row[i] * col[j])));
        }
    // Exact symmetry; the counts are already symmetric so this only removes rounding.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = 0.5 * (v[i * n + j] + v[j * n + i]);
            v[i * n + j] = v[j * n + i] = s;
        }
    return out;
}

Tensor laplacian_positional_encoding(const Graph& g, std::size_t k) {
    const std::size_t n = g.num_nodes();
    if (k >= n) {
        throw ContractError("laplacian_positional_encoding: k = " + std::to_string(k) + " must be < n = " +
                            std::to_string(n));
    }
    const SymmetricEigen eig = symmetric_eigen(laplacian_from(normalized_adjacency(g)));
    constexpr double kZeroEigen = 1e-8;
    constexpr double kSignTol = 1e-10;

    std::size_t first = 0;
    while (first < n && eig.values[first] < kZeroEigen) ++first;
    if (first > 1) {
        logging::warn("laplacian_positional_encoding: " + std::to_string(first) +
                  " zero eigenvalues (disconnected graph); skipping all of them");
    }
    Tensor pe(n, k);
    auto out = pe.mutable_values();
    const std::size_t available = n - first;
    if (available < k) {
        logging::warn("laplacian_positional_encoding: only " + std::to_string(available) +
                  " non-trivial eigenvectors; padding with zero columns");
    }
    for (std::size_t j = 0; j < std::min(k, available); ++j) {
        const std::size_t src = first + j;
        double sign = 1.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double x = eig.vectors(r, src);
            if (std::abs(x) > kSignTol) {
                sign = x > 0 ? 1.0 : -1.0;
                break;
            }
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += eig.vectors(r, src) * eig.vectors(r, src);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < n; ++r) out[r * k + j] = sign * eig.vectors(r, src) / norm;
    }
    return pe;
}

GraphOperators build_operators(const Graph& g, const OperatorConfig& cfg, Rng& rng) {
    GraphOperators ops;
    ops.a_norm = normalized_adjacency(g);
    ops.laplacian = laplacian_from(ops.a_norm);
    ops.ppmi = ppmi_matrix(g, cfg.ppmi, rng);
    ops.ppmi_norm = normalize_operator(ops.ppmi);
    ops.ppmi_laplacian = laplacian_from(ops.ppmi_norm);
    ops.pos_enc = cfg.pe_dim > 0 ? laplacian_positional_encoding(g, cfg.pe_dim) : Tensor(g.num_nodes(), 0);
    ops.mask = attention_mask(g);
    return ops;
}

GraphOperators refresh_adjacency_operators(const Graph& perturbed, const GraphOperators& base) {
    GraphOperators ops = base;
    ops.a_norm = normalized_adjacency(perturbed);
    ops.laplacian = laplacian_from(ops.a_norm);
    ops.mask = attention_mask(perturbed);
    return ops;
}

Graph sbm_generate(const SbmConfig& cfg, Rng& rng) {
    if (!(0.0 <= cfg.p_out && cfg.p_out <= cfg.p_in && cfg.p_in <= 1.0)) {
        throw ContractError("sbm_generate: require 0 <= p_out <= p_in <= 1");
    }
    if (cfg.feat_means.size() != cfg.blocks.size()) {
        throw ContractError("sbm_generate: " + std::to_string(cfg.feat_means.size()) + " mean vectors for " +
                            std::to_string(cfg.blocks.size()) + " blocks");
    }
    const std::size_t dim = cfg.feat_means.empty() ? 0 : cfg.feat_means.front().size();
    for (const auto& m : cfg.feat_means) {
        if (m.size() != dim) throw ContractError("sbm_generate: mean vectors differ in length");
    }
    if (cfg.feat_std < 0.0) throw ContractError("sbm_generate: feat_std must be >= 0");

    std::vector<int> labels;
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) labels.insert(labels.end(), cfg.blocks[b], static_cast<int>(b));
    const std::size_t n = labels.size();

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? cfg.p_in : cfg.p_out;
            if (rng.uniform() < p) edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
        }

    Tensor features(n, dim);
    auto f = features.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d) {
            const double mu = cfg.feat_means[static_cast<std::size_t>(labels[i])][d];
            f[i * dim + d] = cfg.feat_std == 0.0 ? mu : rng.normal(mu, cfg.feat_std);
        }
    return Graph(n, std::move(edges), std::move(features), std::move(labels), static_cast<int>(cfg.blocks.size()));
}

std::vector<std::vector<double>> separated_class_means(std::size_t num_classes, std::size_t dim, double separation) {
    if (dim < num_classes) {
        throw ContractError("separated_class_means: dim " + std::to_string(dim) + " < classes " +
                            std::to_string(num_classes));
    }
    std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
    const double a = separation / std::sqrt(2.0);
    for (std::size_t c = 0; c < num_classes; ++c) means[c][c] = a;
    return means;
}

Graph erdos_renyi(std::size_t n, double p, Rng& rng, std::size_t feature_dim) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    return Graph(n, std::move(edges), Tensor(n, feature_dim));
}

Graph drop_edge(const Graph& g, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("drop_edge: rate must lie in [0, 1)");
    std::vector<Edge> kept;
    kept.reserve(g.num_edges());
    for (const Edge& e : g.edges()) {
        if (!rng.bernoulli(rate)) kept.push_back(e);
    }
    return g.with_edges(std::move(kept));
}

}  // namespace dft
