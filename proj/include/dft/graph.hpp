#pragma once

// Undirected attributed graphs and the dense operators derived from them.

#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

#include "dft/rng.hpp"
#include "dft/tensor.hpp"

namespace dft {

struct Edge {
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    auto operator<=>(const Edge&) const = default;
};

// Immutable after construction. Edges are canonicalised: u < v, sorted,
// deduplicated, self-loops dropped.
class Graph {
public:
    Graph() = default;
    // Throws ContractError on out-of-range endpoints or labels and
    // DimensionError when features.rows() != n. When labels are given without
    // num_classes, C is max(label) + 1.
    Graph(std::size_t n, std::vector<Edge> edges, Tensor features, std::optional<std::vector<int>> labels = std::nullopt,
          std::optional<int> num_classes = std::nullopt);

    std::size_t num_nodes() const { return n_; }
    std::size_t num_edges() const { return edges_.size(); }
    std::size_t feature_dim() const { return features_.cols(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Tensor& features() const { return features_; }
    bool has_labels() const { return labels_.has_value(); }
    const std::vector<int>& labels() const;
    std::optional<int> num_classes() const { return num_classes_; }

    std::vector<std::vector<std::uint32_t>> adjacency_lists() const;
    std::vector<std::size_t> degrees() const;

    Graph without_labels() const;
    Graph with_edges(std::vector<Edge> edges) const;
    Graph with_labels(std::vector<int> labels, int num_classes) const;

    friend bool operator==(const Graph& a, const Graph& b);

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    Tensor features_;
    std::optional<std::vector<int>> labels_;
    std::optional<int> num_classes_;
};

bool is_connected(const Graph& g);

// Dense 0/1 adjacency without self-loops.
Tensor adjacency_matrix(const Graph& g);
// A + I: 0/1 mask for neighbour-restricted attention.
Tensor attention_mask(const Graph& g);

// (D+I)^{-1/2} (A+I) (D+I)^{-1/2}
Tensor normalized_adjacency(const Graph& g);
// Same normalisation for a nonnegative symmetric weight matrix W:
// (D_W+I)^{-1/2} (W+I) (D_W+I)^{-1/2} with D_W the row sums of W.
Tensor normalize_operator(const Tensor& weights);
// I - a_norm
Tensor laplacian_from(const Tensor& a_norm);

struct PpmiConfig {
    std::size_t walk_len = 40;
    std::size_t walks_per_node = 10;
    std::size_t window = 5;
};

// Symmetrised positive pointwise mutual information of random-walk
// co-occurrences within `window` steps. Isolated nodes produce no pairs; an
// edgeless graph yields the zero matrix.
Tensor ppmi_matrix(const Graph& g, const PpmiConfig& cfg, Rng& rng);

// Eigenvectors of the self-loop normalised Laplacian for the k smallest
// eigenvalues above 1e-8 (the trivial one is skipped), unit-norm with the first
// entry of magnitude > 1e-10 made positive. Requires k < n.
Tensor laplacian_positional_encoding(const Graph& g, std::size_t k);

struct GraphOperators {
    Tensor a_norm;
    Tensor laplacian;
    Tensor ppmi;            // raw symmetrised PPMI, >= 0
    Tensor ppmi_norm;       // normalize_operator(ppmi)
    Tensor ppmi_laplacian;  // I - ppmi_norm
    Tensor pos_enc;         // n x k
    Tensor mask;            // A + I
};

struct OperatorConfig {
    PpmiConfig ppmi;
    std::size_t pe_dim = 2;
};

GraphOperators build_operators(const Graph& g, const OperatorConfig& cfg, Rng& rng);
// Recomputes the adjacency-derived operators after an edge perturbation while
// keeping the PPMI operators and positional encodings of `base`.
GraphOperators refresh_adjacency_operators(const Graph& perturbed, const GraphOperators& base);

struct SbmConfig {
    std::vector<std::size_t> blocks;
    double p_in = 0.1;
    double p_out = 0.01;
    std::vector<std::vector<double>> feat_means;  // one vector per block, all equal length
    double feat_std = 1.0;
};

// Stochastic block model with Gaussian node features around each block's mean.
// Labels are block indices.
Graph sbm_generate(const SbmConfig& cfg, Rng& rng);

// C mean vectors in R^dim, pairwise euclidean distance `separation` (scaled
// standard basis vectors). Requires dim >= C.
std::vector<std::vector<double>> separated_class_means(std::size_t num_classes, std::size_t dim, double separation);

// G(n, p) with an all-zero n x feature_dim feature matrix.
Graph erdos_renyi(std::size_t n, double p, Rng& rng, std::size_t feature_dim = 1);

// Removes each edge independently with probability rate in [0, 1).
Graph drop_edge(const Graph& g, double rate, Rng& rng);

}  // namespace dft
