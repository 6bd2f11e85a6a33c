#pragma once

#include <optional>
#include <vector>

#include "dft/rng.hpp"
#include "dft/tensor.hpp"

namespace dft {

// Dense affine map x W + b. bias is 1 x out (may be empty for bias-free maps).
struct Dense {
    Tensor weight;
    std::optional<Tensor> bias;

    Tensor operator()(const Tensor& x) const;
    std::vector<Tensor> parameters() const;

    // Glorot-uniform weights, zero bias.
    static Dense glorot(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
    static Dense zeros(std::size_t in, std::size_t out, bool with_bias = true);
};

// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Train/eval switch plus the randomness used by dropout. In eval mode,
// graph_stats makes batch norm use the statistics of the graph being
// processed instead of the running averages (the running averages are left
// untouched either way).
struct ForwardMode {
    bool train = false;
    double dropout = 0.0;
    Rng* rng = nullptr;
    bool graph_stats = false;
};

// --- decorrelated feature extraction -------------------------------------

struct DecorrConfig {
    double lambda1 = 100.0;  // graph smoothing
    double lambda2 = 0.001;  // row decorrelation
    double gamma = 0.01;     // step size
    std::size_t num_layers = 3;

    void validate() const;
};

// Objective minimised by the decorrelated stack:
// 1/2 |H - X|_F^2 + lambda1/2 tr(H^T L H) + lambda2/4 |H H^T - I|_F^2
Tensor decorr_objective(const Tensor& h, const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg);

// Its gradient: H - X + lambda1 L H + lambda2 (H H^T - I) H. The last term is
// evaluated as H (H^T H) - H, which avoids forming the n x n matrix H H^T.
Tensor decorr_gradient(const Tensor& h, const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg);

// num_layers steps H <- H - gamma * G(H) from H = h0 (default x).
Tensor decorr_stack(const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg,
                    const std::optional<Tensor>& h0 = std::nullopt);

// --- graph transformer ---------------------------------------------------

enum class AttentionMask {
    neighbors,  // softmax over each row's neighbours (plus itself); non-edges get weight 0
    literal,    // softmax((Q K^T) o A / sqrt(d)) over the full row; non-edges score 0, not -inf
};

// Row softmax of Q K^T / sqrt(d) under the given mask semantics.
Tensor sparse_attention_weights(const Tensor& q, const Tensor& k, const Tensor& adj,
                                AttentionMask mask = AttentionMask::neighbors);
Tensor sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& adj,
                        AttentionMask mask = AttentionMask::neighbors);

struct TransformerLayerParams {
    Tensor wq, wk, wv;  // d x d, shared by both domains
    Dense ffn1;         // d -> ffn_width
    Dense ffn2;         // ffn_width -> d
    Tensor bn1_gamma, bn1_beta;
    Tensor bn2_gamma, bn2_beta;
    BatchNormStats bn1, bn2;
    std::optional<Dense> pe_dense;  // k -> d, present on layers that inject positional encodings

    static TransformerLayerParams init(std::size_t dim, std::size_t ffn_width, std::size_t pe_dim, bool with_pe,
                                       Rng& rng);
    std::vector<Tensor> parameters() const;
};

// H+ = h + Dense(pos_enc) when inject_pe
// H1 = BN(H+ + SA(H+))
// H2 = ReLU(Dense(H1))
// Z  = BN(H1 + Dense(H2)), followed by dropout in train mode
Tensor transformer_layer(const Tensor& h, const Tensor& pos_enc, const Tensor& adj, TransformerLayerParams& params,
                         bool inject_pe, const ForwardMode& mode, AttentionMask mask = AttentionMask::neighbors);

// act(a_norm h w) with act = ReLU, or identity when relu_activation is false.
Tensor gcn_layer(const Tensor& h, const Tensor& a_norm, const Tensor& w, bool relu_activation = true);

}  // namespace dft
