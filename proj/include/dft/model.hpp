#pragma once

// The full network: input projection, dual-branch decorrelated extraction over
// the adjacency and PPMI operators, per-node attention aggregation, graph
// transformer stack, classifier head and domain critic.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dft/graph.hpp"
#include "dft/layers.hpp"

namespace dft {

enum class Variant {
    dft,           // full model
    dft_gcn,       // GCN layers instead of decorrelated steps
    dft_not,       // no transformer layers
    dft_puret,     // dense attention (all-ones mask)
    dft_mmd,       // MMD alignment instead of the critic
    dft_dropedge,  // GCN layers with per-epoch DropEdge on the source graph
};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
    std::size_t input_dim = 0;
    std::size_t hidden = 128;
    std::size_t num_classes = 0;
    std::size_t pe_dim = 2;
    std::size_t transformer_layers = 4;
    std::size_t ffn_width = 256;
    DecorrConfig decorr_adj;   // branch over the adjacency Laplacian
    DecorrConfig decorr_ppmi;  // branch over the PPMI Laplacian
    Variant variant = Variant::dft;
    double dropout = 0.1;  // after every transformer layer, train mode only
    bool pe_every_layer = false;
    AttentionMask attention_mask = AttentionMask::neighbors;
    // Batch-norm statistics used by infer(): true normalises each graph with
    // its own statistics, as every training forward pass does; false uses
    // the running averages accumulated over both domains.
    bool bn_graph_stats = true;

    bool uses_gcn() const { return variant == Variant::dft_gcn || variant == Variant::dft_dropedge; }
    bool uses_transformer() const { return variant != Variant::dft_not; }
    bool uses_critic() const { return variant != Variant::dft_mmd; }
    void validate() const;
};

struct FeatureExtractorParams {
    Dense input;                  // D -> hidden
    std::vector<Tensor> gcn_adj;  // GCN variants only
    std::vector<Tensor> gcn_ppmi;
    Dense attention;              // 2*hidden -> 2 branch logits
    std::vector<TransformerLayerParams> transformer;
};

struct ClassifierParams {
    Dense out;  // hidden -> C
};

// f(z) = out(ReLU(hidden(z))), or out(z) when hidden is absent.
struct CriticParams {
    std::optional<Dense> hidden;
    Dense out;  // -> 1
};

struct ModelParams {
    FeatureExtractorParams feat;
    ClassifierParams clf;
    std::optional<CriticParams> critic;

    std::vector<Tensor> feat_parameters() const;
    std::vector<Tensor> clf_parameters() const;
    std::vector<Tensor> critic_parameters() const;

    // Every piece of persistent state (trainable tensors and batch-norm running
    // statistics) with a stable dotted name, in a fixed order.
    using StateVisitor = std::function<void(const std::string& name, std::size_t rows, std::size_t cols,
                                            std::span<double> data)>;
    void visit_state(const StateVisitor& fn);
};

ModelParams init_model(const ModelConfig& cfg, Rng& rng);

struct FeatureOutput {
    Tensor z;      // n x hidden
    Tensor alpha;  // n x 2, columns (alpha_adj, alpha_ppmi)
};

FeatureOutput extract_features(const Tensor& features, const GraphOperators& ops, ModelParams& params,
                               const ModelConfig& cfg, const ForwardMode& mode);

// Row-softmax class probabilities, n x C.
Tensor classify(const Tensor& z, const ClassifierParams& clf);
Tensor classifier_logits(const Tensor& z, const ClassifierParams& clf);

// One unbounded score per node, n x 1.
Tensor criticize(const Tensor& z, const CriticParams& critic);

// d f(z_i) / d z_i for every row, n x hidden. Built from differentiable ops so
// that penalties on it can be differentiated with respect to the critic's
// weights. The ReLU gates are treated as constants (their derivative is zero
// almost everywhere).
Tensor critic_input_gradient(const Tensor& z, const CriticParams& critic);

struct DomainForward {
    Tensor z;
    Tensor y_hat;
    std::optional<Tensor> q;
    Tensor alpha;
};

DomainForward forward_domain(const Tensor& features, const GraphOperators& ops, ModelParams& params,
                             const ModelConfig& cfg, const ForwardMode& mode);

// Eval-mode forward without recording a tape.
DomainForward infer(const Graph& g, const GraphOperators& ops, ModelParams& params, const ModelConfig& cfg);

}  // namespace dft
