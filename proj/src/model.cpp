#include "dft/model.hpp"

#include "dft/error.hpp"

namespace dft {

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::dft: return "dft";
        case Variant::dft_gcn: return "dft_gcn";
        case Variant::dft_not: return "dft_not";
        case Variant::dft_puret: return "dft_puret";
        case Variant::dft_mmd: return "dft_mmd";
        case Variant::dft_dropedge: return "dft_dropedge";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::dft, Variant::dft_gcn, Variant::dft_not, Variant::dft_puret, Variant::dft_mmd,
                      Variant::dft_dropedge}) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected dft, dft_gcn, dft_not, dft_puret, dft_mmd or dft_dropedge)");
}

void ModelConfig::validate() const {
    if (input_dim == 0) throw ConfigError("model: input_dim must be > 0");
    if (hidden == 0) throw ConfigError("model: hidden must be > 0");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (ffn_width == 0) throw ConfigError("model: ffn_width must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
    decorr_adj.validate();
    decorr_ppmi.validate();
}

std::vector<Tensor> ModelParams::feat_parameters() const {
    std::vector<Tensor> out = feat.input.parameters();
    out.insert(out.end(), feat.gcn_adj.begin(), feat.gcn_adj.end());
    out.insert(out.end(), feat.gcn_ppmi.begin(), feat.gcn_ppmi.end());
    for (const auto& t : feat.attention.parameters()) out.push_back(t);
    for (const auto& layer : feat.transformer) {
        for (const auto& t : layer.parameters()) out.push_back(t);
    }
    return out;
}

std::vector<Tensor> ModelParams::clf_parameters() const { return clf.out.parameters(); }

std::vector<Tensor> ModelParams::critic_parameters() const {
    std::vector<Tensor> out;
    if (!critic) return out;
    if (critic->hidden) out = critic->hidden->parameters();
    for (const auto& t : critic->out.parameters()) out.push_back(t);
    return out;
}

namespace {

void visit_tensor(const ModelParams::StateVisitor& fn, const std::string& name, Tensor& t) {
    fn(name, t.rows(), t.cols(), t.mutable_values());
}

void visit_dense(const ModelParams::StateVisitor& fn, const std::string& name, Dense& d) {
    visit_tensor(fn, name + ".weight", d.weight);
    if (d.bias) visit_tensor(fn, name + ".bias", *d.bias);
}

void visit_stats(const ModelParams::StateVisitor& fn, const std::string& name, BatchNormStats& s) {
    fn(name + ".running_mean", 1, s.running_mean.size(), s.running_mean);
    fn(name + ".running_var", 1, s.running_var.size(), s.running_var);
}

}  // namespace

void ModelParams::visit_state(const StateVisitor& fn) {
    visit_dense(fn, "feat.input", feat.input);
    for (std::size_t l = 0; l < feat.gcn_adj.size(); ++l) visit_tensor(fn, "feat.gcn_adj." + std::to_string(l), feat.gcn_adj[l]);
    for (std::size_t l = 0; l < feat.gcn_ppmi.size(); ++l) {
        visit_tensor(fn, "feat.gcn_ppmi." + std::to_string(l), feat.gcn_ppmi[l]);
    }
    visit_dense(fn, "feat.attention", feat.attention);
    for (std::size_t l = 0; l < feat.transformer.size(); ++l) {
        auto& layer = feat.transformer[l];
        const std::string p = "feat.transformer." + std::to_string(l);
        visit_tensor(fn, p + ".wq", layer.wq);
        visit_tensor(fn, p + ".wk", layer.wk);
        visit_tensor(fn, p + ".wv", layer.wv);
        visit_dense(fn, p + ".ffn1", layer.ffn1);
        visit_dense(fn, p + ".ffn2", layer.ffn2);
        visit_tensor(fn, p + ".bn1.gamma", layer.bn1_gamma);
        visit_tensor(fn, p + ".bn1.beta", layer.bn1_beta);
        visit_tensor(fn, p + ".bn2.gamma", layer.bn2_gamma);
        visit_tensor(fn, p + ".bn2.beta", layer.bn2_beta);
        visit_stats(fn, p + ".bn1", layer.bn1);
        visit_stats(fn, p + ".bn2", layer.bn2);
        if (layer.pe_dense) visit_dense(fn, p + ".pe", *layer.pe_dense);
    }
    visit_dense(fn, "clf.out", clf.out);
    if (critic) {
        if (critic->hidden) visit_dense(fn, "critic.hidden", *critic->hidden);
        visit_dense(fn, "critic.out", critic->out);
    }
}

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.hidden;
    ModelParams p{
        FeatureExtractorParams{Dense::glorot(cfg.input_dim, d, rng), {}, {}, Dense::zeros(2 * d, 2), {}},
        ClassifierParams{Dense::glorot(d, cfg.num_classes, rng)},
        std::nullopt,
    };
    if (cfg.uses_gcn()) {
        for (std::size_t l = 0; l < cfg.decorr_adj.num_layers; ++l) p.feat.gcn_adj.push_back(glorot_uniform(d, d, rng));
        for (std::size_t l = 0; l < cfg.decorr_ppmi.num_layers; ++l) p.feat.gcn_ppmi.push_back(glorot_uniform(d, d, rng));
    }
    if (cfg.uses_transformer()) {
        for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
            const bool with_pe = l == 0 || cfg.pe_every_layer;
            p.feat.transformer.push_back(TransformerLayerParams::init(d, cfg.ffn_width, cfg.pe_dim, with_pe, rng));
        }
    }
    if (cfg.uses_critic()) p.critic = CriticParams{Dense::glorot(d, d, rng), Dense::glorot(d, 1, rng)};
    return p;
}

namespace {

Tensor gcn_stack(Tensor h, const Tensor& op, const std::vector<Tensor>& weights) {
    for (const auto& w : weights) h = gcn_layer(h, op, w, true);
    return h;
}

}  // namespace

FeatureOutput extract_features(const Tensor& features, const GraphOperators& ops, ModelParams& params,
                               const ModelConfig& cfg, const ForwardMode& mode) {
    if (features.cols() != cfg.input_dim) {
        throw DimensionError("extract_features: graph has " + std::to_string(features.cols()) +
                             " feature columns, model expects " + std::to_string(cfg.input_dim));
    }
    const std::size_t n = features.rows();
    if (ops.a_norm.rows() != n) {
        throw DimensionError("extract_features: operators built for " + std::to_string(ops.a_norm.rows()) +
                             " nodes, features have " + std::to_string(n));
    }
    auto& fp = params.feat;
    Tensor x = fp.input(features);

    Tensor h_adj, h_ppmi;
    if (cfg.uses_gcn()) {
        h_adj = gcn_stack(x, ops.a_norm, fp.gcn_adj);
        h_ppmi = gcn_stack(x, ops.ppmi_norm, fp.gcn_ppmi);
    } else {
        h_adj = decorr_stack(x, ops.laplacian, cfg.decorr_adj);
        h_ppmi = decorr_stack(x, ops.ppmi_laplacian, cfg.decorr_ppmi);
    }

    Tensor alpha = row_softmax(fp.attention(concat_cols(h_adj, h_ppmi)));
    Tensor h = add(hadamard(h_adj, slice_cols(alpha, 0, 1)), hadamard(h_ppmi, slice_cols(alpha, 1, 1)));

    if (cfg.uses_transformer()) {
        const Tensor mask = cfg.variant == Variant::dft_puret ? Tensor(n, n, 1.0) : ops.mask;
        ForwardMode layer_mode = mode;
        layer_mode.dropout = cfg.dropout;
        for (std::size_t l = 0; l < fp.transformer.size(); ++l) {
            const bool inject = l == 0 || cfg.pe_every_layer;
            h = transformer_layer(h, ops.pos_enc, mask, fp.transformer[l], inject, layer_mode, cfg.attention_mask);
        }
    }
    return {h, alpha};
}

Tensor classifier_logits(const Tensor& z, const ClassifierParams& clf) { return clf.out(z); }

Tensor classify(const Tensor& z, const ClassifierParams& clf) { return row_softmax(classifier_logits(z, clf)); }

Tensor criticize(const Tensor& z, const CriticParams& critic) {
    if (critic.hidden) return critic.out(relu((*critic.hidden)(z)));
    return critic.out(z);
}

Tensor critic_input_gradient(const Tensor& z, const CriticParams& critic) {
    if (critic.out.weight.cols() != 1) throw DimensionError("critic_input_gradient: critic output must be scalar");
    Tensor w_out_row = transpose(critic.out.weight);  // 1 x width
    if (!critic.hidden) {
        // Constant gradient: every row equals w_out^T.
        return add(Tensor(z.rows(), z.cols(), 0.0), w_out_row);
    }
    const Dense& hidden = *critic.hidden;
    Tensor gate = step(hidden(z));
    return matmul(hadamard(gate, w_out_row), transpose(hidden.weight));
}

DomainForward forward_domain(const Tensor& features, const GraphOperators& ops, ModelParams& params,
                             const ModelConfig& cfg, const ForwardMode& mode) {
    FeatureOutput f = extract_features(features, ops, params, cfg, mode);
    DomainForward out{f.z, classify(f.z, params.clf), std::nullopt, f.alpha};
    if (params.critic) out.q = criticize(f.z, *params.critic);
    return out;
}

DomainForward infer(const Graph& g, const GraphOperators& ops, ModelParams& params, const ModelConfig& cfg) {
    NoGradGuard no_grad;
    return forward_domain(g.features(), ops, params, cfg, ForwardMode{false, 0.0, nullptr, cfg.bn_graph_stats});
}

}  // namespace dft
