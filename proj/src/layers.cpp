#include "dft/layers.hpp"

#include <cmath>

#include "dft/error.hpp"

namespace dft {

Tensor Dense::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias ? add(y, *bias) : y;
}

std::vector<Tensor> Dense::parameters() const {
    std::vector<Tensor> p{weight};
    if (bias) p.push_back(*bias);
    return p;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(fan_in * fan_out);
    for (auto& x : w) x = rng.uniform(-limit, limit);
    return Tensor::parameter(fan_in, fan_out, std::move(w));
}

Dense Dense::glorot(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
    Dense d{glorot_uniform(in, out, rng), std::nullopt};
    if (with_bias) d.bias = Tensor::parameter(1, out, std::vector<double>(out, 0.0));
    return d;
}

Dense Dense::zeros(std::size_t in, std::size_t out, bool with_bias) {
    Dense d{Tensor::parameter(in, out, std::vector<double>(in * out, 0.0)), std::nullopt};
    if (with_bias) d.bias = Tensor::parameter(1, out, std::vector<double>(out, 0.0));
    return d;
}

void DecorrConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || gamma < 0) throw ConfigError("decorrelation: lambda1, lambda2, gamma must be >= 0");
    if (num_layers < 1) throw ConfigError("decorrelation: num_layers must be >= 1");
}

namespace {

void check_decorr_shapes(const Tensor& h, const Tensor& x, const Tensor& laplacian) {
    if (h.shape() != x.shape()) {
        throw DimensionError("decorr_gradient: h " + h.shape_str() + " and x " + x.shape_str() + " differ");
    }
    if (laplacian.rows() != h.rows() || laplacian.cols() != h.rows()) {
        throw DimensionError("decorr_gradient: laplacian " + laplacian.shape_str() + " does not match h " +
                             h.shape_str());
    }
}

}  // namespace

Tensor decorr_objective(const Tensor& h, const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg) {
    check_decorr_shapes(h, x, laplacian);
    Tensor fit = scale(sq_frobenius(sub(h, x)), 0.5);
    Tensor smooth = scale(trace(matmul(transpose(h), matmul(laplacian, h))), 0.5 * cfg.lambda1);
    Tensor gram = sub(matmul(h, transpose(h)), Tensor::identity(h.rows()));
    Tensor decor = scale(sq_frobenius(gram), 0.25 * cfg.lambda2);
    return add(add(fit, smooth), decor);
}

Tensor decorr_gradient(const Tensor& h, const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg) {
    check_decorr_shapes(h, x, laplacian);
    Tensor g = sub(h, x);
    if (cfg.lambda1 != 0.0) g = add(g, scale(matmul(laplacian, h), cfg.lambda1));
    if (cfg.lambda2 != 0.0) {
        Tensor hthh = matmul(h, matmul(transpose(h), h));
        g = add(g, scale(sub(hthh, h), cfg.lambda2));
    }
    return g;
}

Tensor decorr_stack(const Tensor& x, const Tensor& laplacian, const DecorrConfig& cfg, const std::optional<Tensor>& h0) {
    cfg.validate();
    Tensor h = h0 ? *h0 : x;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        h = sub(h, scale(decorr_gradient(h, x, laplacian, cfg), cfg.gamma));
    }
    return h;
}

namespace {

Tensor mask_with_self_loops(const Tensor& adj) {
    const std::size_t n = adj.rows();
    bool has_diag = true;
    for (std::size_t i = 0; i < n && has_diag; ++i) has_diag = adj(i, i) != 0.0;
    if (has_diag) return adj;
    Tensor m = adj.detach();
    auto v = m.mutable_values();
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return m;
}

}  // namespace

Tensor sparse_attention_weights(const Tensor& q, const Tensor& k, const Tensor& adj, AttentionMask mask) {
    if (q.shape() != k.shape()) {
        throw DimensionError("sparse_attention: q " + q.shape_str() + " and k " + k.shape_str() + " differ");
    }
    if (adj.rows() != q.rows() || adj.cols() != q.rows()) {
        throw DimensionError("sparse_attention: mask " + adj.shape_str() + " does not match q " + q.shape_str());
    }
    if (q.cols() == 0) throw DimensionError("sparse_attention: zero feature width");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    if (mask == AttentionMask::literal) {
        return row_softmax(scale(hadamard(matmul(q, transpose(k)), adj.detach()), inv_sqrt_d));
    }
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
    return masked_row_softmax(scores, mask_with_self_loops(adj));
}

Tensor sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& adj, AttentionMask mask) {
    if (v.rows() != q.rows()) {
        throw DimensionError("sparse_attention: v " + v.shape_str() + " does not match q " + q.shape_str());
    }
    return matmul(sparse_attention_weights(q, k, adj, mask), v);
}

TransformerLayerParams TransformerLayerParams::init(std::size_t dim, std::size_t ffn_width, std::size_t pe_dim,
                                                    bool with_pe, Rng& rng) {
    TransformerLayerParams p{
        glorot_uniform(dim, dim, rng),
        glorot_uniform(dim, dim, rng),
        glorot_uniform(dim, dim, rng),
        Dense::glorot(dim, ffn_width, rng),
        Dense::glorot(ffn_width, dim, rng),
        Tensor::parameter(1, dim, std::vector<double>(dim, 1.0)),
        Tensor::parameter(1, dim, std::vector<double>(dim, 0.0)),
        Tensor::parameter(1, dim, std::vector<double>(dim, 1.0)),
        Tensor::parameter(1, dim, std::vector<double>(dim, 0.0)),
        BatchNormStats(dim),
        BatchNormStats(dim),
        std::nullopt,
    };
    if (with_pe && pe_dim > 0) p.pe_dense = Dense::glorot(pe_dim, dim, rng);
    return p;
}

std::vector<Tensor> TransformerLayerParams::parameters() const {
    std::vector<Tensor> out{wq, wk, wv};
    for (const auto& t : ffn1.parameters()) out.push_back(t);
    for (const auto& t : ffn2.parameters()) out.push_back(t);
    out.insert(out.end(), {bn1_gamma, bn1_beta, bn2_gamma, bn2_beta});
    if (pe_dense) {
        for (const auto& t : pe_dense->parameters()) out.push_back(t);
    }
    return out;
}

namespace {

Tensor bn_step(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                       const ForwardMode& mode) {
    if (mode.train || !mode.graph_stats) return batch_norm(x, gamma, beta, stats, mode.train);
    BatchNormStats scratch = stats;
    return batch_norm(x, gamma, beta, scratch, true);
}

}  // namespace

Tensor transformer_layer(const Tensor& h, const Tensor& pos_enc, const Tensor& adj, TransformerLayerParams& params,
                         bool inject_pe, const ForwardMode& mode, AttentionMask mask) {
    Tensor hp = h;
    if (inject_pe && params.pe_dense) {
        if (pos_enc.rows() != h.rows()) {
            throw DimensionError("transformer_layer: positional encoding " + pos_enc.shape_str() +
                                 " does not match h " + h.shape_str());
        }
        hp = add(h, (*params.pe_dense)(pos_enc));
    }
    Tensor sa = sparse_attention(matmul(hp, params.wq), matmul(hp, params.wk), matmul(hp, params.wv), adj, mask);
    Tensor h1 = bn_step(add(hp, sa), params.bn1_gamma, params.bn1_beta, params.bn1, mode);
    Tensor h2 = relu(params.ffn1(h1));
    Tensor z = bn_step(add(h1, params.ffn2(h2)), params.bn2_gamma, params.bn2_beta, params.bn2, mode);
    if (mode.train && mode.dropout > 0.0) {
        if (!mode.rng) throw ContractError("transformer_layer: dropout in train mode needs an Rng");
        z = dropout(z, mode.dropout, *mode.rng, true);
    }
    return z;
}

Tensor gcn_layer(const Tensor& h, const Tensor& a_norm, const Tensor& w, bool relu_activation) {
    if (a_norm.rows() != h.rows() || a_norm.cols() != h.rows()) {
        throw DimensionError("gcn_layer: operator " + a_norm.shape_str() + " does not match h " + h.shape_str());
    }
    Tensor out = matmul(a_norm, matmul(h, w));
    return relu_activation ? relu(out) : out;
}

}  // namespace dft
