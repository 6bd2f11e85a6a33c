#include "dft/train.hpp"

#include <chrono>
#include <cmath>

#include "dft/error.hpp"

namespace dft {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (n_critic < 1) throw ConfigError("train: n_critic must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (lambda_critic < 0 || lambda_gp < 0) throw ConfigError("train: lambda_critic and lambda_gp must be >= 0");
    if (!(lambda_t_divisor > 0.0)) throw ConfigError("train: lambda_t_divisor must be > 0");
    if (dropedge_rate < 0.0 || dropedge_rate >= 1.0) throw ConfigError("train: dropedge_rate must lie in [0, 1)");
    if (operators.ppmi.walk_len < 1 || operators.ppmi.walks_per_node < 1 || operators.ppmi.window < 1) {
        throw ConfigError("train: ppmi walk_len, walks_per_node and window must be >= 1");
    }
}

CriticTerms critic_objective(const CriticParams& critic, const Tensor& z_s, const Tensor& z_t, double lambda_gp,
                             GpMode mode, Rng* rng) {
    Tensor lc = loss_critic(criticize(z_s, critic), criticize(z_t, critic));
    Tensor gp = gradient_penalty(critic, z_s, z_t, mode, rng);
    return {lc, gp, sub(lc, scale(gp, lambda_gp))};
}

GeneratorTerms generator_objective(const Tensor& y_hat_s, std::span<const int> labels_s, const Tensor& y_hat_t,
                                   const Tensor& l_align, double lambda_t, double lambda_align) {
    Tensor ls = loss_source(y_hat_s, labels_s);
    Tensor lt = loss_target_entropy(y_hat_t);
    Tensor total = add(add(ls, scale(lt, lambda_t)), scale(l_align, lambda_align));
    return {ls, lt, l_align, total};
}

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void require_finite(double v, const char* name, std::size_t epoch) {
    if (!std::isfinite(v)) {
        throw NumericalError("non-finite " + std::string(name) + " (" + std::to_string(v) + ") at epoch " +
                             std::to_string(epoch));
    }
}

ModelConfig complete_model_config(ModelConfig m, const Graph& source, const Graph& target) {
    if (!source.has_labels()) throw ContractError("train: source graph has no labels");
    if (source.feature_dim() != target.feature_dim()) {
        throw DimensionError("train: source has " + std::to_string(source.feature_dim()) +
                             " features, target has " + std::to_string(target.feature_dim()));
    }
    m.input_dim = source.feature_dim();
    m.num_classes = static_cast<std::size_t>(*source.num_classes());
    m.validate();
    return m;
}

}  // namespace

Trainer::Trainer(const Graph& source, const UnlabeledGraph& target, TrainConfig cfg)
    : cfg_(std::move(cfg)), source_(source), target_(target.graph()), rng_(cfg_.seed) {
    cfg_.validate();
    cfg_.model = complete_model_config(cfg_.model, source_, target_);
    cfg_.operators.pe_dim = cfg_.model.pe_dim;

    Rng op_rng = rng_.split();
    ops_s_ = build_operators(source_, cfg_.operators, op_rng);
    ops_t_ = build_operators(target_, cfg_.operators, op_rng);
    Rng init_rng = rng_.split();
    params_ = init_model(cfg_.model, init_rng);

    std::vector<Tensor> gen = params_.feat_parameters();
    for (const auto& t : params_.clf_parameters()) gen.push_back(t);
    gen_opt_.emplace(std::move(gen));
    if (params_.critic) critic_opt_.emplace(params_.critic_parameters());
}

void Trainer::begin_epoch() {
    if (in_epoch_) throw ContractError("Trainer::begin_epoch: previous epoch not finished");
    epoch_start_ = now_seconds();
    const GraphOperators* ops_s = &ops_s_;
    GraphOperators dropped;
    if (cfg_.model.variant == Variant::dft_dropedge && cfg_.dropedge_rate > 0.0) {
        dropped = refresh_adjacency_operators(drop_edge(source_, cfg_.dropedge_rate, rng_), ops_s_);
        ops_s = &dropped;
    }
    const ForwardMode mode{true, cfg_.model.dropout, &rng_};
    feat_s_ = extract_features(source_.features(), *ops_s, params_, cfg_.model, mode);
    feat_t_ = extract_features(target_.features(), ops_t_, params_, cfg_.model, mode);
    last_gp_ = 0.0;
    in_epoch_ = true;
}

double Trainer::critic_step() {
    if (!in_epoch_) throw ContractError("Trainer::critic_step: call begin_epoch first");
    if (!params_.critic) return 0.0;
    const Tensor zs = feat_s_->z.detach();
    const Tensor zt = feat_t_->z.detach();
    critic_opt_->zero_grad();
    CriticTerms terms = critic_objective(*params_.critic, zs, zt, cfg_.lambda_gp, cfg_.gp_mode, &rng_);
    const double before = terms.objective.item();
    require_finite(terms.l_critic.item(), "L_critic", history_.size() + 1);
    require_finite(terms.l_gp.item(), "L_gp", history_.size() + 1);
    last_gp_ = terms.l_gp.item();
    backward(terms.objective);
    critic_opt_->step(-cfg_.lr);
    return before;
}

EpochRecord Trainer::finish_epoch() {
    if (!in_epoch_) throw ContractError("Trainer::finish_epoch: call begin_epoch first");
    const std::size_t epoch = history_.size() + 1;
    const Tensor& zs = feat_s_->z;
    const Tensor& zt = feat_t_->z;

    Tensor align = params_.critic ? loss_critic(criticize(zs, *params_.critic), criticize(zt, *params_.critic))
                                  : loss_mmd(zs, zt);
    const double lambda_t = lambda_t_schedule(epoch, cfg_.epochs) * (100.0 / cfg_.lambda_t_divisor);
    GeneratorTerms terms = generator_objective(classify(zs, params_.clf), source_.labels(),
                                               classify(zt, params_.clf), align, lambda_t, cfg_.lambda_critic);

    EpochRecord rec{epoch, terms.l_s.item(), terms.l_t.item(), terms.l_align.item(), last_gp_, 0.0};
    require_finite(rec.l_s, "L_s", epoch);
    require_finite(rec.l_t, "L_t", epoch);
    require_finite(rec.l_critic, params_.critic ? "L_critic" : "L_mmd", epoch);

    gen_opt_->zero_grad();
    backward(terms.total);
    gen_opt_->step(cfg_.lr);
    // The critic's grads from this backward pass are stale; its optimiser
    // clears them before its next step.

    feat_s_.reset();
    feat_t_.reset();
    in_epoch_ = false;
    rec.seconds = now_seconds() - epoch_start_;
    history_.push_back(rec);
    return rec;
}

EpochRecord Trainer::run_epoch() {
    begin_epoch();
    if (params_.critic) {
        for (std::size_t i = 0; i < cfg_.n_critic; ++i) critic_step();
    }
    return finish_epoch();
}

TrainResult train(const Graph& source, const UnlabeledGraph& target, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    Trainer trainer(source, target, cfg);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochRecord rec = trainer.run_epoch();
        if (on_epoch) on_epoch(rec);
    }
    return {trainer.params(), trainer.model_config(), trainer.history()};
}

}  // namespace dft
