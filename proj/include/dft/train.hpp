#pragma once

// Adversarial training over a labelled source graph and an unlabelled target.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dft/graph.hpp"
#include "dft/losses.hpp"
#include "dft/model.hpp"
#include "dft/optim.hpp"

namespace dft {

// A target graph stripped of labels. The training path only accepts this type.
class UnlabeledGraph {
public:
    explicit UnlabeledGraph(const Graph& g) : g_(g.without_labels()) {}
    const Graph& graph() const { return g_; }

private:
    Graph g_;
};

struct TrainConfig {
    std::size_t epochs = 500;
    double lr = 0.003;
    std::size_t n_critic = 5;
    double lambda_critic = 1.0;  // also weights the MMD term for dft_mmd
    double lambda_gp = 10.0;
    double lambda_t_divisor = 100.0;  // lambda_t = epoch / (epochs * divisor)
    GpMode gp_mode = GpMode::at_samples;
    double dropedge_rate = 0.2;
    std::uint64_t seed = 0;
    OperatorConfig operators;
    // input_dim and num_classes are filled in from the data.
    ModelConfig model;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double l_s = 0.0;
    double l_t = 0.0;
    double l_critic = 0.0;  // MMD value for dft_mmd
    double l_gp = 0.0;      // 0 for dft_mmd
    double seconds = 0.0;
};

struct CriticTerms {
    Tensor l_critic;
    Tensor l_gp;
    Tensor objective;  // l_critic - lambda_gp * l_gp, maximised by the critic
};

CriticTerms critic_objective(const CriticParams& critic, const Tensor& z_s, const Tensor& z_t, double lambda_gp,
                             GpMode mode, Rng* rng);

struct GeneratorTerms {
    Tensor l_s;
    Tensor l_t;
    Tensor l_align;
    Tensor total;  // l_s + lambda_t * l_t + lambda_align * l_align
};

GeneratorTerms generator_objective(const Tensor& y_hat_s, std::span<const int> labels_s, const Tensor& y_hat_t,
                                   const Tensor& l_align, double lambda_t, double lambda_align);

// Stepwise driver. run_epoch() is begin_epoch(), n_critic critic_step()s and
// finish_epoch(); the pieces are public so they can be inspected separately.
class Trainer {
public:
    Trainer(const Graph& source, const UnlabeledGraph& target, TrainConfig cfg);

    EpochRecord run_epoch();

    // Forward pass of both domains for the next epoch (DropEdge resampled here).
    void begin_epoch();
    // One ascent step of the critic on the frozen representations of this
    // epoch. Returns the objective before the step. No-op for dft_mmd.
    double critic_step();
    // Descent step of the feature extractor and classifier; closes the epoch.
    EpochRecord finish_epoch();

    ModelParams& params() { return params_; }
    const ModelConfig& model_config() const { return cfg_.model; }
    const TrainConfig& config() const { return cfg_; }
    const GraphOperators& source_operators() const { return ops_s_; }
    const GraphOperators& target_operators() const { return ops_t_; }
    const std::vector<EpochRecord>& history() const { return history_; }
    std::size_t epochs_done() const { return history_.size(); }

private:
    TrainConfig cfg_;
    Graph source_;
    Graph target_;
    Rng rng_;
    GraphOperators ops_s_;
    GraphOperators ops_t_;
    ModelParams params_;
    std::optional<Adam> critic_opt_;
    std::optional<Adam> gen_opt_;

    // Per-epoch state between begin_epoch and finish_epoch.
    bool in_epoch_ = false;
    double epoch_start_ = 0.0;
    std::optional<FeatureOutput> feat_s_;
    std::optional<FeatureOutput> feat_t_;
    double last_gp_ = 0.0;

    std::vector<EpochRecord> history_;
};

struct TrainResult {
    ModelParams params;
    ModelConfig model;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs cfg.epochs epochs. Throws NumericalError naming the epoch and the loss
// when a loss becomes non-finite.
TrainResult train(const Graph& source, const UnlabeledGraph& target, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace dft
