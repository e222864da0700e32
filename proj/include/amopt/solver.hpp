#ifndef AMOPT_SOLVER_HPP
#define AMOPT_SOLVER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "amopt/resnet.hpp"
#include "amopt/terminal.hpp"
#include "amopt/types.hpp"

namespace amopt {

enum class TrainMode { PINN, ETCNN };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

/// Everything the training loop needs: loss weights, sample counts, Adam
/// settings, the two-stage learning-rate schedule, and the sampling domain.
struct TrainConfig {
    double lambda_bs = 1.0;
    double lambda_tv = 1.0;
    double lambda_eq = 1.0;
    double lambda_tc = 1.0;
    double lambda_f = 1.0;
    int n_tc = 512;
    int interior_multiplier = 4;
    long iterations = 200000;
    double lr_start = 0.01;
    double gamma = 0.9;
    long stage1_iters = 40000;
    long stage1_period = 2000;
    long stage2_period = 5000;
    long doubling_period = 80000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::ETCNN;
    Domain domain;
    bool use_fg1u_shortcut = false;
    bool normalize_inputs = true;
    int log_every = 100;
    long checkpoint_every = 0;  // 0: final checkpoint only
    int threads = 0;            // 0: hardware concurrency

    std::vector<std::string> check() const;
    std::uint64_t hash() const;
};

/// Interior and terminal collocation points; terminal points sit at t = T.
struct CollocationBatch {
    MatrixXd s_interior;  // n x P
    VectorXd t_interior;
    MatrixXd s_terminal;  // n x N_tc
};

/// I.i.d. uniform points over the closed training box; terminal points
/// uniform over the spatial box at maturity. Deterministic in the rng state.
CollocationBatch sample_collocation(const Domain& domain, double maturity,
                                    int n_interior, int n_terminal,
                                    std::mt19937_64& rng);

/// The Black-Scholes-Merton operator applied to a trial-function jet:
/// F = dV/dt + 1/2 sum sigma_i sigma_j rho_ij s_i s_j d2V/ds_i ds_j
///   + sum (r - q_i) s_i dV/ds_i - r V.
double residual_F(const Jet& jet, const VectorXd& s, const MarketParams& params);

struct LossTerms {
    double bs = 0.0;
    double tv = 0.0;
    double eq = 0.0;
    double tc = 0.0;
    double f = 0.0;
    double total = 0.0;
};

/// Learning rate after `iteration` steps of the paper's two-stage decay.
double lr_at(long iteration, const TrainConfig& config);

struct AdamState {
    VectorXd m;
    VectorXd v;
    long step = 0;

    static AdamState zeros(Eigen::Index count) {
        return {VectorXd::Zero(count), VectorXd::Zero(count), 0};
    }
};

/// One Adam update with bias correction (denominator sqrt(v_hat) + eps).
void adam_step(VectorXd& theta, const VectorXd& grad, AdamState& state,
               double lr, const TrainConfig& config);

struct LogRow {
    long iter = 0;
    LossTerms losses;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ResNetParams params;
    std::vector<LogRow> log;
};

/// Scalar objective together with its exact parameter gradient; the
/// generic surface behind param_grad.
struct LossEvaluator {
    std::function<double(const ResNetParams&, VectorXd&)> eval_with_grad;
};

/// Evaluates the gradient of a scalar loss with respect to the parameters.
VectorXd param_grad(const ResNetParams& params, const LossEvaluator& loss);

/// Shared engine for loss evaluation and training. Evaluates every loss
/// term on a batch; optionally accumulates the parameter gradient.
class PdeLoss {
  public:
    PdeLoss(const TrainConfig& config, const OptionContract& contract,
            const MarketParams& market, const TerminalPair& pair);

    /// Losses on an explicit batch using the network trial function.
    LossTerms evaluate(const ResNetParams& params, const CollocationBatch& batch,
                       VectorXd* grad = nullptr) const;

    /// Losses of an arbitrary frozen surface u(s, t) -> Jet on the same
    /// batch definitions (oracle/diagnostics path).
    LossTerms evaluate_frozen(
        const std::function<Jet(const VectorXd&, double)>& surface,
        const CollocationBatch& batch) const;

    const TrainConfig& config() const { return config_; }

  private:
    TrainConfig config_;
    OptionContract contract_;
    MarketParams market_;
    TerminalPair pair_;
};

/// Called at every checkpoint boundary with the current state.
using CheckpointSink =
    std::function<void(long iteration, const ResNetParams&, const
                       std::vector<LogRow>&)>;

/// Runs the training loop: per-iteration resampling, Adam with the
/// two-stage schedule, sample counts doubling every doubling_period
/// iterations, a log row every log_every iterations. Divergence throws
/// DivergenceError after delivering the last finite state to the sink.
TrainResult train(const TrainConfig& config, const OptionContract& contract,
                  const MarketParams& market, const TerminalPair& pair,
                  const ResNetParams& net_init,
                  const CheckpointSink& sink = nullptr);

void write_train_log_csv(const std::string& path,
                         const std::vector<LogRow>& log,
                         bool include_seconds = true);

}  // namespace amopt

#endif  // AMOPT_SOLVER_HPP
