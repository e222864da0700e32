#include "amopt/solver.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

namespace amopt {

std::string to_string(TrainMode mode) {
    return mode == TrainMode::PINN ? "pinn" : "etcnn";
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "pinn") return TrainMode::PINN;
    if (name == "etcnn") return TrainMode::ETCNN;
    throw ValidationError("unknown train mode: " + name);
}

std::vector<std::string> TrainConfig::check() const {
    std::vector<std::string> report;
    auto bad = [&report](const std::string& msg) { report.push_back(msg); };
    if (lambda_bs < 0 || lambda_tv < 0 || lambda_eq < 0 || lambda_tc < 0 ||
        lambda_f < 0)
        bad("loss weights must be nonnegative");
    if (n_tc <= 0) bad("n_tc must be positive");
    if (interior_multiplier <= 0) bad("interior_multiplier must be positive");
    if (iterations < 0) bad("iterations must be nonnegative");
    if (!(lr_start > 0)) bad("lr_start must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) bad("gamma must be in (0, 1]");
    if (stage1_period <= 0 || stage2_period <= 0 || doubling_period <= 0)
        bad("schedule periods must be positive");
    if (domain.s_lo.size() == 0 || domain.s_lo.size() != domain.s_hi.size())
        bad("domain bounds missing or inconsistent");
    for (Eigen::Index i = 0; i < domain.s_lo.size(); ++i) {
        if (!(domain.s_lo[i] >= 0.0)) bad("domain s_lo must be >= 0");
        if (!(domain.s_lo[i] < domain.s_hi[i])) bad("domain s_lo must be < s_hi");
    }
    if (!(domain.t_lo >= 0.0 && domain.t_lo < domain.t_hi))
        bad("domain t bounds inconsistent");
    return report;
}

std::uint64_t TrainConfig::hash() const {
    char buf[1024];
    const int len = std::snprintf(
        buf, sizeof(buf),
        "%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%ld|%.17g|%.17g|%ld|%ld|%ld|%ld|"
        "%.17g|%.17g|%.17g|%llu|%d|%d|%d|%.17g|%.17g",
        lambda_bs, lambda_tv, lambda_eq, lambda_tc, lambda_f, n_tc,
        interior_multiplier, iterations, lr_start, gamma, stage1_iters,
        stage1_period, stage2_period, doubling_period, adam_beta1, adam_beta2,
        adam_eps, static_cast<unsigned long long>(seed),
        static_cast<int>(mode), use_fg1u_shortcut ? 1 : 0,
        normalize_inputs ? 1 : 0, domain.t_lo, domain.t_hi);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (int i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 1099511628211ull;
    }
    for (Eigen::Index i = 0; i < domain.s_lo.size(); ++i) {
        const double vals[2] = {domain.s_lo[i], domain.s_hi[i]};
        const auto* bytes = reinterpret_cast<const unsigned char*>(vals);
        for (size_t b = 0; b < sizeof(vals); ++b) {
            h ^= bytes[b];
            h *= 1099511628211ull;
        }
    }
    return h;
}

namespace {
// Closed-interval uniform from the top 53 bits.
double closed_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740991.0);
}
}  // namespace

CollocationBatch sample_collocation(const Domain& domain, double maturity,
                                    int n_interior, int n_terminal,
                                    std::mt19937_64& rng) {
    if (n_interior <= 0 || n_terminal <= 0)
        throw ValidationError("sample_collocation: counts must be positive");
    const int n = domain.n_assets();
    CollocationBatch batch;
    batch.s_interior.resize(n, n_interior);
    batch.t_interior.resize(n_interior);
    for (int p = 0; p < n_interior; ++p) {
        for (int i = 0; i < n; ++i)
            batch.s_interior(i, p) =
                domain.s_lo[i] +
                closed_uniform(rng) * (domain.s_hi[i] - domain.s_lo[i]);
        batch.t_interior[p] =
            domain.t_lo + closed_uniform(rng) * (domain.t_hi - domain.t_lo);
    }
    batch.s_terminal.resize(n, n_terminal);
    for (int p = 0; p < n_terminal; ++p)
        for (int i = 0; i < n; ++i)
            batch.s_terminal(i, p) =
                domain.s_lo[i] +
                closed_uniform(rng) * (domain.s_hi[i] - domain.s_lo[i]);
    (void)maturity;
    return batch;
}

double residual_F(const Jet& jet, const VectorXd& s,
                  const MarketParams& params) {
    const int n = static_cast<int>(s.size());
    double f = jet.dt - params.r * jet.v;
    for (int i = 0; i < n; ++i) {
        f += (params.r - params.q[i]) * s[i] * jet.ds[i];
        f += 0.5 * params.sigma[i] * params.sigma[i] * s[i] * s[i] *
             jet.hess(i, i);
        for (int j = i + 1; j < n; ++j)
            f += params.sigma[i] * params.sigma[j] * params.rho(i, j) * s[i] *
                 s[j] * jet.hess(i, j);
    }
    return f;
}

double lr_at(long iteration, const TrainConfig& config) {
    const long stage1 = std::min(iteration, config.stage1_iters);
    const long stage2 = std::max(iteration - config.stage1_iters, 0L);
    const long decays =
        stage1 / config.stage1_period + stage2 / config.stage2_period;
    return config.lr_start * std::pow(config.gamma, static_cast<double>(decays));
}

void adam_step(VectorXd& theta, const VectorXd& grad, AdamState& state,
               double lr, const TrainConfig& config) {
    if (!grad.allFinite())
        throw NumericsError("adam_step: non-finite gradient");
    state.step += 1;
    state.m = config.adam_beta1 * state.m + (1.0 - config.adam_beta1) * grad;
    state.v = config.adam_beta2 * state.v.array().matrix() +
              (1.0 - config.adam_beta2) * grad.array().square().matrix();
    const double bc1 =
        1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 =
        1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
    theta.array() -= lr * (state.m.array() / bc1) /
                     ((state.v.array() / bc2).sqrt() + config.adam_eps);
}

VectorXd param_grad(const ResNetParams& params, const LossEvaluator& loss) {
    VectorXd grad = VectorXd::Zero(params.theta.size());
    const double value = loss.eval_with_grad(params, grad);
    if (!std::isfinite(value))
        throw NumericsError("param_grad: non-finite loss");
    return grad;
}

PdeLoss::PdeLoss(const TrainConfig& config, const OptionContract& contract,
                 const MarketParams& market, const TerminalPair& pair)
    : config_(config), contract_(contract), market_(market), pair_(pair) {}

namespace {

constexpr int kBlockPoints = 128;

struct BlockResult {
    double bs = 0.0, tv = 0.0, eq = 0.0, f = 0.0, tc = 0.0;
    VectorXd grad;
    std::string error;
};

// Pairwise tree reduction in fixed block order.
template <class T, class Add>
void tree_reduce(std::vector<T>& items, const Add& add) {
    for (size_t gap = 1; gap < items.size(); gap *= 2)
        for (size_t i = 0; i + gap < items.size(); i += 2 * gap)
            add(items[i], items[i + gap]);
}

}  // namespace

LossTerms PdeLoss::evaluate(const ResNetParams& params,
                            const CollocationBatch& batch,
                            VectorXd* grad) const {
    const int n = contract_.n_assets;
    const int n_int = static_cast<int>(batch.t_interior.size());
    const int n_term = static_cast<int>(batch.s_terminal.cols());
    const bool american = contract_.style == ExerciseStyle::American;
    const bool pinn = config_.mode == TrainMode::PINN;
    const bool want_tc = pinn;  // exact terminal makes L_tc identically zero
    const double inv_int = 1.0 / n_int;
    const double inv_term = 1.0 / n_term;

    const int n_blocks_int = (n_int + kBlockPoints - 1) / kBlockPoints;
    const int n_blocks_term =
        want_tc ? (n_term + kBlockPoints - 1) / kBlockPoints : 0;
    const int n_blocks = n_blocks_int + n_blocks_term;

    std::vector<BlockResult> results(n_blocks);
    int n_threads = config_.threads > 0
                        ? config_.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_blocks));

    auto run_block = [&](int b, NetBatch& nb_full, NetBatch& nb_val) {
        BlockResult& res = results[b];
        if (grad) res.grad = VectorXd::Zero(params.theta.size());
        try {
            if (b < n_blocks_int) {
                const int lo = b * kBlockPoints;
                const int count = std::min(kBlockPoints, n_int - lo);
                JetBatchLayout layout{n, count, true};
                nb_full.configure(params.dims, layout);
                const MatrixXd s_blk = batch.s_interior.middleCols(lo, count);
                const VectorXd t_blk = batch.t_interior.segment(lo, count);
                nb_full.forward(params,
                                make_input_jets(s_blk, t_blk, layout,
                                                contract_.strike,
                                                config_.normalize_inputs));
                MatrixXd out_bar;
                if (grad) out_bar = MatrixXd::Zero(1, layout.cols());
                for (int p = 0; p < count; ++p) {
                    const VectorXd s = s_blk.col(p);
                    const double t = t_blk[p];
                    const Jet u = nb_full.output_jet(p);
                    Jet f_jet;     // jet the PDE operator is applied to
                    double u_val;  // trial value for the time-value terms
                    Jet g1;
                    if (pinn) {
                        f_jet = u;
                        u_val = u.v;
                    } else {
                        std::array<Jet, Jet::kMaxAssets> sj;
                        for (int i = 0; i < n; ++i)
                            sj[i] = Jet::spatial(s[i], i, n);
                        const Jet tj = Jet::time(t, n);
                        g1 = g1_eval(pair_, tj);
                        const Jet g1u = g1 * u;
                        if (config_.use_fg1u_shortcut) {
                            const double g2v = g2_eval<double>(
                                pair_, s.data(), n, t);
                            f_jet = g1u;
                            u_val = g1u.v + g2v;
                        } else {
                            const Jet g2 = g2_eval(pair_, sj.data(), n, tj);
                            f_jet = g1u + g2;
                            u_val = f_jet.v;
                        }
                    }
                    const double f_res = residual_F(f_jet, s, market_);
                    const double tv = u_val - payoff_eval(contract_, s);
                    if (!std::isfinite(f_res) || !std::isfinite(tv)) {
                        res.error = "non-finite loss term at point (s=" +
                                    std::to_string(s[0]) +
                                    ", t=" + std::to_string(t) + ")";
                        return;
                    }
                    double d_f = 0.0, d_tv = 0.0;
                    if (american) {
                        const double bs_pos = std::max(f_res, 0.0);
                        const double tv_neg = std::min(tv, 0.0);
                        const double eq = f_res * tv;
                        res.bs += bs_pos * bs_pos;
                        res.tv += tv_neg * tv_neg;
                        res.eq += eq * eq;
                        if (grad) {
                            d_f = 2.0 * inv_int *
                                  (config_.lambda_bs * bs_pos +
                                   config_.lambda_eq * eq * tv);
                            d_tv = 2.0 * inv_int *
                                   (config_.lambda_tv * tv_neg +
                                    config_.lambda_eq * eq * f_res);
                        }
                    } else {
                        res.f += f_res * f_res;
                        if (grad) d_f = 2.0 * inv_int * config_.lambda_f * f_res;
                    }
                    if (grad) {
                        // seed the adjoint of f_jet (plus the value channel
                        // from the time-value terms), then pull it back
                        // through the trial construction
                        Jet zbar(0.0, n);
                        zbar.v = -market_.r * d_f + d_tv;
                        zbar.dt = d_f;
                        for (int i = 0; i < n; ++i) {
                            zbar.ds[i] =
                                (market_.r - market_.q[i]) * s[i] * d_f;
                            zbar.dss[Jet::pair_index(i, i, n)] =
                                0.5 * market_.sigma[i] * market_.sigma[i] *
                                s[i] * s[i] * d_f;
                            for (int j = i + 1; j < n; ++j)
                                zbar.dss[Jet::pair_index(i, j, n)] =
                                    market_.sigma[i] * market_.sigma[j] *
                                    market_.rho(i, j) * s[i] * s[j] * d_f;
                        }
                        const Jet ubar =
                            pinn ? zbar : jet_mul_adjoint(g1, zbar);
                        const auto& layout_ref = nb_full.layout();
                        out_bar(0, p) = ubar.v;
                        out_bar(0, count + p) = ubar.dt;
                        for (int i = 0; i < n; ++i)
                            out_bar(0, layout_ref.ch_ds(i) * count + p) =
                                ubar.ds[i];
                        int k = 0;
                        for (int i = 0; i < n; ++i)
                            for (int j = i; j < n; ++j, ++k)
                                out_bar(0, layout_ref.ch_dss(i, j) * count + p) =
                                    ubar.dss[k];
                    }
                }
                if (grad) nb_full.backward(params, out_bar, res.grad);
            } else {
                // terminal batch (PINN only): value-only pass at t = T
                const int tb = b - n_blocks_int;
                const int lo = tb * kBlockPoints;
                const int count = std::min(kBlockPoints, n_term - lo);
                JetBatchLayout layout{n, count, false};
                nb_val.configure(params.dims, layout);
                const MatrixXd s_blk = batch.s_terminal.middleCols(lo, count);
                const VectorXd t_blk =
                    VectorXd::Constant(count, contract_.maturity);
                nb_val.forward(params,
                               make_input_jets(s_blk, t_blk, layout,
                                               contract_.strike,
                                               config_.normalize_inputs));
                MatrixXd out_bar;
                if (grad) out_bar = MatrixXd::Zero(1, layout.cols());
                for (int p = 0; p < count; ++p) {
                    const double u = nb_val.output()(0, p);
                    const double miss =
                        u - payoff_eval(contract_, s_blk.col(p));
                    if (!std::isfinite(miss)) {
                        res.error = "non-finite terminal loss at s=" +
                                    std::to_string(s_blk(0, p));
                        return;
                    }
                    res.tc += miss * miss;
                    if (grad)
                        out_bar(0, p) =
                            2.0 * inv_term * config_.lambda_tc * miss;
                }
                if (grad) nb_val.backward(params, out_bar, res.grad);
            }
        } catch (const std::exception& e) {
            res.error = e.what();
        }
    };

    if (n_threads == 1) {
        NetBatch nb_full, nb_val;
        for (int b = 0; b < n_blocks; ++b) run_block(b, nb_full, nb_val);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w]() {
                NetBatch nb_full, nb_val;
                for (int b = w; b < n_blocks; b += n_threads)
                    run_block(b, nb_full, nb_val);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (const auto& r : results)
        if (!r.error.empty()) throw NumericsError(r.error);

    tree_reduce(results, [grad](BlockResult& a, const BlockResult& b) {
        a.bs += b.bs;
        a.tv += b.tv;
        a.eq += b.eq;
        a.f += b.f;
        a.tc += b.tc;
        if (grad) a.grad += b.grad;
    });

    LossTerms terms;
    terms.bs = results[0].bs * inv_int;
    terms.tv = results[0].tv * inv_int;
    terms.eq = results[0].eq * inv_int;
    terms.f = results[0].f * inv_int;
    terms.tc = want_tc ? results[0].tc * inv_term : 0.0;
    if (american)
        terms.total = config_.lambda_bs * terms.bs + config_.lambda_tv * terms.tv +
                      config_.lambda_eq * terms.eq +
                      (want_tc ? config_.lambda_tc * terms.tc : 0.0);
    else
        terms.total = config_.lambda_f * terms.f +
                      (want_tc ? config_.lambda_tc * terms.tc : 0.0);
    if (grad) *grad = results[0].grad;
    return terms;
}

LossTerms PdeLoss::evaluate_frozen(
    const std::function<Jet(const VectorXd&, double)>& surface,
    const CollocationBatch& batch) const {
    const int n_int = static_cast<int>(batch.t_interior.size());
    const bool american = contract_.style == ExerciseStyle::American;
    LossTerms terms;
    for (int p = 0; p < n_int; ++p) {
        const VectorXd s = batch.s_interior.col(p);
        const Jet u = surface(s, batch.t_interior[p]);
        const double f_res = residual_F(u, s, market_);
        if (american) {
            const double tv = u.v - payoff_eval(contract_, s);
            const double bs_pos = std::max(f_res, 0.0);
            const double tv_neg = std::min(tv, 0.0);
            terms.bs += bs_pos * bs_pos;
            terms.tv += tv_neg * tv_neg;
            terms.eq += f_res * tv * f_res * tv;
        } else {
            terms.f += f_res * f_res;
        }
    }
    terms.bs /= n_int;
    terms.tv /= n_int;
    terms.eq /= n_int;
    terms.f /= n_int;
    terms.total = american
                      ? config_.lambda_bs * terms.bs +
                            config_.lambda_tv * terms.tv +
                            config_.lambda_eq * terms.eq
                      : config_.lambda_f * terms.f;
    return terms;
}

TrainResult train(const TrainConfig& config, const OptionContract& contract,
                  const MarketParams& market, const TerminalPair& pair,
                  const ResNetParams& net_init, const CheckpointSink& sink) {
    {
        auto report = config.check();
        auto market_report = validate(market, contract);
        report.insert(report.end(), market_report.begin(), market_report.end());
        const std::string pair_msg = terminal_pair_check(pair);
        if (!pair_msg.empty()) report.push_back(pair_msg);
        if (config.domain.n_assets() != contract.n_assets)
            report.push_back("training domain dimension mismatch");
        if (net_init.dims.d_in != contract.n_assets + 1)
            report.push_back("network d_in must equal n_assets + 1");
        if (!report.empty()) {
            std::string msg = "train: invalid configuration:";
            for (const auto& m : report) msg += "\n  - " + m;
            throw ValidationError(msg);
        }
    }

    TrainResult result{net_init, {}};
    if (config.iterations == 0) {
        if (sink) sink(0, result.params, result.log);
        return result;
    }

    PdeLoss loss(config, contract, market, pair);
    AdamState adam = AdamState::zeros(net_init.theta.size());
    std::mt19937_64 rng(config.seed);
    VectorXd grad(net_init.theta.size());
    VectorXd prev_theta = result.params.theta;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0)
            .count();
    };

    for (long iter = 0; iter < config.iterations; ++iter) {
        const long doublings =
            std::min<long>(iter / config.doubling_period, 30);
        const int n_tc_i = config.n_tc << doublings;
        const int n_int_i = config.interior_multiplier * n_tc_i;
        CollocationBatch batch = sample_collocation(
            config.domain, contract.maturity, n_int_i, n_tc_i, rng);
        grad.setZero();
        LossTerms terms;
        try {
            terms = loss.evaluate(result.params, batch, &grad);
        } catch (const NumericsError&) {
            result.params.theta = prev_theta;
            if (sink) sink(iter, result.params, result.log);
            throw DivergenceError("training diverged at iteration " +
                                  std::to_string(iter));
        }
        if (!std::isfinite(terms.total)) {
            result.params.theta = prev_theta;
            if (sink) sink(iter, result.params, result.log);
            throw DivergenceError("training diverged at iteration " +
                                  std::to_string(iter));
        }
        const double lr = lr_at(iter, config);
        if (iter % config.log_every == 0)
            result.log.push_back({iter, terms, lr, elapsed()});
        prev_theta = result.params.theta;
        adam_step(result.params.theta, grad, adam, lr, config);
        if (sink && config.checkpoint_every > 0 &&
            (iter + 1) % config.checkpoint_every == 0 &&
            iter + 1 < config.iterations)
            sink(iter + 1, result.params, result.log);
    }

    // closing log row on a fresh batch at the final parameters
    {
        const long doublings =
            std::min<long>(config.iterations / config.doubling_period, 30);
        const int n_tc_i = config.n_tc << doublings;
        CollocationBatch batch = sample_collocation(
            config.domain, contract.maturity,
            config.interior_multiplier * n_tc_i, n_tc_i, rng);
        const LossTerms terms = loss.evaluate(result.params, batch, nullptr);
        result.log.push_back(
            {config.iterations, terms, lr_at(config.iterations, config),
             elapsed()});
    }
    if (sink) sink(config.iterations, result.params, result.log);
    return result;
}

void write_train_log_csv(const std::string& path,
                         const std::vector<LogRow>& log,
                         bool include_seconds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path);
    out << "iter,L_bs,L_tv,L_eq,L_tc,L_f,total,lr";
    if (include_seconds) out << ",seconds";
    out << "\n";
    char buf[512];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf),
                      "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      row.iter, row.losses.bs, row.losses.tv, row.losses.eq,
                      row.losses.tc, row.losses.f, row.losses.total, row.lr);
        out << buf;
        if (include_seconds) {
            std::snprintf(buf, sizeof(buf), ",%.3f", row.seconds);
            out << buf;
        }
        out << "\n";
    }
}

}  // namespace amopt
