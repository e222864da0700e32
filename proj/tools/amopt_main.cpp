// amopt: American/European option pricing toolkit.
// Subcommands: price, train, bench, boundary.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "amopt/analytic.hpp"
#include "amopt/baw.hpp"
#include "amopt/experiment.hpp"
#include "amopt/fd.hpp"
#include "amopt/lattice.hpp"
#include "amopt/lsm.hpp"
#include "amopt/metrics.hpp"
#include "amopt/solver.hpp"

namespace {

using namespace amopt;

struct MarketArgs {
    double r = 0.0;
    std::vector<double> sigma{0.2};
    std::vector<double> q;
    double rho = 0.0;

    MarketParams build(int n) const {
        MarketParams p;
        p.r = r;
        if (static_cast<int>(sigma.size()) != n)
            throw ValidationError("--sigma needs one value per asset");
        p.sigma = Eigen::Map<const VectorXd>(sigma.data(), n);
        std::vector<double> qv = q;
        if (qv.empty()) qv.assign(n, 0.0);
        if (static_cast<int>(qv.size()) != n)
            throw ValidationError("--q needs one value per asset");
        p.q = Eigen::Map<const VectorXd>(qv.data(), n);
        p.rho = MatrixXd::Identity(n, n);
        if (n == 2) p.rho(0, 1) = p.rho(1, 0) = rho;
        return p;
    }
};

void add_market_options(CLI::App* cmd, MarketArgs& m) {
    cmd->add_option("--r", m.r, "risk-free rate");
    cmd->add_option("--sigma", m.sigma, "per-asset volatilities")
        ->delimiter(',');
    cmd->add_option("--q", m.q, "per-asset dividend yields")->delimiter(',');
    cmd->add_option("--rho", m.rho, "correlation (two assets)");
}

int cmd_price(const std::string& solver, const MarketArgs& margs,
              const std::string& kind, const std::string& style, double strike,
              double maturity, const std::vector<double>& spot, double tau,
              int steps, int paths, std::uint64_t seed,
              const std::string& checkpoint, int threads) {
    OptionContract contract;
    contract.kind = payoff_kind_from_string(kind);
    contract.strike = strike;
    contract.maturity = maturity;
    contract.style = style_from_string(style);
    contract.n_assets = static_cast<int>(spot.size());
    const VectorXd s = Eigen::Map<const VectorXd>(spot.data(), spot.size());

    if (solver == "etcnn-checkpoint") {
        auto [params, meta] = load_checkpoint(checkpoint);
        const OptionContract own = contract_from_json(meta.at("contract"));
        std::optional<double> strike_override;
        if (std::abs(strike - own.strike) > 1e-12) strike_override = strike;
        const double v = checkpoint_price(params, meta, s,
                                          own.maturity - tau, strike_override);
        std::printf("etcnn-checkpoint %.6f\n", v);
        return 0;
    }

    MarketParams market = margs.build(contract.n_assets);
    validate_or_throw(market, contract);

    if (solver == "analytic") {
        if (contract.style == ExerciseStyle::American)
            throw ValidationError(
                "analytic: European style only (no American closed form)");
        std::printf("analytic %.6f\n",
                    european_price(market, contract, s, tau));
    } else if (solver == "bt") {
        LatticeSpec spec{steps, contract.style};
        std::printf("bt %.6f\n",
                    bt_price_1d(market, contract, spec, s[0], tau));
    } else if (solver == "bt2d") {
        LatticeSpec spec{steps, contract.style};
        std::printf("bt2d %.6f\n",
                    bt_price_2d(market, contract, spec, s[0], s[1], tau));
    } else if (solver == "fd") {
        FDSpec spec;
        spec.time_steps = steps;
        spec.style = contract.style;
        std::printf("fd %.6f\n", fd_price_at(market, contract, spec, s[0], tau));
    } else if (solver == "lsm") {
        LSMSpec spec;
        spec.exercise_dates = steps;
        spec.paths = paths;
        spec.seed = seed;
        spec.style = contract.style;
        const auto res = lsm_price(market, contract, spec, s, tau, threads);
        std::printf("lsm %.6f (se %.6f)\n", res.price, res.std_error);
    } else if (solver == "baw") {
        if (contract.style == ExerciseStyle::European)
            throw ValidationError("baw: American approximation only");
        std::printf("baw %.6f\n", baw_price(market, contract, s[0], tau));
    } else if (solver == "reduced-bt") {
        LatticeSpec spec{steps, contract.style};
        std::printf("reduced-bt %.6f\n",
                    reduced_reference(market, contract, spec, s, tau));
    } else {
        throw ValidationError("unknown solver: " + solver);
    }
    return 0;
}

int cmd_train(const std::string& spec_path, const std::string& resume,
              int threads) {
    ExperimentSpec spec = ExperimentSpec::load(spec_path);
    // pick the first trained solver of the spec
    json solver_json;
    for (const auto& s : spec.solvers) {
        const auto name = s.at("name").get<std::string>();
        if (name == "etcnn" || name == "pinn") {
            solver_json = s;
            break;
        }
    }
    if (solver_json.is_null())
        throw ValidationError("spec has no etcnn/pinn solver to train");
    const std::string name = solver_json.at("name").get<std::string>();
    const std::string label = solver_json.value("label", name);

    TrainConfig cfg = train_config_from_json(
        solver_json.value("train", json::object()),
        spec.train_domain.value_or(spec.eval_domain));
    cfg.seed = spec.seeds.empty() ? 0 : spec.seeds[0];
    cfg.threads = threads;
    cfg.mode = name == "pinn" ? TrainMode::PINN : TrainMode::ETCNN;
    cfg.normalize_inputs = solver_json.value("normalize", true);
    cfg.use_fg1u_shortcut = solver_json.value("shortcut", false);

    TerminalPair pair;
    pair.contract = spec.contract;
    pair.params = spec.market;
    pair.g2 = g2_kind_from_string(solver_json.value(
        "g2", to_string(G2Kind::PutV1V2)));

    ResNetParams net0;
    long start_iter = 0;
    if (!resume.empty()) {
        auto [p, meta] = load_checkpoint(resume);
        net0 = std::move(p);
        start_iter = meta.value("iteration", 0L);
        std::fprintf(stderr, "resuming from %s at iteration %ld\n",
                     resume.c_str(), start_iter);
        if (cfg.iterations <= start_iter)
            throw ValidationError("checkpoint already past --iterations");
        cfg.iterations -= start_iter;
    } else {
        net0 = init_params(solver_json.value("blocks", 4),
                           solver_json.value("layers", 2),
                           solver_json.value("width", 50),
                           spec.contract.n_assets + 1,
                           cfg.seed * 0x9E3779B97F4A7C15ull + 1);
    }

    std::filesystem::create_directories(spec.out_dir);
    const auto ckpt_path = spec.out_dir / (label + ".ckpt");
    auto sink = [&](long iter, const ResNetParams& p,
                    const std::vector<LogRow>& log) {
        json meta;
        meta["g1"] = "time_to_maturity";
        meta["g2"] = to_string(pair.g2);
        meta["mode"] = to_string(cfg.mode);
        meta["normalize"] = cfg.normalize_inputs;
        meta["contract"] = to_json(spec.contract);
        meta["market"] = to_json(spec.market);
        meta["config_hash"] = std::to_string(cfg.hash());
        meta["iteration"] = start_iter + iter;
        meta["seed"] = cfg.seed;
        save_checkpoint(ckpt_path.string(), p, meta);
        write_train_log_csv((spec.out_dir / "train_log.csv").string(), log);
    };
    const TrainResult res =
        train(cfg, spec.contract, spec.market, pair, net0, sink);
    std::printf("trained %s for %ld iterations; final total loss %.6g\n",
                label.c_str(), cfg.iterations,
                res.log.empty() ? 0.0 : res.log.back().losses.total);
    std::printf("checkpoint: %s\n", ckpt_path.string().c_str());
    return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out_override,
              int threads) {
    ExperimentSpec spec = ExperimentSpec::load(spec_path);
    if (!out_override.empty()) {
        std::printf("note: --out overrides spec output_dir (%s -> %s)\n",
                    spec.out_dir.string().c_str(), out_override.c_str());
        spec.out_dir = out_override;
    }
    const ExperimentResult res = run_experiment(spec, threads);
    for (const auto& o : res.outcomes)
        std::printf("%-24s seed %-6s %s%s\n", o.solver.c_str(), o.seed.c_str(),
                    o.ok ? "ok" : "FAILED: ", o.message.c_str());
    std::printf("artifacts: %s\n", spec.out_dir.string().c_str());
    return res.all_ok ? 0 : 1;
}

int cmd_boundary(const std::string& solver, const MarketArgs& margs,
                 const std::string& kind, double strike, double maturity,
                 int steps, double s_lo, double s_hi, int s_ticks, double t_lo,
                 double t_hi, int t_ticks, double tolerance,
                 const std::string& checkpoint, const std::string& out_path,
                 int threads) {
    OptionContract contract;
    contract.kind = payoff_kind_from_string(kind);
    contract.strike = strike;
    contract.maturity = maturity;
    contract.style = ExerciseStyle::American;
    contract.n_assets = 1;

    const VectorXd s_axis = linspace(s_lo, s_hi, s_ticks);
    const VectorXd t_axis = linspace(t_lo, t_hi, t_ticks);
    PriceSurface surf;
    if (solver == "bt") {
        MarketParams market = margs.build(1);
        validate_or_throw(market, contract);
        LatticeSpec spec{steps, contract.style};
        surf = bt_surface_1d(market, contract, spec, s_axis, t_axis, threads);
    } else if (solver == "checkpoint") {
        auto [params, meta] = load_checkpoint(checkpoint);
        contract = contract_from_json(meta.at("contract"));
        surf = checkpoint_surface(params, meta, {s_axis}, t_axis);
    } else {
        throw ValidationError("boundary: solver must be bt or checkpoint");
    }
    const double tol = tolerance > 0 ? tolerance : 1e-6 * contract.strike;
    const BoundaryCurve curve = free_boundary_1d(surf, contract, tol);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error("cannot open " + out_path);
    out << "t,s_star\n";
    char buf[64];
    for (Eigen::Index i = 0; i < curve.t.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", curve.t[i]);
        out << buf << ",";
        if (curve.s_star[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", *curve.s_star[i]);
            out << buf;
        } else {
            out << "nan";
        }
        out << "\n";
    }
    std::printf("boundary written to %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"American option pricing toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads,
                   "worker threads (default: hardware concurrency)");

    // price
    auto* price = app.add_subcommand("price", "price one option");
    std::string solver = "bt", kind = "put", style = "american";
    std::string checkpoint, spec_path, resume, out_path = "boundary.csv";
    std::string out_override;
    MarketArgs margs;
    double strike = 100.0, maturity = 1.0, tau = 1.0, tolerance = 0.0;
    std::vector<double> spot{100.0};
    int steps = 4000, paths = 10000, s_ticks = 201, t_ticks = 101;
    double s_lo = 20.0, s_hi = 100.0, t_lo = 0.0, t_hi = 0.999;
    std::uint64_t seed = 0;

    price->add_option("--solver", solver,
                      "bt|bt2d|fd|lsm|baw|analytic|reduced-bt|etcnn-checkpoint");
    price->add_option("--kind", kind, "put|call|geo_put|max_call");
    price->add_option("--style", style, "american|european");
    price->add_option("--K", strike, "strike");
    price->add_option("--T", maturity, "maturity (years)");
    price->add_option("--s", spot, "spot price(s)")->delimiter(',');
    price->add_option("--tau", tau, "time to maturity (years)");
    price->add_option("--N", steps, "lattice/FD steps or LSM exercise dates");
    price->add_option("--paths", paths, "LSM paths");
    price->add_option("--seed", seed, "LSM seed");
    price->add_option("--checkpoint", checkpoint, "trained model file");
    add_market_options(price, margs);

    // train
    auto* tr = app.add_subcommand("train", "train a model from a spec file");
    tr->add_option("--spec", spec_path, "experiment spec (json)")->required();
    tr->add_option("--resume", resume, "checkpoint to resume from");

    // bench
    auto* bench = app.add_subcommand("bench", "run an experiment spec");
    bench->add_option("--spec", spec_path, "experiment spec (json)")
        ->required();
    bench->add_option("--out", out_override, "output directory override");

    // boundary
    auto* bd = app.add_subcommand("boundary", "extract an exercise boundary");
    bd->add_option("--solver", solver, "bt|checkpoint");
    bd->add_option("--kind", kind, "put|call");
    bd->add_option("--K", strike, "strike");
    bd->add_option("--T", maturity, "maturity");
    bd->add_option("--N", steps, "lattice steps");
    bd->add_option("--s-lo", s_lo, "scan window low");
    bd->add_option("--s-hi", s_hi, "scan window high");
    bd->add_option("--s-ticks", s_ticks, "scan ticks");
    bd->add_option("--t-lo", t_lo, "first time tick");
    bd->add_option("--t-hi", t_hi, "last time tick");
    bd->add_option("--t-ticks", t_ticks, "time ticks");
    bd->add_option("--tolerance", tolerance, "|V - payoff| tolerance");
    bd->add_option("--checkpoint", checkpoint, "trained model file");
    bd->add_option("--out", out_path, "output csv");
    add_market_options(bd, margs);

    try {
        app.parse(argc, argv);
        if (price->parsed())
            return cmd_price(solver, margs, kind, style, strike, maturity,
                             spot, tau, steps, paths, seed, checkpoint,
                             threads);
        if (tr->parsed()) return cmd_train(spec_path, resume, threads);
        if (bench->parsed()) return cmd_bench(spec_path, out_override, threads);
        if (bd->parsed())
            return cmd_boundary(solver, margs, kind, strike, maturity, steps,
                                s_lo, s_hi, s_ticks, t_lo, t_hi, t_ticks,
                                tolerance, checkpoint, out_path, threads);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const amopt::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
