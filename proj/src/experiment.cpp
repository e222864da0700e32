#include "amopt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>

#include "amopt/analytic.hpp"
#include "amopt/baw.hpp"
#include "amopt/fd.hpp"
#include "amopt/lattice.hpp"
#include "amopt/lsm.hpp"
#include "amopt/metrics.hpp"

namespace amopt {

namespace fs = std::filesystem;

json to_json(const MarketParams& params) {
    json j;
    j["r"] = params.r;
    j["sigma"] = std::vector<double>(params.sigma.data(),
                                     params.sigma.data() + params.sigma.size());
    j["q"] = std::vector<double>(params.q.data(),
                                 params.q.data() + params.q.size());
    std::vector<std::vector<double>> rho;
    for (Eigen::Index i = 0; i < params.rho.rows(); ++i) {
        std::vector<double> row;
        for (Eigen::Index k = 0; k < params.rho.cols(); ++k)
            row.push_back(params.rho(i, k));
        rho.push_back(row);
    }
    j["rho"] = rho;
    return j;
}

json to_json(const OptionContract& contract) {
    return {{"kind", to_string(contract.kind)},
            {"strike", contract.strike},
            {"maturity", contract.maturity},
            {"n_assets", contract.n_assets},
            {"style", to_string(contract.style)}};
}

json to_json(const Domain& domain) {
    return {{"s_lo", std::vector<double>(domain.s_lo.data(),
                                         domain.s_lo.data() + domain.s_lo.size())},
            {"s_hi", std::vector<double>(domain.s_hi.data(),
                                         domain.s_hi.data() + domain.s_hi.size())},
            {"t_lo", domain.t_lo},
            {"t_hi", domain.t_hi}};
}

MarketParams market_from_json(const json& j) {
    MarketParams p;
    p.r = j.at("r").get<double>();
    const auto sigma = j.at("sigma").get<std::vector<double>>();
    const auto q = j.at("q").get<std::vector<double>>();
    p.sigma = Eigen::Map<const VectorXd>(sigma.data(), sigma.size());
    p.q = Eigen::Map<const VectorXd>(q.data(), q.size());
    const auto rho = j.at("rho").get<std::vector<std::vector<double>>>();
    p.rho.resize(rho.size(), rho.size());
    for (size_t i = 0; i < rho.size(); ++i) {
        if (rho[i].size() != rho.size())
            throw ValidationError("market.rho must be square");
        for (size_t k = 0; k < rho[i].size(); ++k) p.rho(i, k) = rho[i][k];
    }
    return p;
}

OptionContract contract_from_json(const json& j) {
    OptionContract c;
    c.kind = payoff_kind_from_string(j.at("kind").get<std::string>());
    c.strike = j.at("strike").get<double>();
    c.maturity = j.at("maturity").get<double>();
    c.n_assets = j.at("n_assets").get<int>();
    c.style = style_from_string(j.value("style", std::string("american")));
    return c;
}

Domain domain_from_json(const json& j) {
    Domain d;
    const auto lo = j.at("s_lo").get<std::vector<double>>();
    const auto hi = j.at("s_hi").get<std::vector<double>>();
    d.s_lo = Eigen::Map<const VectorXd>(lo.data(), lo.size());
    d.s_hi = Eigen::Map<const VectorXd>(hi.data(), hi.size());
    d.t_lo = j.at("t_lo").get<double>();
    d.t_hi = j.at("t_hi").get<double>();
    return d;
}

TrainConfig train_config_from_json(const json& j,
                                   const Domain& fallback_domain) {
    TrainConfig c;
    c.lambda_bs = j.value("lambda_bs", c.lambda_bs);
    c.lambda_tv = j.value("lambda_tv", c.lambda_tv);
    c.lambda_eq = j.value("lambda_eq", c.lambda_eq);
    c.lambda_tc = j.value("lambda_tc", c.lambda_tc);
    c.lambda_f = j.value("lambda_f", c.lambda_f);
    c.n_tc = j.value("n_tc", c.n_tc);
    c.interior_multiplier = j.value("interior_multiplier", c.interior_multiplier);
    c.iterations = j.value("iterations", c.iterations);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.gamma = j.value("gamma", c.gamma);
    c.stage1_iters = j.value("stage1_iters", c.stage1_iters);
    c.stage1_period = j.value("stage1_period", c.stage1_period);
    c.stage2_period = j.value("stage2_period", c.stage2_period);
    c.doubling_period = j.value("doubling_period", c.doubling_period);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.log_every = j.value("log_every", c.log_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.domain = j.contains("domain") ? domain_from_json(j.at("domain"))
                                    : fallback_domain;
    return c;
}

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

G2Kind default_g2_for(const OptionContract& contract) {
    switch (contract.kind) {
        case PayoffKind::PutVanilla: return G2Kind::PutV1V2;
        case PayoffKind::CallVanilla:
            return G2Kind::CallDivTaylor;
        case PayoffKind::PutGeometricMean: return G2Kind::GeoMeanPutTaylor;
        case PayoffKind::CallOnMax: return G2Kind::MaxCallExactVe;
        default:
            throw UnsupportedPayoffError("no terminal pair for this payoff");
    }
}

}  // namespace

ExperimentSpec ExperimentSpec::parse(const json& j) {
    ExperimentSpec spec;
    spec.name = j.value("name", std::string("experiment"));
    spec.out_dir = j.value("output_dir", std::string("runs/") + spec.name);
    spec.market = market_from_json(j.at("market"));
    spec.contract = contract_from_json(j.at("contract"));
    validate_or_throw(spec.market, spec.contract);
    if (j.contains("eval_domain"))
        spec.eval_domain = domain_from_json(j.at("eval_domain"));
    spec.eval_ticks_s = j.value("eval_ticks_s", j.value("eval_ticks", 101));
    spec.eval_ticks_t = j.value("eval_ticks_t", j.value("eval_ticks", 101));
    spec.reference = j.value("reference", json{{"solver", "bt"}, {"N", 4000}});
    if (j.contains("solvers"))
        for (const auto& s : j.at("solvers")) spec.solvers.push_back(s);
    if (j.contains("cells")) {
        for (const auto& c : j.at("cells")) {
            CellQuery q;
            const auto s = c.at("s").get<std::vector<double>>();
            q.s = Eigen::Map<const VectorXd>(s.data(), s.size());
            q.tau = c.at("tau").get<double>();
            spec.cells.push_back(q);
        }
    }
    if (j.contains("seeds"))
        spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    else {
        const int reps = j.value("repetitions", 1);
        for (int i = 0; i < reps; ++i) spec.seeds.push_back(i);
    }
    if (j.contains("boundary")) spec.boundary = j.at("boundary");
    if (j.contains("train_domain"))
        spec.train_domain = domain_from_json(j.at("train_domain"));
    return spec;
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open spec file: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const std::exception& e) {
        throw ValidationError("spec parse failure in " + path + ": " + e.what());
    }
    return parse(j);
}

fs::path cache_dir() {
    if (const char* env = std::getenv("ETC_CACHE_DIR"); env && *env)
        return fs::path(env);
    return fs::path(".amopt_cache");
}

namespace {

constexpr char kSurfMagic[8] = {'A', 'M', 'O', 'P', 'T', 'S', 'F', '1'};

void write_vec(std::ofstream& out, const VectorXd& v) {
    const std::uint64_t count = v.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
}

bool read_vec(std::ifstream& in, VectorXd& v) {
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count > (1ull << 32)) return false;
    v.resize(static_cast<Eigen::Index>(count));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    return static_cast<bool>(in);
}

bool load_cached_surface(const fs::path& file, const std::string& key,
                         PriceSurface& surf) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return false;
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kSurfMagic, sizeof(kSurfMagic)) != 0)
        return false;
    std::uint64_t key_len = 0;
    in.read(reinterpret_cast<char*>(&key_len), sizeof(key_len));
    if (!in || key_len > (1ull << 20)) return false;
    std::string stored(key_len, '\0');
    in.read(stored.data(), static_cast<std::streamsize>(key_len));
    if (!in || stored != key) return false;
    std::uint64_t n_axes = 0;
    in.read(reinterpret_cast<char*>(&n_axes), sizeof(n_axes));
    if (!in || n_axes > 8) return false;
    surf.s_axes.resize(n_axes);
    for (auto& ax : surf.s_axes)
        if (!read_vec(in, ax)) return false;
    if (!read_vec(in, surf.t_axis)) return false;
    if (!read_vec(in, surf.values)) return false;
    return surf.values.size() == surf.size();
}

void store_cached_surface(const fs::path& file, const std::string& key,
                          const PriceSurface& surf) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) return;  // cache is best-effort
    out.write(kSurfMagic, sizeof(kSurfMagic));
    const std::uint64_t key_len = key.size();
    out.write(reinterpret_cast<const char*>(&key_len), sizeof(key_len));
    out.write(key.data(), static_cast<std::streamsize>(key_len));
    const std::uint64_t n_axes = surf.s_axes.size();
    out.write(reinterpret_cast<const char*>(&n_axes), sizeof(n_axes));
    for (const auto& ax : surf.s_axes) write_vec(out, ax);
    write_vec(out, surf.t_axis);
    write_vec(out, surf.values);
}

struct EvalGrid {
    std::vector<VectorXd> s_axes;
    VectorXd t_axis;
};

EvalGrid make_eval_grid(const ExperimentSpec& spec) {
    EvalGrid grid;
    const int n = spec.contract.n_assets;
    if (spec.eval_domain.n_assets() != n)
        throw ValidationError("eval_domain dimension mismatch");
    for (int i = 0; i < n; ++i)
        grid.s_axes.push_back(linspace(spec.eval_domain.s_lo[i],
                                       spec.eval_domain.s_hi[i],
                                       spec.eval_ticks_s));
    grid.t_axis = linspace(spec.eval_domain.t_lo, spec.eval_domain.t_hi,
                           spec.eval_ticks_t);
    return grid;
}

std::string surface_key(const ExperimentSpec& spec, const json& solver,
                        const EvalGrid& grid) {
    json key;
    key["market"] = to_json(spec.market);
    key["contract"] = to_json(spec.contract);
    key["solver"] = solver;
    std::string s = key.dump();
    for (const auto& ax : grid.s_axes)
        for (Eigen::Index i = 0; i < ax.size(); ++i) s += "," + fmt(ax[i]);
    s += ";t";
    for (Eigen::Index i = 0; i < grid.t_axis.size(); ++i)
        s += "," + fmt(grid.t_axis[i]);
    return s;
}

// Geometric-mean problems reduce to one dimension in I = (prod s)^1/n: price
// a 1-d lattice surface over the I range and read values off it.
PriceSurface geo_surface_via_reduction(const ExperimentSpec& spec,
                                       const LatticeSpec& lspec,
                                       const EvalGrid& grid, int threads) {
    const int n = spec.contract.n_assets;
    const auto [sigma_i, q_i] = geometric_reduction(spec.market, n);
    MarketParams reduced = MarketParams::single(spec.market.r, sigma_i, q_i);
    OptionContract put = spec.contract;
    put.kind = PayoffKind::PutVanilla;
    put.n_assets = 1;

    double i_lo = 1.0, i_hi = 1.0;
    for (int i = 0; i < n; ++i) {
        i_lo *= grid.s_axes[i].minCoeff();
        i_hi *= grid.s_axes[i].maxCoeff();
    }
    i_lo = std::pow(i_lo, 1.0 / n);
    i_hi = std::pow(i_hi, 1.0 / n);
    const VectorXd i_ticks = linspace(i_lo, i_hi, 257);
    const PriceSurface line =
        bt_surface_1d(reduced, put, lspec, i_ticks, grid.t_axis, threads);

    PriceSurface surf;
    surf.s_axes = grid.s_axes;
    surf.t_axis = grid.t_axis;
    surf.values.resize(surf.size());
    const Eigen::Index spatial = surf.spatial_size();
    std::vector<Eigen::Index> idx(n, 0);
    VectorXd s(n);
    for (Eigen::Index flat = 0; flat < spatial; ++flat) {
        Eigen::Index rem = flat;
        for (int a = n - 1; a >= 0; --a) {
            idx[a] = rem % grid.s_axes[a].size();
            rem /= grid.s_axes[a].size();
        }
        for (int a = 0; a < n; ++a) s[a] = grid.s_axes[a][idx[a]];
        const double iv = geometric_mean_price(s.data(), n, put.strike);
        const double x = std::clamp(
            (iv - i_lo) / (i_hi - i_lo) * (i_ticks.size() - 1), 0.0,
            static_cast<double>(i_ticks.size() - 1));
        const Eigen::Index i0 =
            std::min(static_cast<Eigen::Index>(x), i_ticks.size() - 2);
        const double f = x - i0;
        for (Eigen::Index jt = 0; jt < grid.t_axis.size(); ++jt)
            surf.values[jt * spatial + flat] =
                (1.0 - f) * line.at(i0, jt) + f * line.at(i0 + 1, jt);
    }
    return surf;
}

PriceSurface solver_surface(const ExperimentSpec& spec, const json& solver,
                            const EvalGrid& grid, int threads) {
    const std::string name = solver.at("solver").get<std::string>();
    const int n = spec.contract.n_assets;
    if (name == "bt") {
        LatticeSpec lspec;
        lspec.steps = solver.value("N", 4000);
        lspec.style = spec.contract.style;
        if (spec.contract.kind == PayoffKind::PutGeometricMean && n > 1)
            return geo_surface_via_reduction(spec, lspec, grid, threads);
        if (n == 1)
            return bt_surface_1d(spec.market, spec.contract, lspec,
                                 grid.s_axes[0], grid.t_axis, threads);
        if (n == 2)
            return bt_surface_2d(spec.market, spec.contract, lspec,
                                 grid.s_axes[0], grid.s_axes[1], grid.t_axis,
                                 threads);
        throw ValidationError("bt surface: unsupported dimension");
    }
    if (name == "fd") {
        FDSpec fspec;
        fspec.time_steps = solver.value("N", 400);
        fspec.space_nodes = solver.value("space_nodes", 401);
        fspec.s_max_mult = solver.value("s_max_mult", 4.0);
        fspec.style = spec.contract.style;
        if (solver.value("scheme", std::string("brennan_schwartz")) == "psor")
            fspec.scheme = FdScheme::Psor;
        return fd_price(spec.market, spec.contract, fspec, grid.s_axes[0],
                        grid.t_axis);
    }
    if (name == "baw" || name == "european") {
        PriceSurface surf;
        surf.s_axes = grid.s_axes;
        surf.t_axis = grid.t_axis;
        surf.values.resize(surf.size());
        const Eigen::Index spatial = surf.spatial_size();
        std::vector<Eigen::Index> idx(n, 0);
        VectorXd s(n);
        for (Eigen::Index flat = 0; flat < spatial; ++flat) {
            Eigen::Index rem = flat;
            for (int a = n - 1; a >= 0; --a) {
                idx[a] = rem % grid.s_axes[a].size();
                rem /= grid.s_axes[a].size();
            }
            for (int a = 0; a < n; ++a) s[a] = grid.s_axes[a][idx[a]];
            for (Eigen::Index jt = 0; jt < grid.t_axis.size(); ++jt) {
                const double tau = spec.contract.maturity - grid.t_axis[jt];
                surf.values[jt * spatial + flat] =
                    name == "baw"
                        ? (tau > 0.0
                               ? baw_price(spec.market, spec.contract, s[0],
                                           tau)
                               : payoff_eval(spec.contract, s))
                        : european_price(spec.market, spec.contract, s, tau);
            }
        }
        return surf;
    }
    throw ValidationError("no surface builder for solver: " + name);
}

double reference_cell(const ExperimentSpec& spec, const CellQuery& cell) {
    const std::string name = spec.reference.value("solver", std::string("bt"));
    LatticeSpec lspec;
    lspec.steps = spec.reference.value("N", 4000);
    lspec.style = spec.contract.style;
    if (cell.tau <= 0.0) return payoff_eval(spec.contract, cell.s);
    if (spec.contract.kind == PayoffKind::PutGeometricMean &&
        spec.contract.n_assets > 1)
        return reduced_reference(spec.market, spec.contract, lspec, cell.s,
                                 cell.tau);
    if (spec.contract.n_assets == 1)
        return bt_price_1d(spec.market, spec.contract, lspec, cell.s[0],
                           cell.tau);
    if (spec.contract.n_assets == 2)
        return bt_price_2d(spec.market, spec.contract, lspec, cell.s[0],
                           cell.s[1], cell.tau);
    throw ValidationError("reference cells: unsupported dimension (" + name +
                          ")");
}

struct CsvTable {
    std::string header;
    std::vector<std::string> rows;

    void write(const fs::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw Error("cannot open " + path.string());
        out << header << "\n";
        for (const auto& row : rows) out << row << "\n";
    }
};

std::string cell_row(const std::string& solver, const std::string& seed,
                     const CellQuery& cell, double value,
                     const std::string& se) {
    std::string s1 = fmt(cell.s[0]);
    std::string s2 = cell.s.size() > 1 ? fmt(cell.s[1]) : std::string();
    return solver + "," + seed + "," + s1 + "," + s2 + "," + fmt(cell.tau) +
           "," + fmt(value) + "," + se;
}

}  // namespace

PriceSurface checkpoint_surface(const ResNetParams& params, const json& meta,
                                const std::vector<VectorXd>& s_axes,
                                const VectorXd& t_axis) {
    TerminalPair pair;
    pair.contract = contract_from_json(meta.at("contract"));
    pair.params = market_from_json(meta.at("market"));
    pair.g2 = g2_kind_from_string(meta.at("g2").get<std::string>());
    const bool normalize = meta.value("normalize", true);
    const bool pinn_raw =
        meta.value("mode", std::string("etcnn")) == "pinn";
    const int n = pair.contract.n_assets;
    if (params.dims.d_in != n + 1)
        throw CheckpointError("checkpoint d_in does not match its contract");

    PriceSurface surf;
    surf.s_axes = s_axes;
    surf.t_axis = t_axis;
    surf.values.resize(surf.size());
    const Eigen::Index spatial = surf.spatial_size();

    // evaluate one time slice at a time
    MatrixXd pts(n, spatial);
    std::vector<Eigen::Index> idx(n, 0);
    for (Eigen::Index flat = 0; flat < spatial; ++flat) {
        Eigen::Index rem = flat;
        for (int a = n - 1; a >= 0; --a) {
            idx[a] = rem % s_axes[a].size();
            rem /= s_axes[a].size();
        }
        for (int a = 0; a < n; ++a) pts(a, flat) = s_axes[a][idx[a]];
    }
    for (Eigen::Index jt = 0; jt < t_axis.size(); ++jt) {
        const VectorXd tcol = VectorXd::Constant(spatial, t_axis[jt]);
        const VectorXd vals =
            trial_values(params, pair, normalize, pts, tcol, pinn_raw);
        surf.values.segment(jt * spatial, spatial) = vals;
    }
    return surf;
}

double checkpoint_price(const ResNetParams& params, const json& meta,
                        const VectorXd& s, double t,
                        std::optional<double> strike_override) {
    TerminalPair pair;
    pair.contract = contract_from_json(meta.at("contract"));
    pair.params = market_from_json(meta.at("market"));
    pair.g2 = g2_kind_from_string(meta.at("g2").get<std::string>());
    const bool normalize = meta.value("normalize", true);
    const bool pinn_raw = meta.value("mode", std::string("etcnn")) == "pinn";
    if (params.dims.d_in != pair.contract.n_assets + 1)
        throw CheckpointError("checkpoint d_in does not match its contract");

    double scale = 1.0;
    VectorXd s_eval = s;
    if (strike_override && *strike_override != pair.contract.strike) {
        if (!normalize)
            throw ValidationError(
                "this checkpoint was trained without input normalization and "
                "prices only its own strike");
        // homogeneity: V(s, K') = (K'/K0) V(s K0/K', K0)
        scale = *strike_override / pair.contract.strike;
        s_eval = s / scale;
    }
    VectorXd tcol(1);
    tcol << t;
    MatrixXd pts = s_eval;
    const VectorXd vals =
        trial_values(params, pair, normalize, pts, tcol, pinn_raw);
    return scale * vals[0];
}

ExperimentResult run_experiment(const ExperimentSpec& spec, int threads) {
    ExperimentResult result;
    fs::create_directories(spec.out_dir);
    if (spec.solvers.empty()) return result;  // nothing to do

    const EvalGrid grid = make_eval_grid(spec);

    // reference surface (cached) and reference cells
    PriceSurface reference;
    {
        json ref = spec.reference;
        ref["solver"] = spec.reference.value("solver", std::string("bt"));
        const std::string key = surface_key(spec, ref, grid);
        const fs::path cache_file =
            cache_dir() / (std::string("surf_") +
                           std::to_string(fnv1a(key)) + ".bin");
        if (!load_cached_surface(cache_file, key, reference)) {
            reference = solver_surface(spec, ref, grid, threads);
            store_cached_surface(cache_file, key, reference);
        }
    }

    CsvTable table{"solver,seed,s1,s2,tau,value,std_error", {}};
    CsvTable errors{"solver,seed,rel_l2,mae,samples,status", {}};
    CsvTable boundary{"solver,seed,which,t,coord,s_star", {}};
    CsvTable diffgrid{"solver,seed,s1,s2,t,diff", {}};
    CsvTable trainlog{"solver,seed,iter,L_bs,L_tv,L_eq,L_tc,L_f,total,lr", {}};

    for (const auto& cell : spec.cells)
        table.rows.push_back(
            cell_row("reference", "-", cell, reference_cell(spec, cell), ""));

    // optional boundary grid (1-d problems)
    std::optional<EvalGrid> bgrid;
    double btol = 1e-6 * spec.contract.strike;
    if (spec.boundary && spec.contract.n_assets == 1) {
        const json& b = *spec.boundary;
        EvalGrid g;
        g.s_axes.push_back(linspace(
            b.value("s_lo", spec.eval_domain.s_lo[0]),
            b.value("s_hi", spec.eval_domain.s_hi[0]), b.value("s_ticks", 201)));
        g.t_axis = linspace(b.value("t_lo", spec.eval_domain.t_lo),
                            b.value("t_hi", spec.eval_domain.t_hi),
                            b.value("t_ticks", 101));
        bgrid = g;
        btol = b.value("tolerance", btol);
    }

    auto emit_boundary = [&](const std::string& solver, const std::string& seed,
                             const PriceSurface& surf) {
        const BoundaryCurve curve =
            free_boundary_1d(surf, spec.contract, btol);
        for (Eigen::Index i = 0; i < curve.t.size(); ++i)
            boundary.rows.push_back(
                solver + "," + seed + ",s_star," + fmt(curve.t[i]) + ",," +
                (curve.s_star[i] ? fmt(*curve.s_star[i]) : std::string("nan")));
    };

    std::optional<PriceSurface> ref_boundary_surf;
    if (bgrid) {
        json ref = spec.reference;
        ref["solver"] = spec.reference.value("solver", std::string("bt"));
        EvalGrid g = *bgrid;
        ExperimentSpec bs = spec;  // same market/contract, boundary window
        const std::string key = surface_key(bs, ref, g) + ";boundary";
        const fs::path cache_file =
            cache_dir() /
            (std::string("surf_") + std::to_string(fnv1a(key)) + ".bin");
        PriceSurface surf;
        if (!load_cached_surface(cache_file, key, surf)) {
            surf = solver_surface(bs, ref, g, threads);
            store_cached_surface(cache_file, key, surf);
        }
        ref_boundary_surf = surf;
        emit_boundary("reference", "-", surf);
    }

    for (const auto& solver_json : spec.solvers) {
        const std::string name = solver_json.at("name").get<std::string>();
        const std::string label = solver_json.value("label", name);
        const bool trained = name == "etcnn" || name == "pinn";
        const bool stochastic = name == "lsm";
        const std::vector<std::uint64_t> seeds =
            (trained || stochastic) ? spec.seeds
                                    : std::vector<std::uint64_t>{0};

        std::vector<double> seed_l2, seed_mae;
        for (const auto seed : seeds) {
            const std::string seed_str =
                (trained || stochastic) ? std::to_string(seed) : "-";
            RunOutcome outcome{label, seed_str, true, ""};
            try {
                if (name == "lsm") {
                    LSMSpec lspec;
                    lspec.paths = solver_json.value("paths", 10000);
                    lspec.exercise_dates = solver_json.value("N", 400);
                    lspec.basis_degree = solver_json.value("basis_degree", 3);
                    lspec.seed = seed;
                    lspec.style = spec.contract.style;
                    for (const auto& cell : spec.cells) {
                        const auto res = lsm_price(spec.market, spec.contract,
                                                   lspec, cell.s, cell.tau,
                                                   threads);
                        table.rows.push_back(cell_row(label, seed_str, cell,
                                                      res.price,
                                                      fmt(res.std_error)));
                    }
                } else if (trained) {
                    json jt = solver_json.value("train", json::object());
                    TrainConfig cfg = train_config_from_json(
                        jt, spec.train_domain.value_or(spec.eval_domain));
                    cfg.seed = seed;
                    cfg.threads = threads;
                    cfg.mode = name == "pinn" ? TrainMode::PINN
                                              : TrainMode::ETCNN;
                    cfg.normalize_inputs = solver_json.value("normalize", true);
                    cfg.use_fg1u_shortcut = solver_json.value("shortcut", false);

                    TerminalPair pair;
                    pair.contract = spec.contract;
                    pair.params = spec.market;
                    pair.g2 = solver_json.contains("g2")
                                  ? g2_kind_from_string(
                                        solver_json.at("g2").get<std::string>())
                                  : default_g2_for(spec.contract);

                    const ResNetParams net0 = init_params(
                        solver_json.value("blocks", 4),
                        solver_json.value("layers", 2),
                        solver_json.value("width", 50),
                        spec.contract.n_assets + 1,
                        cfg.seed * 0x9E3779B97F4A7C15ull + 1);

                    const fs::path ckpt_path =
                        spec.out_dir /
                        (label + "_seed" + seed_str + ".ckpt");
                    auto sink = [&](long iter, const ResNetParams& p,
                                    const std::vector<LogRow>&) {
                        json meta;
                        meta["g1"] = "time_to_maturity";
                        meta["g2"] = to_string(pair.g2);
                        meta["mode"] = to_string(cfg.mode);
                        meta["normalize"] = cfg.normalize_inputs;
                        meta["contract"] = to_json(spec.contract);
                        meta["market"] = to_json(spec.market);
                        meta["config_hash"] = std::to_string(cfg.hash());
                        meta["iteration"] = iter;
                        meta["seed"] = cfg.seed;
                        save_checkpoint(ckpt_path.string(), p, meta);
                    };
                    const TrainResult tr = train(cfg, spec.contract,
                                                 spec.market, pair, net0, sink);
                    for (const auto& row : tr.log)
                        trainlog.rows.push_back(
                            label + "," + seed_str + "," +
                            std::to_string(row.iter) + "," + fmt(row.losses.bs) +
                            "," + fmt(row.losses.tv) + "," + fmt(row.losses.eq) +
                            "," + fmt(row.losses.tc) + "," + fmt(row.losses.f) +
                            "," + fmt(row.losses.total) + "," + fmt(row.lr));

                    // surface, errors, cells, diff grid, boundary
                    PriceSurface surf;
                    surf.s_axes = grid.s_axes;
                    surf.t_axis = grid.t_axis;
                    auto [ckpt, meta] = load_checkpoint(ckpt_path.string());
                    surf = checkpoint_surface(ckpt, meta, grid.s_axes,
                                              grid.t_axis);
                    const ErrorReport rep = error_report(reference, surf);
                    seed_l2.push_back(rep.rel_l2);
                    seed_mae.push_back(rep.mae);
                    errors.rows.push_back(label + "," + seed_str + "," +
                                          fmt(rep.rel_l2) + "," + fmt(rep.mae) +
                                          "," + std::to_string(rep.samples) +
                                          ",ok");
                    for (const auto& cell : spec.cells) {
                        const double v = checkpoint_price(
                            ckpt, meta, cell.s,
                            spec.contract.maturity - cell.tau);
                        table.rows.push_back(
                            cell_row(label, seed_str, cell, v, ""));
                    }
                    const PriceSurface diff = pointwise_diff(reference, surf);
                    const Eigen::Index spatial = diff.spatial_size();
                    for (Eigen::Index jt = 0; jt < diff.t_axis.size(); ++jt)
                        for (Eigen::Index fl = 0; fl < spatial; ++fl) {
                            std::string s1 = fmt(grid.s_axes[0][
                                spec.contract.n_assets == 1
                                    ? fl
                                    : fl / grid.s_axes[1].size()]);
                            std::string s2 =
                                spec.contract.n_assets > 1
                                    ? fmt(grid.s_axes[1][fl %
                                                         grid.s_axes[1].size()])
                                    : std::string();
                            diffgrid.rows.push_back(
                                label + "," + seed_str + "," + s1 + "," + s2 +
                                "," + fmt(diff.t_axis[jt]) + "," +
                                fmt(diff.values[jt * spatial + fl]));
                        }
                    if (bgrid) {
                        const PriceSurface bsurf = checkpoint_surface(
                            ckpt, meta, bgrid->s_axes, bgrid->t_axis);
                        emit_boundary(label, seed_str, bsurf);
                    }
                } else {
                    // deterministic pricers: surface + cells
                    json sj = solver_json;
                    sj["solver"] = name;
                    const std::string key = surface_key(spec, sj, grid);
                    const fs::path cache_file =
                        cache_dir() / (std::string("surf_") +
                                       std::to_string(fnv1a(key)) + ".bin");
                    PriceSurface surf;
                    if (!load_cached_surface(cache_file, key, surf)) {
                        surf = solver_surface(spec, sj, grid, threads);
                        store_cached_surface(cache_file, key, surf);
                    }
                    const ErrorReport rep = error_report(reference, surf);
                    seed_l2.push_back(rep.rel_l2);
                    seed_mae.push_back(rep.mae);
                    errors.rows.push_back(label + "," + seed_str + "," +
                                          fmt(rep.rel_l2) + "," + fmt(rep.mae) +
                                          "," + std::to_string(rep.samples) +
                                          ",ok");
                    for (const auto& cell : spec.cells) {
                        double v = 0.0;
                        if (name == "bt") {
                            LatticeSpec lspec;
                            lspec.steps = solver_json.value("N", 400);
                            lspec.style = spec.contract.style;
                            v = spec.contract.n_assets == 1
                                    ? bt_price_1d(spec.market, spec.contract,
                                                  lspec, cell.s[0], cell.tau)
                                    : bt_price_2d(spec.market, spec.contract,
                                                  lspec, cell.s[0], cell.s[1],
                                                  cell.tau);
                        } else if (name == "fd") {
                            FDSpec fspec;
                            fspec.time_steps = solver_json.value("N", 400);
                            fspec.space_nodes =
                                solver_json.value("space_nodes", 401);
                            fspec.s_max_mult =
                                solver_json.value("s_max_mult", 4.0);
                            fspec.style = spec.contract.style;
                            v = fd_price_at(spec.market, spec.contract, fspec,
                                            cell.s[0], cell.tau);
                        } else if (name == "baw") {
                            v = baw_price(spec.market, spec.contract,
                                          cell.s[0], cell.tau);
                        } else if (name == "european") {
                            v = european_price(spec.market, spec.contract,
                                               cell.s, cell.tau);
                        } else {
                            throw ValidationError("unknown solver: " + name);
                        }
                        table.rows.push_back(
                            cell_row(label, seed_str, cell, v, ""));
                    }
                }
            } catch (const std::exception& e) {
                outcome.ok = false;
                outcome.message = e.what();
                result.all_ok = false;
                errors.rows.push_back(label + "," + seed_str +
                                      ",,,,failed: " + outcome.message);
            }
            result.outcomes.push_back(outcome);
        }
        if (seed_l2.size() > 1) {
            const double mean_l2 =
                std::accumulate(seed_l2.begin(), seed_l2.end(), 0.0) /
                seed_l2.size();
            const double mean_mae =
                std::accumulate(seed_mae.begin(), seed_mae.end(), 0.0) /
                seed_mae.size();
            errors.rows.push_back(label + ",mean," + fmt(mean_l2) + "," +
                                  fmt(mean_mae) + ",,ok");
        }
    }

    table.write(spec.out_dir / "table.csv");
    errors.write(spec.out_dir / "errors.csv");
    if (!boundary.rows.empty()) boundary.write(spec.out_dir / "boundary.csv");
    if (!diffgrid.rows.empty()) diffgrid.write(spec.out_dir / "diff_grid.csv");
    if (!trainlog.rows.empty())
        trainlog.write(spec.out_dir / "train_log.csv");
    return result;
}

}  // namespace amopt
