#ifndef AMOPT_EXPERIMENT_HPP
#define AMOPT_EXPERIMENT_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "amopt/solver.hpp"
#include "amopt/types.hpp"

namespace amopt {

using nlohmann::json;

// json converters shared by specs and checkpoints
json to_json(const MarketParams& params);
json to_json(const OptionContract& contract);
json to_json(const Domain& domain);
MarketParams market_from_json(const json& j);
OptionContract contract_from_json(const json& j);
Domain domain_from_json(const json& j);
TrainConfig train_config_from_json(const json& j, const Domain& fallback_domain);

struct CellQuery {
    VectorXd s;
    double tau = 0.0;
};

/// Parsed experiment description; see README for the file schema.
struct ExperimentSpec {
    std::string name;
    std::filesystem::path out_dir;
    MarketParams market;
    OptionContract contract;
    Domain eval_domain;
    int eval_ticks_s = 101;
    int eval_ticks_t = 101;
    json reference;
    std::vector<json> solvers;
    std::vector<CellQuery> cells;
    std::vector<std::uint64_t> seeds;
    std::optional<json> boundary;
    std::optional<Domain> train_domain;

    static ExperimentSpec parse(const json& j);
    static ExperimentSpec load(const std::string& path);
};

struct RunOutcome {
    std::string solver;
    std::string seed;
    bool ok = true;
    std::string message;
};

struct ExperimentResult {
    bool all_ok = true;
    std::vector<RunOutcome> outcomes;
};

/// Runs every (solver, seed) sub-run, writing table.csv / errors.csv /
/// boundary.csv / diff_grid.csv / train_log.csv and checkpoints under the
/// experiment output directory. Sub-run failures are recorded and the
/// harness continues.
ExperimentResult run_experiment(const ExperimentSpec& spec, int threads = 0);

/// Reference-surface cache location: ETC_CACHE_DIR env override, else
/// .amopt_cache in the working directory.
std::filesystem::path cache_dir();

/// Trial-function surface evaluation from a loaded checkpoint. A normalized
/// checkpoint prices any strike by moneyness rescaling; an unnormalized one
/// rejects strikes other than its own.
PriceSurface checkpoint_surface(const ResNetParams& params, const json& meta,
                                const std::vector<VectorXd>& s_axes,
                                const VectorXd& t_axis);
double checkpoint_price(const ResNetParams& params, const json& meta,
                        const VectorXd& s, double t,
                        std::optional<double> strike_override = std::nullopt);

}  // namespace amopt

#endif  // AMOPT_EXPERIMENT_HPP
