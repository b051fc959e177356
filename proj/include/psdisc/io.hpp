#pragma once

#include <map>
#include <string>
#include <vector>

#include "psdisc/dataset.hpp"
#include "psdisc/estimands.hpp"
#include "psdisc/likelihood.hpp"
#include "psdisc/sampler.hpp"
#include "psdisc/simulator.hpp"

namespace psdisc {

// Calibrated truth configurations (regenerate with the `calibrate` subcommand).
ScenarioConfig default_scenario_config(Scenario s);
CalibrationTargets default_targets(Scenario s);

ScenarioConfig load_scenario_config(const std::string& path);
void save_scenario_config(const ScenarioConfig& cfg, const std::string& path);
std::string scenario_config_json(const ScenarioConfig& cfg);

PriorConfig load_prior_config(const std::string& path);
void save_prior_config(const PriorConfig& cfg, const std::string& path);

SamplerConfig load_sampler_config(const std::string& path);
void save_sampler_config(const SamplerConfig& cfg, const std::string& path);

EstimandGrids load_grids(const std::string& path);

void save_true_values(const TrueValues& tv, const std::string& csv_path);
void save_complete_data(const CompleteData& cd, const Eigen::VectorXd& c,
                        const std::string& path);

// Chain persistence: one CSV per chain (draw,<params...>,logpost) plus a
// latents CSV (draw,unit,i_nd,d1; d1 empty when undefined).
void save_chain_csv(const Chain& chain, const std::string& path);
void save_latents_csv(const Chain& chain, const std::string& path);

struct FitArtifacts {
    std::vector<Chain> chains;
    std::vector<std::string> param_names;
    std::vector<std::string> covariate_names;
    std::vector<CovariateTransform> transforms;
    int n_covariates = 0;
};

void save_fit(const std::vector<Chain>& chains, const Dataset& fit_ds, const std::string& dir);
FitArtifacts load_fit(const std::string& dir);

void save_estimand_report_json(const EstimandReport& rep, const std::string& path);

// Run manifest: enough to replay the run. Wall time is informational and
// excluded from reproducibility comparisons.
struct Manifest {
    std::string subcommand;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_time_s = 0.0;
    std::map<std::string, std::string> extra;
};

void write_manifest(const Manifest& m, const std::string& dir);

std::string hash_string(const std::string& s);  // FNV-1a hex

}  // namespace psdisc
