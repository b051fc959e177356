#include "psdisc/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "psdisc/dataset.hpp"
#include "psdisc/errors.hpp"
#include "psdisc/io.hpp"
#include "psdisc/study.hpp"

namespace psdisc {

namespace fs = std::filesystem;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

Scenario parse_scenario(const std::string& s) {
    if (s == "I" || s == "1" || s == "i") return Scenario::I;
    if (s == "II" || s == "2" || s == "ii") return Scenario::II;
    throw validation_error("unknown scenario '" + s + "' (expected I or II)");
}

ScenarioConfig resolve_scenario_config(const std::string& config_path, const std::string& scenario,
                                       std::uint64_t seed, int n_override) {
    ScenarioConfig cfg = config_path.empty() ? default_scenario_config(parse_scenario(scenario))
                                             : load_scenario_config(config_path);
    if (!config_path.empty() && !scenario.empty() && parse_scenario(scenario) != cfg.scenario)
        throw validation_error("--scenario disagrees with the scenario in " + config_path);
    if (seed != 0) cfg.seed = seed;
    if (n_override > 0) cfg = cfg.scaled_to(n_override);
    return cfg;
}

int run_simulate(const std::string& config_path, const std::string& scenario, std::uint64_t seed,
                 int n_override, const std::string& out) {
    Timer timer;
    ScenarioConfig cfg = resolve_scenario_config(config_path, scenario, seed, n_override);
    fs::create_directories(out);

    Rng rng(cfg.seed);
    const CompleteData cd = simulate_complete(cfg, rng);
    const CensoredTrial trial = apply_censoring(cd, cfg, rng);
    const TrueValues tv = true_estimands(cd, cfg, EstimandGrids::defaults());

    save_complete_data(cd, trial.c, out + "/truth.csv");
    write_csv(trial.data, out + "/observed.csv");
    save_true_values(tv, out + "/true_values.csv");
    save_scenario_config(cfg, out + "/scenario_config.json");
    summarize(trial.data).to_csv(out + "/summary.csv");

    Manifest m;
    m.subcommand = "simulate";
    m.seed = cfg.seed;
    m.config_hash = hash_string(scenario_config_json(cfg));
    if (!config_path.empty()) m.inputs.push_back(config_path);
    m.outputs = {"truth.csv", "observed.csv", "true_values.csv", "scenario_config.json",
                 "summary.csv"};
    m.wall_time_s = timer.seconds();
    write_manifest(m, out);
    return 0;
}

int run_fit(const std::string& data_path, const std::string& priors_path,
            const std::string& sampler_path, bool no_covariates, std::uint64_t seed, int chains,
            int jobs, const std::string& out) {
    Timer timer;
    const Dataset raw = load_csv(data_path);
    const Dataset fit_ds =
        no_covariates ? raw.without_covariates() : standardize_covariates(raw);

    const PriorConfig prior =
        priors_path.empty() ? PriorConfig{} : load_prior_config(priors_path);
    SamplerConfig scfg = sampler_path.empty() ? SamplerConfig{} : load_sampler_config(sampler_path);
    if (seed != 0) scfg.seed = seed;
    if (chains > 0) scfg.chains = chains;
    if (jobs > 0) scfg.jobs = jobs;

    const std::vector<Chain> result = run_chains(fit_ds, prior, scfg);
    fs::create_directories(out);
    save_fit(result, fit_ds, out);

    Manifest m;
    m.subcommand = "fit";
    m.seed = scfg.seed;
    m.config_hash = hash_string(data_path + "|" + std::to_string(scfg.iters) + "|" +
                                std::to_string(scfg.chains));
    m.inputs = {data_path};
    if (!priors_path.empty()) m.inputs.push_back(priors_path);
    if (!sampler_path.empty()) m.inputs.push_back(sampler_path);
    for (int c = 0; c < scfg.chains; ++c) m.outputs.push_back("chain_" + std::to_string(c) + ".csv");
    m.outputs.push_back("fit.json");
    m.wall_time_s = timer.seconds();
    m.extra["split_chain_stat"] = std::to_string(split_chain_statistic(pooled_draws(result)));
    m.extra["no_covariates"] = no_covariates ? "true" : "false";
    write_manifest(m, out);
    return 0;
}

Dataset dataset_in_fit_coding(const Dataset& raw, const FitArtifacts& fa) {
    if (fa.n_covariates == 0) return raw.without_covariates();
    if (raw.n_covariates() != fa.n_covariates)
        throw validation_error("dataset covariate dimension differs from the fitted model");
    return apply_transforms(raw, fa.transforms);
}

int run_estimate(const std::string& chain_dir, const std::string& data_path,
                 const std::string& grids_path, int mc, std::uint64_t seed,
                 const std::string& out) {
    Timer timer;
    const FitArtifacts fa = load_fit(chain_dir);
    const Dataset raw = load_csv(data_path);
    const Dataset ds = dataset_in_fit_coding(raw, fa);
    const EstimandGrids grids =
        grids_path.empty() ? EstimandGrids::defaults() : load_grids(grids_path);

    SummarizeOptions opt;
    if (mc > 0) opt.ace_d_mc = mc;
    if (seed != 0) opt.seed = seed;

    std::vector<LatentSnapshot> latents;
    for (const auto& c : fa.chains)
        latents.insert(latents.end(), c.latents.begin(), c.latents.end());

    const Eigen::MatrixXd draws = pooled_draws(fa.chains);
    const EstimandReport rep = summarize_posterior(draws, fa.n_covariates, ds.x(), grids, opt,
                                                   latents.empty() ? nullptr : &latents);
    fs::create_directories(out);
    rep.write_scalars_csv(out + "/estimands.csv");
    rep.write_curves_csv(out);
    save_estimand_report_json(rep, out + "/estimands.json");

    Manifest m;
    m.subcommand = "estimate";
    m.seed = opt.seed;
    m.config_hash = hash_string(chain_dir + "|" + data_path);
    m.inputs = {chain_dir, data_path};
    if (!grids_path.empty()) m.inputs.push_back(grids_path);
    m.outputs = {"estimands.csv", "estimands.json", "ace_d_curve.csv", "dce_nd_curve.csv",
                 "dce_d_curve.csv"};
    m.wall_time_s = timer.seconds();
    write_manifest(m, out);
    return 0;
}

int run_coverage_cmd(const std::string& config_path, const std::string& scenario,
                     const std::string& sampler_path, int replicates, bool no_covariates,
                     std::uint64_t seed, int jobs, int mc, const std::string& out) {
    Timer timer;
    ScenarioConfig cfg = resolve_scenario_config(config_path, scenario, 0, 0);

    SamplerConfig scfg;
    if (!sampler_path.empty()) {
        scfg = load_sampler_config(sampler_path);
    } else {
        // Desk-scale defaults for repeated fits.
        scfg.chains = 2;
        scfg.iters = 12000;
        scfg.burnin = 4000;
        scfg.thin = 10;
    }
    CoverageOptions opt;
    opt.replicates = replicates;
    opt.use_covariates = !no_covariates;
    if (seed != 0) opt.master_seed = seed;
    if (jobs > 0) opt.jobs = jobs;
    if (mc > 0) opt.ace_d_mc = mc;

    const CoverageTable table = run_coverage(cfg, scfg, opt);
    fs::create_directories(out);
    table.write_csv(out + "/coverage.csv");
    table.write_replicates_csv(out + "/replicates.csv");
    std::cout << table.to_text();

    Manifest m;
    m.subcommand = "coverage";
    m.seed = opt.master_seed;
    m.config_hash = hash_string(scenario_config_json(cfg));
    if (!config_path.empty()) m.inputs.push_back(config_path);
    if (!sampler_path.empty()) m.inputs.push_back(sampler_path);
    m.outputs = {"coverage.csv", "replicates.csv"};
    m.wall_time_s = timer.seconds();
    write_manifest(m, out);
    return 0;
}

int run_characterize(const std::string& chain_dir, const std::string& data_path,
                     const std::string& out) {
    Timer timer;
    const FitArtifacts fa = load_fit(chain_dir);
    bool any_latents = false;
    for (const auto& c : fa.chains) any_latents = any_latents || !c.latents.empty();
    if (!any_latents)
        throw validation_error("characterize: the fit in " + chain_dir +
                               " stored no latent snapshots (store_latents was off)");
    const Dataset raw = load_csv(data_path);
    const StrataProfile prof = characterize_strata(fa.chains, raw);

    if (out.empty()) {
        for (const auto& c : prof.classes)
            std::cout << c.name << ": weight " << c.weight << ", x1 mean " << c.x1_mean
                      << ", x2 share " << c.x2_share << ", x3 share " << c.x3_share << '\n';
        return 0;
    }
    fs::create_directories(out);
    prof.write_csv(out + "/strata.csv");
    Manifest m;
    m.subcommand = "characterize";
    m.config_hash = hash_string(chain_dir + "|" + data_path);
    m.inputs = {chain_dir, data_path};
    m.outputs = {"strata.csv"};
    m.wall_time_s = timer.seconds();
    write_manifest(m, out);
    return 0;
}

int run_km(const std::string& data_path, bool by_stratum, const std::string& out) {
    Timer timer;
    const Dataset ds = load_csv(data_path);
    struct Item {
        std::string name;
        KmCurve curve;
    };
    std::vector<Item> items;
    for (int arm : {1, 0}) {
        if (by_stratum) {
            for (ObservedProfile p :
                 {ObservedProfile::D, ObservedProfile::ND, ObservedProfile::Mixture}) {
                const char* pname = p == ObservedProfile::D    ? "D"
                                    : p == ObservedProfile::ND ? "ND"
                                                               : "mixture";
                try {
                    items.push_back({"arm" + std::to_string(arm) + "_" + pname,
                                     km_curve(ds, arm, p)});
                } catch (const validation_error&) {
                    // empty stratum for this arm; skip
                }
            }
        } else {
            items.push_back({"arm" + std::to_string(arm), km_curve(ds, arm)});
        }
    }
    if (out.empty()) {
        for (const auto& it : items) {
            std::cout << "# " << it.name << "\ntime,survival\n0,1\n";
            for (std::size_t i = 0; i < it.curve.times.size(); ++i)
                std::cout << it.curve.times[i] << ',' << it.curve.survival[i] << '\n';
        }
        return 0;
    }
    fs::create_directories(out);
    Manifest m;
    m.subcommand = "km";
    m.config_hash = hash_string(data_path);
    m.inputs = {data_path};
    for (const auto& it : items) {
        const std::string f = "km_" + it.name + ".csv";
        it.curve.write_csv(out + "/" + f);
        m.outputs.push_back(f);
    }
    m.wall_time_s = timer.seconds();
    write_manifest(m, out);
    return 0;
}

int run_summarize(const std::string& data_path, const std::string& out) {
    Timer timer;
    const Dataset ds = load_csv(data_path);
    const SummaryTable table = summarize(ds);
    std::cout << table.to_text();
    if (!out.empty()) {
        fs::create_directories(out);
        table.to_csv(out + "/summary.csv");
        Manifest m;
        m.subcommand = "summarize";
        m.config_hash = hash_string(data_path);
        m.inputs = {data_path};
        m.outputs = {"summary.csv"};
        m.wall_time_s = timer.seconds();
        write_manifest(m, out);
    }
    return 0;
}

int run_calibrate(const std::string& config_path, const std::string& scenario, int budget,
                  int replicates, int n_eval, std::uint64_t seed, const std::string& out) {
    Timer timer;
    ScenarioConfig cfg0 = resolve_scenario_config(config_path, scenario, 0, 0);
    const CalibrationTargets targets = default_targets(cfg0.scenario);
    const CalibrationResult res =
        calibrate(targets, cfg0, budget, replicates, n_eval, seed == 0 ? 20240801 : seed);
    fs::create_directories(out);
    save_scenario_config(res.config, out + "/scenario_config.json");
    {
        std::ofstream log(out + "/calibration_log.txt");
        for (const auto& line : res.log) log << line << '\n';
    }
    std::cout << (res.met ? "targets met after " : "targets NOT met after ") << res.evaluations
              << " evaluations\n"
              << res.diagnostics.to_string() << '\n';

    Manifest m;
    m.subcommand = "calibrate";
    m.seed = seed;
    m.config_hash = hash_string(scenario_config_json(res.config));
    if (!config_path.empty()) m.inputs.push_back(config_path);
    m.outputs = {"scenario_config.json", "calibration_log.txt"};
    m.wall_time_s = timer.seconds();
    m.extra["met"] = res.met ? "true" : "false";
    write_manifest(m, out);
    return res.met ? 0 : 2;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"Bayesian principal stratification for trials with treatment discontinuation"};
    app.require_subcommand(1);

    // simulate
    std::string sim_config, sim_scenario = "I", sim_out = "sim_out";
    std::uint64_t sim_seed = 0;
    int sim_n = 0;
    auto* sim = app.add_subcommand("simulate", "simulate a synthetic trial");
    sim->add_option("--scenario", sim_scenario, "scenario I or II");
    sim->add_option("--config", sim_config, "scenario config JSON");
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--n", sim_n, "override sample size");
    sim->add_option("--out", sim_out, "output directory")->required();

    // fit
    std::string fit_data, fit_priors, fit_sampler, fit_out = "fit_out";
    bool fit_nocov = false;
    std::uint64_t fit_seed = 0;
    int fit_chains = 0, fit_jobs = 0;
    auto* fit = app.add_subcommand("fit", "fit the model by Metropolis-within-Gibbs");
    fit->add_option("--data", fit_data, "observed dataset CSV")->required();
    fit->add_option("--priors", fit_priors, "prior config JSON");
    fit->add_option("--sampler", fit_sampler, "sampler config JSON");
    fit->add_flag("--no-covariates", fit_nocov, "intercept-only fit");
    fit->add_option("--seed", fit_seed, "master seed");
    fit->add_option("--chains", fit_chains, "number of chains");
    fit->add_option("--jobs", fit_jobs, "worker pool size");
    fit->add_option("--out", fit_out, "output directory")->required();

    // estimate
    std::string est_chain, est_data, est_grids, est_out = "estimate_out";
    int est_mc = 0;
    std::uint64_t est_seed = 0;
    auto* est = app.add_subcommand("estimate", "posterior estimand report from a fit");
    est->add_option("--chain", est_chain, "fit output directory")->required();
    est->add_option("--data", est_data, "observed dataset CSV")->required();
    est->add_option("--grids", est_grids, "grid config JSON");
    est->add_option("--mc", est_mc, "MC draws per unit for ACE_D");
    est->add_option("--seed", est_seed, "seed for the MC integral");
    est->add_option("--out", est_out, "output directory")->required();

    // coverage
    std::string cov_config, cov_scenario = "I", cov_sampler, cov_out = "coverage_out";
    int cov_replicates = 50, cov_jobs = 0, cov_mc = 0;
    bool cov_nocov = false;
    std::uint64_t cov_seed = 0;
    auto* cov = app.add_subcommand("coverage", "repeated-sampling HPD coverage study");
    cov->add_option("--scenario", cov_scenario, "scenario I or II");
    cov->add_option("--config", cov_config, "scenario config JSON");
    cov->add_option("--sampler", cov_sampler, "sampler config JSON for the per-replicate fits");
    cov->add_option("--replicates", cov_replicates, "number of replicates");
    cov->add_flag("--no-covariates", cov_nocov, "fit intercept-only models");
    cov->add_option("--seed", cov_seed, "master seed");
    cov->add_option("--jobs", cov_jobs, "replicate worker pool size");
    cov->add_option("--mc", cov_mc, "MC draws per unit for ACE_D");
    cov->add_option("--out", cov_out, "output directory")->required();

    // characterize
    std::string chr_chain, chr_data, chr_out;
    auto* chr = app.add_subcommand("characterize", "covariate profiles of the latent strata");
    chr->add_option("--chain", chr_chain, "fit output directory")->required();
    chr->add_option("--data", chr_data, "observed dataset CSV")->required();
    chr->add_option("--out", chr_out, "output directory (default: print)");

    // km
    std::string km_data, km_out;
    bool km_by_stratum = false;
    auto* km = app.add_subcommand("km", "Kaplan-Meier curves per arm");
    km->add_option("--data", km_data, "observed dataset CSV")->required();
    km->add_flag("--by-stratum", km_by_stratum, "split by observed profile");
    km->add_option("--out", km_out, "output directory (default: print)");

    // summarize
    std::string sum_data, sum_out;
    auto* sum = app.add_subcommand("summarize", "summary-statistics report");
    sum->add_option("--data", sum_data, "observed dataset CSV")->required();
    sum->add_option("--out", sum_out, "output directory (default: print only)");

    // calibrate
    std::string cal_config, cal_scenario = "I", cal_out = "calibrate_out";
    int cal_budget = 400, cal_replicates = 10, cal_neval = 2000;
    std::uint64_t cal_seed = 0;
    auto* cal = app.add_subcommand("calibrate", "re-derive a scenario config from targets");
    cal->add_option("--scenario", cal_scenario, "scenario I or II");
    cal->add_option("--config", cal_config, "starting scenario config JSON");
    cal->add_option("--budget", cal_budget, "max config evaluations");
    cal->add_option("--replicates", cal_replicates, "replicates per evaluation");
    cal->add_option("--n-eval", cal_neval, "sample size per evaluation");
    cal->add_option("--seed", cal_seed, "search seed");
    cal->add_option("--out", cal_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed())
            return run_simulate(sim_config, sim_scenario, sim_seed, sim_n, sim_out);
        if (fit->parsed())
            return run_fit(fit_data, fit_priors, fit_sampler, fit_nocov, fit_seed, fit_chains,
                           fit_jobs, fit_out);
        if (est->parsed())
            return run_estimate(est_chain, est_data, est_grids, est_mc, est_seed, est_out);
        if (cov->parsed())
            return run_coverage_cmd(cov_config, cov_scenario, cov_sampler, cov_replicates,
                                    cov_nocov, cov_seed, cov_jobs, cov_mc, cov_out);
        if (chr->parsed()) return run_characterize(chr_chain, chr_data, chr_out);
        if (km->parsed()) return run_km(km_data, km_by_stratum, km_out);
        if (sum->parsed()) return run_summarize(sum_data, sum_out);
        if (cal->parsed())
            return run_calibrate(cal_config, cal_scenario, cal_budget, cal_replicates, cal_neval,
                                 cal_seed, cal_out);
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

int cli_dispatch(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("psdisc");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace psdisc
