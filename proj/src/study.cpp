#include "psdisc/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "psdisc/errors.hpp"

namespace psdisc {

const char* const kCoverageCellNames[kCoverageCells] = {
    "itt", "ace_nd", "ace_d", "ace_d_1", "ace_d_2", "ace_d_3", "ace_d_4"};

KmCurve km_curve(const std::vector<double>& times, const std::vector<int>& events) {
    if (times.empty()) throw validation_error("km_curve: empty subset");
    if (times.size() != events.size()) throw validation_error("km_curve: size mismatch");
    std::map<double, int> deaths;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0)) throw validation_error("km_curve: times must be positive");
        if (events[i] == 1) deaths[times[i]] += 1;
    }
    KmCurve km;
    double s = 1.0;
    for (const auto& [t, d] : deaths) {
        int at_risk = 0;
        for (double ti : times)
            if (ti >= t) ++at_risk;
        s *= 1.0 - static_cast<double>(d) / at_risk;
        km.times.push_back(t);
        km.survival.push_back(s);
        km.at_risk.push_back(at_risk);
        km.events.push_back(d);
    }
    return km;
}

KmCurve km_curve(const Dataset& ds, int arm, std::optional<ObservedProfile> profile) {
    std::vector<double> times;
    std::vector<int> events;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.z()[i] != arm) continue;
        if (profile && classify_profile(ds.z()[i], ds.event()[i], ds.disc()[i]) != *profile)
            continue;
        times.push_back(ds.y_tilde()[i]);
        events.push_back(ds.event()[i]);
    }
    if (times.empty()) throw validation_error("km_curve: empty subset after filtering");
    return km_curve(times, events);
}

void KmCurve::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "time,survival,at_risk,events\n";
    out << "0,1,,\n";
    for (std::size_t i = 0; i < times.size(); ++i)
        out << times[i] << ',' << survival[i] << ',' << at_risk[i] << ',' << events[i] << '\n';
}

namespace {

ReplicateResult run_replicate(int r, const ScenarioConfig& scenario_cfg,
                              const SamplerConfig& sampler_cfg, const CoverageOptions& opt) {
    ReplicateResult res;
    res.replicate = r;
    try {
        Rng rng = Rng(opt.master_seed).fork(static_cast<std::uint64_t>(r));
        ScenarioConfig cfg = scenario_cfg;
        const CompleteData cd = simulate_complete(cfg, rng);

        EstimandGrids grids;
        grids.d_grid = {1.0, 2.0, 3.0, 4.0};
        const TrueValues tv = true_estimands(cd, cfg, grids);
        res.truth = {tv.itt,
                     tv.ace_nd,
                     tv.ace_d,
                     tv.ace_d_curve[0].value,
                     tv.ace_d_curve[1].value,
                     tv.ace_d_curve[2].value,
                     tv.ace_d_curve[3].value};

        const CensoredTrial trial = apply_censoring(cd, cfg, rng);
        const Dataset fit_ds = opt.use_covariates ? standardize_covariates(trial.data)
                                                  : trial.data.without_covariates();

        SamplerConfig scfg = sampler_cfg;
        scfg.seed = rng.fork("fit").seed();
        scfg.jobs = 1;  // replicate-level pool owns the parallelism
        scfg.store_latents = false;
        const std::vector<Chain> chains = run_chains(fit_ds, PriorConfig{}, scfg);
        const Eigen::MatrixXd draws = pooled_draws(chains);
        res.split_stat = split_chain_statistic(draws);
        res.accept_min = 1.0;
        res.accept_max = 0.0;
        for (const auto& ch : chains) {
            res.accept_min = std::min(res.accept_min, ch.accept_rate.minCoeff());
            res.accept_max = std::max(res.accept_max, ch.accept_rate.maxCoeff());
        }

        SummarizeOptions sopt;
        sopt.ace_d_mc = opt.ace_d_mc;
        sopt.seed = rng.fork("summarize").seed();
        sopt.curves = true;
        sopt.jobs = 1;
        EstimandGrids fit_grids;
        fit_grids.d_grid = {1.0, 2.0, 3.0, 4.0};
        fit_grids.y_grid = {};
        fit_grids.dce_d_dgrid = {};
        const EstimandReport rep = summarize_posterior(draws, fit_ds.n_covariates(), fit_ds.x(),
                                                       fit_grids, sopt, nullptr);

        const auto fill = [&](int cell, const ScalarSummary& s) {
            res.post_mean[cell] = s.mean;
            res.hpd_lo[cell] = s.hpd.lower;
            res.hpd_hi[cell] = s.hpd.upper;
            res.covered[cell] = s.hpd.lower <= res.truth[cell] && res.truth[cell] <= s.hpd.upper;
        };
        fill(0, rep.itt);
        fill(1, rep.ace_nd);
        fill(2, rep.ace_d);
        for (int g = 0; g < 4; ++g) {
            const CurveSummary& cs = rep.ace_d_curve[g];
            res.post_mean[3 + g] = cs.mean;
            res.hpd_lo[3 + g] = cs.hpd.lower;
            res.hpd_hi[3 + g] = cs.hpd.upper;
            res.covered[3 + g] =
                cs.hpd.lower <= res.truth[3 + g] && res.truth[3 + g] <= cs.hpd.upper;
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.message = e.what();
    }
    return res;
}

}  // namespace

CoverageTable run_coverage(const ScenarioConfig& scenario_cfg, const SamplerConfig& sampler_cfg,
                           const CoverageOptions& opt) {
    if (opt.replicates <= 0) throw validation_error("run_coverage: replicates must be positive");
    CoverageTable table;
    table.scenario = scenario_cfg.scenario;
    table.use_covariates = opt.use_covariates;
    table.replicates_requested = opt.replicates;
    table.replicates.resize(opt.replicates);

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int jobs = std::max(1, opt.jobs > 0 ? opt.jobs : static_cast<int>(hw));
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(jobs, opt.replicates);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= opt.replicates) return;
                table.replicates[r] = run_replicate(r, scenario_cfg, sampler_cfg, opt);
            }
        });
    }
    for (auto& th : pool) th.join();

    for (const auto& rr : table.replicates) {
        if (!rr.ok) continue;
        ++table.completed;
        for (int cell = 0; cell < kCoverageCells; ++cell)
            if (rr.covered[cell]) ++table.covered_counts[cell];
    }
    return table;
}

void CoverageTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "scenario,covariates,completed,requested";
    for (const auto* name : kCoverageCellNames) out << ',' << name;
    out << '\n';
    out << (scenario == Scenario::I ? "I" : "II") << ',' << (use_covariates ? "yes" : "no") << ','
        << completed << ',' << replicates_requested;
    for (int cell = 0; cell < kCoverageCells; ++cell) out << ',' << coverage(cell);
    out << '\n';
}

void CoverageTable::write_replicates_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "replicate,ok,split_stat,accept_min,accept_max";
    for (const auto* name : kCoverageCellNames)
        out << ",truth_" << name << ",mean_" << name << ",lo_" << name << ",hi_" << name
            << ",covered_" << name;
    out << ",message\n";
    for (const auto& rr : replicates) {
        out << rr.replicate << ',' << (rr.ok ? 1 : 0) << ',' << rr.split_stat << ','
            << rr.accept_min << ',' << rr.accept_max;
        for (int cell = 0; cell < kCoverageCells; ++cell)
            out << ',' << rr.truth[cell] << ',' << rr.post_mean[cell] << ',' << rr.hpd_lo[cell]
                << ',' << rr.hpd_hi[cell] << ',' << (rr.covered[cell] ? 1 : 0);
        out << ",\"" << rr.message << "\"\n";
    }
}

std::string CoverageTable::to_text() const {
    std::ostringstream os;
    os << "scenario " << (scenario == Scenario::I ? "I" : "II")
       << (use_covariates ? " with covariates" : " without covariates") << ", " << completed << '/'
       << replicates_requested << " replicates completed\n";
    for (int cell = 0; cell < kCoverageCells; ++cell) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  %-8s %.3f\n", kCoverageCellNames[cell], coverage(cell));
        os << buf;
    }
    return os.str();
}

}  // namespace psdisc
