#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "psdisc/dataset.hpp"
#include "psdisc/estimands.hpp"
#include "psdisc/sampler.hpp"
#include "psdisc/simulator.hpp"

namespace psdisc {

// Product-limit estimator. survival[j] is S(t) just after times[j]; the curve
// starts implicitly at S(0) = 1.
struct KmCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<int> at_risk;
    std::vector<int> events;
    void write_csv(const std::string& path) const;
};

KmCurve km_curve(const std::vector<double>& times, const std::vector<int>& events);
KmCurve km_curve(const Dataset& ds, int arm, std::optional<ObservedProfile> profile = {});

// The seven reported estimands: ITT, ACE_ND, ACE_D and ACE_D(1..4).
constexpr int kCoverageCells = 7;
extern const char* const kCoverageCellNames[kCoverageCells];

struct ReplicateResult {
    int replicate = 0;
    bool ok = false;
    std::string message;
    double split_stat = 0.0;
    double accept_min = 0.0;
    double accept_max = 0.0;
    std::array<double, kCoverageCells> truth{};
    std::array<double, kCoverageCells> post_mean{};
    std::array<double, kCoverageCells> hpd_lo{};
    std::array<double, kCoverageCells> hpd_hi{};
    std::array<bool, kCoverageCells> covered{};
};

struct CoverageTable {
    Scenario scenario = Scenario::I;
    bool use_covariates = true;
    int replicates_requested = 0;
    int completed = 0;
    std::array<int, kCoverageCells> covered_counts{};
    std::vector<ReplicateResult> replicates;

    double coverage(int cell) const {
        return completed > 0 ? static_cast<double>(covered_counts[cell]) / completed : 0.0;
    }
    void write_csv(const std::string& path) const;
    void write_replicates_csv(const std::string& path) const;
    std::string to_text() const;
};

struct CoverageOptions {
    int replicates = 50;
    bool use_covariates = true;
    std::uint64_t master_seed = 99;
    int jobs = 0;       // replicate-level worker pool
    int ace_d_mc = 30;  // MC draws per unit for the ACE_D integral
};

// Desk-scale repeated-sampling study: per replicate simulate, compute the
// replicate's true values, censor, fit, summarize, and record whether each 95%
// HPD covers its truth. Failed fits are logged and excluded from the
// denominator.
CoverageTable run_coverage(const ScenarioConfig& scenario_cfg, const SamplerConfig& sampler_cfg,
                           const CoverageOptions& opt);

}  // namespace psdisc
