#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "psdisc/dataset.hpp"
#include "psdisc/rng.hpp"

namespace psdisc {

enum class Scenario { I, II };

// One Weibull regression block in rate form; coefficients act on the
// standardized covariate coding declared in CovariateModel.
struct OutcomeBlock {
    double shape = 1.0;
    double intercept = 0.0;
    Eigen::VectorXd coeffs;
};

struct DiscOutcomeBlock {
    double shape = 1.0;
    double intercept = 0.0;
    Eigen::VectorXd coeffs;
    double delta = 0.0;  // coefficient on log discontinuation time
};

// Covariate generator: x1 normal clipped to [x1_min, x1_max], x2/x3 Bernoulli.
// Linear predictors consume (x1 - center)/scale and the raw binaries.
struct CovariateModel {
    double x1_mean = 63.27;
    double x1_sd = 10.50;
    double x1_min = 25.0;
    double x1_max = 92.0;
    double x2_rate = 0.4388;
    double x3_rate = 0.2537;
    double center = 63.27;
    double scale = 10.50;
};

struct MembershipModel {
    double gamma0 = 0.0;
    Eigen::VectorXd gamma;
};

struct ScenarioConfig {
    Scenario scenario = Scenario::I;
    int n = 335;
    int n_treated = 181;
    double enrollment_window = 23.0;
    double cutoff = 33.0;
    std::uint64_t seed = 1;
    CovariateModel covariates;
    MembershipModel membership;
    OutcomeBlock disc;       // discontinuation time, D units
    OutcomeBlock nd_arm1;    // Y(1) | never-discontinue
    OutcomeBlock nd_arm0;    // Y(0) | never-discontinue
    DiscOutcomeBlock d_arm1; // Y(1) | discontinue, left-truncated at D(1)
    DiscOutcomeBlock d_arm0; // Y(0) | discontinue; scenario II shares d_arm1 and truncates
    void validate() const;

    // Same configuration at a different sample size, keeping the treated share.
    ScenarioConfig scaled_to(int new_n) const;
};

// Full potential-outcome table for one simulated trial. d1 is NaN for
// never-discontinuing units; z is the randomized assignment (fixed margin).
struct CompleteData {
    Eigen::MatrixXd x_raw;       // n x 3 raw covariates
    Eigen::MatrixXd x_std;       // linear-predictor coding used by the truth
    Eigen::VectorXi i_nd;
    Eigen::VectorXd d1;
    Eigen::VectorXd y1;
    Eigen::VectorXd y0;
    Eigen::VectorXi z;
    int n() const { return static_cast<int>(i_nd.size()); }
};

struct CurvePoint {
    double at = 0.0;       // grid location (d or y)
    double at2 = 0.0;      // second coordinate for (y,d) curves
    double value = 0.0;
};

struct EstimandGrids {
    std::vector<double> d_grid;       // ACE_D(d)
    std::vector<double> y_grid;       // DCE_ND(y)
    std::vector<double> dce_d_dgrid;  // d values for DCE_D(y|d)
    static EstimandGrids defaults();
};

struct TrueValues {
    double pi_nd = 0.0;
    double itt = 0.0;
    double ace_nd = 0.0;
    double ace_d = 0.0;
    std::vector<CurvePoint> ace_d_curve;
    std::vector<CurvePoint> dce_nd_curve;
    std::vector<CurvePoint> dce_d_curve;  // (y, d) pairs
};

CompleteData simulate_complete(const ScenarioConfig& cfg, Rng& rng);

// Staggered-entry administrative censoring: C = cutoff - entry with entry
// uniform on [0, enrollment_window]. Returns the observed dataset plus the
// drawn censoring times.
struct CensoredTrial {
    Dataset data;
    Eigen::VectorXd c;
};
CensoredTrial apply_censoring(const CompleteData& cd, const ScenarioConfig& cfg, Rng& rng);

// Finite-sample plug-in scalars from the complete table; curves from the true
// parametric forms averaged over the simulated covariates.
TrueValues true_estimands(const CompleteData& cd, const ScenarioConfig& cfg,
                          const EstimandGrids& grids);

// Calibration targets with acceptance half-widths.
struct CalibrationTargets {
    double pi_nd = 0.73, pi_nd_tol = 0.02;
    double disc_share = 0.1493, disc_share_tol = 0.02;       // among all units
    double event_share = 0.9164, event_share_tol = 0.02;
    double ace_nd = 4.92, ace_nd_tol = 0.5;
    double ace_d = 2.40, ace_d_tol = 0.5;
    double itt = 4.24, itt_tol = 0.5;
    double d_obs_mean = 2.99, d_obs_mean_tol = 0.75;
    double y_obs_mean = 5.16, y_obs_mean_tol = 0.75;         // over observed events
};

struct CalibrationDiagnostics {
    double pi_nd = 0.0, disc_share = 0.0, event_share = 0.0;
    double ace_nd = 0.0, ace_d = 0.0, itt = 0.0;
    double d_obs_mean = 0.0, y_obs_mean = 0.0;
    double loss = 0.0;
    bool within_tolerance(const CalibrationTargets& t) const;
    std::string to_string() const;
};

struct CalibrationResult {
    ScenarioConfig config;
    CalibrationDiagnostics diagnostics;
    bool met = false;
    int evaluations = 0;
    std::vector<std::string> log;
};

// Replicate-averaged coordinate pattern search over the free scalar
// parameters (intercepts, gamma0, shapes). Population-level targets are
// estimated on `replicates` simulations of size n_eval each.
CalibrationResult calibrate(const CalibrationTargets& targets, const ScenarioConfig& cfg0,
                            int budget, int replicates = 10, int n_eval = 2000,
                            std::uint64_t seed = 20240801);

CalibrationDiagnostics evaluate_config(const ScenarioConfig& cfg, int replicates, int n_eval,
                                       std::uint64_t seed, const CalibrationTargets& targets);

}  // namespace psdisc
