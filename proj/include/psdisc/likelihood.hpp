#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "psdisc/dataset.hpp"
#include "psdisc/quadrature.hpp"

namespace psdisc {

// All parameter blocks of the estimation model. Outcome regressions share one
// coefficient vector eta_y across the four arm/stratum blocks; delta couples
// both D-stratum outcomes to log discontinuation time. Coefficients act on the
// covariate coding of the dataset they are fitted to.
struct ParamVector {
    double gamma0 = 0.0;
    Eigen::VectorXd gamma;     // membership coefficients (K)
    double alpha_d = 1.0;      // discontinuation-time Weibull
    double beta_d = 0.0;
    Eigen::VectorXd eta_d;     // (K)
    double alpha_nd1 = 1.0;    // Y(1) | never-discontinue
    double beta_nd1 = 0.0;
    double alpha_d1 = 1.0;     // Y(1) | discontinue (left-truncated)
    double beta_d1 = 0.0;
    double alpha_nd0 = 1.0;    // Y(0) | never-discontinue
    double beta_nd0 = 0.0;
    double alpha_d0 = 1.0;     // Y(0) | discontinue (untruncated form)
    double beta_d0 = 0.0;
    Eigen::VectorXd eta_y;     // shared outcome coefficients (K)
    double delta = 0.0;

    static ParamVector zeros(int k);
    int n_covariates() const { return static_cast<int>(gamma.size()); }

    // Flat layout in the documented update order:
    // gamma0, gamma[0..K), alpha_d, beta_d, eta_d[0..K), alpha_nd1, beta_nd1,
    // alpha_d1, beta_d1, alpha_nd0, beta_nd0, alpha_d0, beta_d0, eta_y[0..K), delta.
    int size() const { return 12 + 3 * n_covariates(); }
    Eigen::VectorXd to_flat() const;
    static ParamVector from_flat(const Eigen::VectorXd& v, int k);
    static std::vector<std::string> names(const std::vector<std::string>& covariate_names);

    bool shapes_positive() const {
        return alpha_d > 0 && alpha_nd1 > 0 && alpha_d1 > 0 && alpha_nd0 > 0 && alpha_d0 > 0;
    }
};

// Hyperparameters: Gamma(shape, rate) on Weibull shapes, zero-mean normals
// elsewhere. The membership block (gamma0, gamma) is one multivariate normal
// with diagonal covariance membership_var * I.
struct PriorConfig {
    double gamma_shape = 0.5;
    double gamma_rate = 0.5;
    double intercept_var = 100.0;   // beta_d, beta_nd1, beta_d1, beta_nd0, beta_d0
    double delta_var = 100.0;
    double coeff_var = 25.0;        // eta_d, eta_y
    double membership_var = 25.0;   // gamma0 and gamma jointly
};

// Augmented latent state, one entry per unit. i_nd=1 means never-discontinue
// and d1 = NaN (the undefined marker); i_nd=0 carries a concrete positive d1.
struct LatentState {
    std::vector<std::uint8_t> i_nd;
    Eigen::VectorXd d1;

    static constexpr double undefined() { return std::numeric_limits<double>::quiet_NaN(); }
    bool consistent() const;
};

double log_prior(const ParamVector& theta, const PriorConfig& prior);

// Complete-data log contribution of unit i at latent (i_nd, d1). Returns -inf
// for latents violating the natural constraint (treated D unit with observed
// times inconsistent with d1).
double complete_unit_loglik(const ParamVector& theta, const Dataset& ds, int i, int i_nd,
                            double d1);

// log_prior + sum of unit contributions.
double complete_logpost(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                        const PriorConfig& prior);

// Observed-data log-likelihood; control-arm mixture terms integrate the latent
// discontinuation time out by adaptive quadrature.
double observed_loglik(const ParamVector& theta, const Dataset& ds,
                       const QuadOptions& quad = {.rel_tol = 1e-6,
                                                  .abs_tol = 1e-300,
                                                  .max_segments = 4000,
                                                  .initial_segments = 8});

}  // namespace psdisc
