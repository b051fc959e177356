#pragma once

#include <Eigen/Dense>
#include <vector>

#include "psdisc/rng.hpp"

namespace psdisc {

// Weibull in rate form: density f(y) = shape * y^(shape-1) * exp(linpred - e^linpred * y^shape),
// i.e. rate lambda = exp(linpred) where linpred collects intercept, covariate
// terms and any log-discontinuation-time term. Equivalent to the scale form
// with scale = exp(-linpred/shape).
struct WeibullSpec {
    double shape;    // > 0
    double linpred;  // log rate
};

// Left truncation: support [trunc, inf), density renormalised by the survival
// at the truncation point.
struct TruncWeibullSpec {
    WeibullSpec base;
    double trunc;  // > 0
};

struct HpdInterval {
    double lower;
    double upper;
    double level;
};

double weibull_logpdf(double y, const WeibullSpec& spec);
double weibull_logsurv(double y, const WeibullSpec& spec);
double weibull_sample(const WeibullSpec& spec, Rng& rng);
double weibull_mean(const WeibullSpec& spec);

// Returns -inf below the truncation point so Metropolis ratios reject instead
// of throwing.
double trunc_weibull_logpdf(double y, const TruncWeibullSpec& spec);
double trunc_weibull_logsurv(double y, const TruncWeibullSpec& spec);
double trunc_weibull_sample(const TruncWeibullSpec& spec, Rng& rng);

// trunc + integral of the conditional survival, by adaptive quadrature
// (relative tolerance 1e-8).
double trunc_weibull_mean(const TruncWeibullSpec& spec);

// Stable log(1/(1+exp(-x))); exact 0 for large x, ~x for very negative x.
double log_expit(double x);
double expit(double x);

// Membership probability expit(gamma0 + x'gamma).
double logistic_prob(const Eigen::VectorXd& x, double gamma0, const Eigen::VectorXd& gamma);

// Shortest sorted window containing ceil(level*N) of the samples (Chen-Shao);
// ties resolved toward the lowest lower bound.
HpdInterval hpd_interval(std::vector<double> samples, double level);

}  // namespace psdisc
