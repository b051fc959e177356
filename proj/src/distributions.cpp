#include "psdisc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "psdisc/errors.hpp"
#include "psdisc/quadrature.hpp"

namespace psdisc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_spec(const WeibullSpec& spec) {
    if (!(spec.shape > 0.0) || !std::isfinite(spec.shape))
        throw std::domain_error("Weibull shape must be positive and finite");
    if (!std::isfinite(spec.linpred))
        throw std::domain_error("Weibull linpred must be finite");
}

void check_trunc_spec(const TruncWeibullSpec& spec) {
    check_spec(spec.base);
    if (!(spec.trunc > 0.0) || !std::isfinite(spec.trunc))
        throw std::domain_error("truncation point must be positive and finite");
}

}  // namespace

double weibull_logpdf(double y, const WeibullSpec& spec) {
    check_spec(spec);
    if (!(y > 0.0)) throw std::domain_error("Weibull logpdf requires y > 0");
    const double ly = std::log(y);
    return std::log(spec.shape) + (spec.shape - 1.0) * ly + spec.linpred -
           std::exp(spec.linpred + spec.shape * ly);
}

double weibull_logsurv(double y, const WeibullSpec& spec) {
    check_spec(spec);
    if (y < 0.0) throw std::domain_error("Weibull logsurv requires y >= 0");
    if (y == 0.0) return 0.0;
    return -std::exp(spec.linpred + spec.shape * std::log(y));
}

double weibull_sample(const WeibullSpec& spec, Rng& rng) {
    check_spec(spec);
    // Inverse CDF: y = (-log U / lambda)^(1/shape).
    const double e = rng.exponential();
    return std::exp((std::log(e) - spec.linpred) / spec.shape);
}

double weibull_mean(const WeibullSpec& spec) {
    check_spec(spec);
    return std::tgamma(1.0 + 1.0 / spec.shape) * std::exp(-spec.linpred / spec.shape);
}

double trunc_weibull_logpdf(double y, const TruncWeibullSpec& spec) {
    check_trunc_spec(spec);
    if (!(y > 0.0)) throw std::domain_error("truncated Weibull logpdf requires y > 0");
    if (y < spec.trunc) return kNegInf;
    // Renormalised by the survival at the truncation point; composing the
    // untruncated functions keeps the log-space identity exact.
    return weibull_logpdf(y, spec.base) - weibull_logsurv(spec.trunc, spec.base);
}

double trunc_weibull_logsurv(double y, const TruncWeibullSpec& spec) {
    check_trunc_spec(spec);
    if (y < 0.0) throw std::domain_error("truncated Weibull logsurv requires y >= 0");
    if (y <= spec.trunc) return 0.0;
    return weibull_logsurv(y, spec.base) - weibull_logsurv(spec.trunc, spec.base);
}

double trunc_weibull_sample(const TruncWeibullSpec& spec, Rng& rng) {
    check_trunc_spec(spec);
    // y = (trunc^a + E/lambda)^(1/a), E standard exponential.
    const double a = spec.base.shape;
    const double ta = std::exp(a * std::log(spec.trunc));
    const double e = rng.exponential();
    return std::pow(ta + e * std::exp(-spec.base.linpred), 1.0 / a);
}

double trunc_weibull_mean(const TruncWeibullSpec& spec) {
    check_trunc_spec(spec);
    const double a = spec.base.shape;
    const double d = spec.trunc;
    // mean = d * (1 + J), J = int_1^inf exp(s - s*u^a) du with s = lambda*d^a.
    // Substituting t = s*(u^a - 1) gives a smooth integrand on t in (0, ~45):
    // J = int_0^inf exp(-t)/(a*s) * (1 + t/s)^(1/a - 1) dt.
    // The final map t = 45 w^2 packs nodes where the exponential still matters,
    // so the routine usually converges on its two initial panels.
    const double s = std::exp(spec.base.linpred + a * std::log(d));
    const double expo = 1.0 / a - 1.0;
    const double t_hi = 45.0;
    QuadOptions opt;
    opt.rel_tol = 1e-9;
    opt.initial_segments = 2;
    const double j = integrate(
        [&](double w) {
            const double t = t_hi * w * w;
            return std::exp(-t) / (a * s) * std::pow(1.0 + t / s, expo) * 2.0 * t_hi * w;
        },
        0.0, 1.0, opt);
    return d * (1.0 + j);
}

double log_expit(double x) {
    if (x > 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logistic_prob(const Eigen::VectorXd& x, double gamma0, const Eigen::VectorXd& gamma) {
    if (x.size() != gamma.size())
        throw validation_error("logistic_prob: covariate/coefficient dimension mismatch");
    return expit(gamma0 + gamma.dot(x));
}

HpdInterval hpd_interval(std::vector<double> samples, double level) {
    if (samples.empty()) throw validation_error("hpd_interval: empty sample");
    if (!(level > 0.0 && level < 1.0))
        throw validation_error("hpd_interval: level must be in (0,1)");
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    std::size_t m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
    m = std::clamp<std::size_t>(m, 1, n);
    std::size_t best = 0;
    double best_width = samples[m - 1] - samples[0];
    for (std::size_t i = 1; i + m <= n; ++i) {
        const double w = samples[i + m - 1] - samples[i];
        if (w < best_width) {
            best_width = w;
            best = i;
        }
    }
    return HpdInterval{samples[best], samples[best + m - 1], level};
}

}  // namespace psdisc
