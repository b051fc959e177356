#include "psdisc/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "psdisc/distributions.hpp"
#include "psdisc/errors.hpp"

namespace psdisc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double normal_logpdf(double x, double var) {
    return -0.5 * (x * x / var + std::log(2.0 * M_PI * var));
}

// Gamma(shape a, rate b) log-density.
double gamma_logpdf(double x, double a, double b) {
    if (!(x > 0.0)) return kNegInf;
    return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
}

}  // namespace

ParamVector ParamVector::zeros(int k) {
    ParamVector p;
    p.gamma = Eigen::VectorXd::Zero(k);
    p.eta_d = Eigen::VectorXd::Zero(k);
    p.eta_y = Eigen::VectorXd::Zero(k);
    return p;
}

Eigen::VectorXd ParamVector::to_flat() const {
    const int k = n_covariates();
    Eigen::VectorXd v(size());
    int j = 0;
    v[j++] = gamma0;
    for (int i = 0; i < k; ++i) v[j++] = gamma[i];
    v[j++] = alpha_d;
    v[j++] = beta_d;
    for (int i = 0; i < k; ++i) v[j++] = eta_d[i];
    v[j++] = alpha_nd1;
    v[j++] = beta_nd1;
    v[j++] = alpha_d1;
    v[j++] = beta_d1;
    v[j++] = alpha_nd0;
    v[j++] = beta_nd0;
    v[j++] = alpha_d0;
    v[j++] = beta_d0;
    for (int i = 0; i < k; ++i) v[j++] = eta_y[i];
    v[j++] = delta;
    return v;
}

ParamVector ParamVector::from_flat(const Eigen::VectorXd& v, int k) {
    ParamVector p = zeros(k);
    if (v.size() != p.size()) throw validation_error("ParamVector::from_flat: size mismatch");
    int j = 0;
    p.gamma0 = v[j++];
    for (int i = 0; i < k; ++i) p.gamma[i] = v[j++];
    p.alpha_d = v[j++];
    p.beta_d = v[j++];
    for (int i = 0; i < k; ++i) p.eta_d[i] = v[j++];
    p.alpha_nd1 = v[j++];
    p.beta_nd1 = v[j++];
    p.alpha_d1 = v[j++];
    p.beta_d1 = v[j++];
    p.alpha_nd0 = v[j++];
    p.beta_nd0 = v[j++];
    p.alpha_d0 = v[j++];
    p.beta_d0 = v[j++];
    for (int i = 0; i < k; ++i) p.eta_y[i] = v[j++];
    p.delta = v[j++];
    return p;
}

std::vector<std::string> ParamVector::names(const std::vector<std::string>& covs) {
    std::vector<std::string> out;
    out.push_back("gamma0");
    for (const auto& c : covs) out.push_back("gamma_" + c);
    out.push_back("alpha_d");
    out.push_back("beta_d");
    for (const auto& c : covs) out.push_back("eta_d_" + c);
    out.push_back("alpha_nd1");
    out.push_back("beta_nd1");
    out.push_back("alpha_d1");
    out.push_back("beta_d1");
    out.push_back("alpha_nd0");
    out.push_back("beta_nd0");
    out.push_back("alpha_d0");
    out.push_back("beta_d0");
    for (const auto& c : covs) out.push_back("eta_y_" + c);
    out.push_back("delta");
    return out;
}

bool LatentState::consistent() const {
    if (static_cast<Eigen::Index>(i_nd.size()) != d1.size()) return false;
    for (std::size_t i = 0; i < i_nd.size(); ++i) {
        if (i_nd[i] == 1 && !std::isnan(d1[static_cast<Eigen::Index>(i)])) return false;
        if (i_nd[i] == 0 && !(d1[static_cast<Eigen::Index>(i)] > 0.0)) return false;
    }
    return true;
}

double log_prior(const ParamVector& theta, const PriorConfig& prior) {
    if (!theta.shapes_positive()) return kNegInf;
    double lp = 0.0;
    lp += normal_logpdf(theta.gamma0, prior.membership_var);
    for (int i = 0; i < theta.gamma.size(); ++i)
        lp += normal_logpdf(theta.gamma[i], prior.membership_var);
    lp += gamma_logpdf(theta.alpha_d, prior.gamma_shape, prior.gamma_rate);
    lp += normal_logpdf(theta.beta_d, prior.intercept_var);
    for (int i = 0; i < theta.eta_d.size(); ++i) lp += normal_logpdf(theta.eta_d[i], prior.coeff_var);
    lp += gamma_logpdf(theta.alpha_nd1, prior.gamma_shape, prior.gamma_rate);
    lp += normal_logpdf(theta.beta_nd1, prior.intercept_var);
    lp += gamma_logpdf(theta.alpha_d1, prior.gamma_shape, prior.gamma_rate);
    lp += normal_logpdf(theta.beta_d1, prior.intercept_var);
    lp += gamma_logpdf(theta.alpha_nd0, prior.gamma_shape, prior.gamma_rate);
    lp += normal_logpdf(theta.beta_nd0, prior.intercept_var);
    lp += gamma_logpdf(theta.alpha_d0, prior.gamma_shape, prior.gamma_rate);
    lp += normal_logpdf(theta.beta_d0, prior.intercept_var);
    for (int i = 0; i < theta.eta_y.size(); ++i) lp += normal_logpdf(theta.eta_y[i], prior.coeff_var);
    lp += normal_logpdf(theta.delta, prior.delta_var);
    return lp;
}

double complete_unit_loglik(const ParamVector& theta, const Dataset& ds, int i, int i_nd,
                            double d1) {
    const Eigen::VectorXd x = ds.x().row(i);
    const double lp_m = theta.gamma0 + theta.gamma.dot(x);
    const double xey = theta.eta_y.dot(x);
    const int z = ds.z()[i];
    const int event = ds.event()[i];
    const int disc = ds.disc()[i];
    const double y = ds.y_tilde()[i];
    const double c = ds.c()[i];

    if (i_nd == 1) {
        if (z == 1 && disc == 1) return kNegInf;  // observed discontinuation pins D
        const double lgp = log_expit(lp_m);
        const WeibullSpec nd{z == 1 ? theta.alpha_nd1 : theta.alpha_nd0,
                             (z == 1 ? theta.beta_nd1 : theta.beta_nd0) + xey};
        return lgp + (event == 1 ? weibull_logpdf(y, nd) : weibull_logsurv(c, nd));
    }

    if (!(d1 > 0.0) || std::isnan(d1)) return kNegInf;
    const double lg1mp = log_expit(-lp_m);
    const WeibullSpec disc_spec{theta.alpha_d, theta.beta_d + theta.eta_d.dot(x)};

    if (z == 1) {
        if (disc == 1) {
            if (d1 != ds.d_tilde()[i]) return kNegInf;  // pinned to the observation
            const TruncWeibullSpec tw{{theta.alpha_d1, theta.beta_d1 + xey +
                                                           theta.delta * std::log(d1)},
                                      d1};
            const double y_term =
                event == 1 ? trunc_weibull_logpdf(y, tw) : trunc_weibull_logsurv(c, tw);
            return lg1mp + weibull_logpdf(d1, disc_spec) + y_term;
        }
        // No discontinuation seen: a D latent is only possible when the outcome
        // was censored and discontinuation lies beyond C. The likelihood sees
        // that only through the survival of D at C.
        if (event == 1) return kNegInf;
        if (!(d1 > c)) return kNegInf;
        return lg1mp + weibull_logsurv(c, disc_spec);
    }

    // Control D unit: Y(0) follows the untruncated form with the log(d) term.
    const WeibullSpec y0{theta.alpha_d0, theta.beta_d0 + xey + theta.delta * std::log(d1)};
    const double y_term = event == 1 ? weibull_logpdf(y, y0) : weibull_logsurv(c, y0);
    return lg1mp + weibull_logpdf(d1, disc_spec) + y_term;
}

double complete_logpost(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                        const PriorConfig& prior) {
    if (static_cast<int>(lat.i_nd.size()) != ds.n())
        throw validation_error("complete_logpost: latent state size mismatch");
    double total = log_prior(theta, prior);
    if (total == kNegInf) return kNegInf;
    for (int i = 0; i < ds.n(); ++i) {
        total += complete_unit_loglik(theta, ds, i, lat.i_nd[i], lat.d1[i]);
        if (total == kNegInf) return kNegInf;
    }
    return total;
}

namespace {

// log of int_0^inf exp(g(d)) dd where g = log f_D(d|x) + log(Y(0) factor | d).
// Works in u = log d, where the integrand is a smooth bump. The bracket starts
// at extreme f_D quantiles and is widened until the integrand has fallen 80
// log-units below its running maximum: with delta != 0 the Y(0) factor can
// push the mass far outside the f_D quantile range.
double log_control_integral(const ParamVector& theta, double xed, double xey, double y_or_c,
                            bool event, const QuadOptions& quad) {
    const WeibullSpec disc_spec{theta.alpha_d, theta.beta_d + xed};
    const auto log_integrand = [&](double u) {
        const double d = std::exp(u);
        if (d == 0.0 || !std::isfinite(d)) return kNegInf;
        const WeibullSpec y0{theta.alpha_d0, theta.beta_d0 + xey + theta.delta * u};
        const double y_term = event ? weibull_logpdf(y_or_c, y0) : weibull_logsurv(y_or_c, y0);
        return weibull_logpdf(d, disc_spec) + y_term + u;  // + u: du Jacobian
    };
    double u_lo = (std::log(-std::log1p(-1e-12)) - disc_spec.linpred) / disc_spec.shape;
    double u_hi = (std::log(-std::log(1e-12)) - disc_spec.linpred) / disc_spec.shape;
    double m = kNegInf;
    const int probes = 64;
    for (int j = 0; j <= probes; ++j) {
        const double u = u_lo + (u_hi - u_lo) * j / probes;
        m = std::max(m, log_integrand(u));
    }
    const double drop = 80.0;
    const double step = 4.0;
    for (int it = 0; it < 200 && log_integrand(u_lo) > m - drop; ++it) {
        u_lo -= step;
        m = std::max(m, log_integrand(u_lo));
    }
    for (int it = 0; it < 200 && log_integrand(u_hi) > m - drop; ++it) {
        u_hi += step;
        m = std::max(m, log_integrand(u_hi));
    }
    // Final fine probe so the rescaling constant sits at the true maximum.
    for (int j = 0; j <= 2 * probes; ++j) {
        const double u = u_lo + (u_hi - u_lo) * j / (2 * probes);
        m = std::max(m, log_integrand(u));
    }
    if (m == kNegInf) return kNegInf;
    QuadOptions q = quad;
    q.initial_segments = 64;
    const double integral =
        integrate([&](double u) { return std::exp(log_integrand(u) - m); }, u_lo, u_hi, q);
    return m + std::log(integral);
}

}  // namespace

double observed_loglik(const ParamVector& theta, const Dataset& ds, const QuadOptions& quad) {
    if (!theta.shapes_positive()) return kNegInf;
    double total = 0.0;
    for (int i = 0; i < ds.n(); ++i) {
        const Eigen::VectorXd x = ds.x().row(i);
        const double lp_m = theta.gamma0 + theta.gamma.dot(x);
        const double lgp = log_expit(lp_m);
        const double lg1mp = log_expit(-lp_m);
        const double xey = theta.eta_y.dot(x);
        const double xed = theta.eta_d.dot(x);
        const int event = ds.event()[i];
        const double y = ds.y_tilde()[i];
        const double c = ds.c()[i];

        double term;
        if (ds.z()[i] == 1) {
            const WeibullSpec nd1{theta.alpha_nd1, theta.beta_nd1 + xey};
            const WeibullSpec disc_spec{theta.alpha_d, theta.beta_d + xed};
            if (ds.disc()[i] == 1) {
                const double d_obs = ds.d_tilde()[i];
                const TruncWeibullSpec tw{{theta.alpha_d1, theta.beta_d1 + xey +
                                                               theta.delta * std::log(d_obs)},
                                          d_obs};
                term = lg1mp + weibull_logpdf(d_obs, disc_spec) +
                       (event == 1 ? trunc_weibull_logpdf(y, tw) : trunc_weibull_logsurv(c, tw));
            } else if (event == 1) {
                term = lgp + weibull_logpdf(y, nd1);
            } else {
                term = logsumexp2(lgp + weibull_logsurv(c, nd1),
                                  lg1mp + weibull_logsurv(c, disc_spec));
            }
        } else {
            const WeibullSpec nd0{theta.alpha_nd0, theta.beta_nd0 + xey};
            const double nd_part =
                lgp + (event == 1 ? weibull_logpdf(y, nd0) : weibull_logsurv(c, nd0));
            const double d_part =
                lg1mp + log_control_integral(theta, xed, xey, event == 1 ? y : c, event == 1, quad);
            term = logsumexp2(nd_part, d_part);
        }
        total += term;
        if (total == kNegInf) return kNegInf;
    }
    return total;
}

}  // namespace psdisc
