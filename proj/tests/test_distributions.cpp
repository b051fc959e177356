#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "psdisc/distributions.hpp"
#include "psdisc/quadrature.hpp"
#include "psdisc/rng.hpp"

using namespace psdisc;

namespace {

double analytic_cdf(double y, const WeibullSpec& s) {
    return 1.0 - std::exp(-std::exp(s.linpred) * std::pow(y, s.shape));
}

double trunc_analytic_cdf(double y, const TruncWeibullSpec& s) {
    if (y <= s.trunc) return 0.0;
    const double lam = std::exp(s.base.linpred);
    const double a = s.base.shape;
    return 1.0 - std::exp(lam * (std::pow(s.trunc, a) - std::pow(y, a)));
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> x, const Cdf& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max(d, std::abs(f - (static_cast<double>(i) + 1.0) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return d;
}

double ks_crit_1pct(std::size_t n) { return 1.62762 / std::sqrt(static_cast<double>(n)); }

struct MeanSe {
    double mean;
    double se;
};

MeanSe mean_se(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / (v.size() - 1.0));
    return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("weibull logpdf closed forms") {
    CHECK(weibull_logpdf(1.0, {1.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(weibull_logpdf(1.0, {2.0, 0.0}) ==
          doctest::Approx(std::log(2.0) - 1.0).epsilon(1e-12));
    CHECK_THROWS_AS(weibull_logpdf(0.0, {1.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(weibull_logpdf(-1.0, {1.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(weibull_logpdf(1.0, {-2.0, 0.0}), std::domain_error);
}

TEST_CASE("weibull logpdf matches finite differences of the analytic CDF") {
    const WeibullSpec s{1.7, -0.4};
    const double y = 2.5;
    const double h = 1e-5;
    const double fd = (analytic_cdf(y + h, s) - analytic_cdf(y - h, s)) / (2.0 * h);
    CHECK(std::exp(weibull_logpdf(y, s)) == doctest::Approx(fd).epsilon(0).scale(1).epsilon(1e-6));
    CHECK(std::abs(std::exp(weibull_logpdf(y, s)) - fd) < 1e-6);
}

TEST_CASE("weibull logsurv closed forms and quadrature tail") {
    CHECK(weibull_logsurv(1.0, {2.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(weibull_logsurv(0.0, {1.3, 0.7}) == 0.0);
    const WeibullSpec s{0.8, 0.5};
    const double expected = -std::exp(0.5) * std::pow(3.0, 0.8);
    CHECK(weibull_logsurv(3.0, s) == doctest::Approx(expected).epsilon(1e-12));
    QuadOptions opt;
    opt.rel_tol = 1e-10;
    const double tail =
        integrate_to_inf([&](double y) { return std::exp(weibull_logpdf(y, s)); }, 3.0, opt);
    CHECK(std::abs(std::exp(weibull_logsurv(3.0, s)) - tail) < 1e-6);
}

TEST_CASE("weibull sampler: mean, determinism, KS") {
    Rng rng(42);
    std::vector<double> draws;
    for (int i = 0; i < 100000; ++i) draws.push_back(weibull_sample({1.0, 0.0}, rng));
    const auto ms = mean_se(draws);
    CHECK(std::abs(ms.mean - 1.0) < 3.0 * ms.se);

    Rng r1(7), r2(7);
    for (int i = 0; i < 50; ++i)
        CHECK(weibull_sample({2.0, 1.0}, r1) == weibull_sample({2.0, 1.0}, r2));

    const WeibullSpec s{2.0, 1.0};
    Rng rks(11);
    std::vector<double> x;
    for (int i = 0; i < 100000; ++i) x.push_back(weibull_sample(s, rks));
    const double d = ks_statistic(x, [&](double v) { return analytic_cdf(v, s); });
    CHECK(d < ks_crit_1pct(x.size()));
}

TEST_CASE("truncated weibull logpdf") {
    CHECK(trunc_weibull_logpdf(1.0, {{1.4, 0.3}, 2.0}) ==
          -std::numeric_limits<double>::infinity());
    CHECK(trunc_weibull_logpdf(3.0, {{1.0, 0.0}, 2.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    // Normalization over [trunc, inf).
    const TruncWeibullSpec s{{1.5, 0.2}, 1.0};
    QuadOptions opt;
    opt.rel_tol = 1e-10;
    const double total =
        integrate_to_inf([&](double y) { return std::exp(trunc_weibull_logpdf(y, s)); }, 1.0, opt);
    CHECK(std::abs(total - 1.0) < 1e-6);
    CHECK_THROWS_AS(trunc_weibull_logpdf(0.0, s), std::domain_error);
}

TEST_CASE("truncated weibull logsurv") {
    const TruncWeibullSpec s{{1.0, 0.0}, 2.0};
    CHECK(trunc_weibull_logsurv(2.0, s) == 0.0);
    CHECK(trunc_weibull_logsurv(0.5, s) == 0.0);
    CHECK(trunc_weibull_logsurv(3.0, s) == doctest::Approx(-1.0).epsilon(1e-12));
    const TruncWeibullSpec g{{1.8, -0.6}, 1.3};
    QuadOptions opt;
    opt.rel_tol = 1e-10;
    const double mass =
        integrate([&](double y) { return std::exp(trunc_weibull_logpdf(y, g)); }, g.trunc, 4.0,
                  opt);
    CHECK(std::abs(std::exp(trunc_weibull_logsurv(4.0, g)) - (1.0 - mass)) < 1e-6);
}

TEST_CASE("truncated weibull sampler") {
    const TruncWeibullSpec s{{1.0, 0.0}, 2.0};
    Rng rng(5);
    std::vector<double> x;
    for (int i = 0; i < 100000; ++i) x.push_back(trunc_weibull_sample(s, rng));
    for (double v : x) CHECK(v >= s.trunc);
    const auto ms = mean_se(x);
    CHECK(std::abs(ms.mean - 3.0) < 3.0 * ms.se);

    const TruncWeibullSpec g{{1.6, -0.8}, 0.7};
    Rng rks(13);
    std::vector<double> y;
    for (int i = 0; i < 100000; ++i) y.push_back(trunc_weibull_sample(g, rks));
    const double d = ks_statistic(y, [&](double v) { return trunc_analytic_cdf(v, g); });
    CHECK(d < ks_crit_1pct(y.size()));
}

TEST_CASE("weibull mean") {
    CHECK(weibull_mean({1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(weibull_mean({2.0, 0.0}) == doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-12));
    const WeibullSpec s{1.3, -0.7};
    Rng rng(17);
    std::vector<double> x;
    for (int i = 0; i < 1000000; ++i) x.push_back(weibull_sample(s, rng));
    const auto ms = mean_se(x);
    CHECK(std::abs(weibull_mean(s) - ms.mean) < 3.0 * ms.se);
}

TEST_CASE("truncated weibull mean") {
    CHECK(trunc_weibull_mean({{1.0, 0.0}, 2.0}) == doctest::Approx(3.0).epsilon(1e-8));
    const WeibullSpec base{1.7, -0.3};
    CHECK(std::abs(trunc_weibull_mean({base, 1e-9}) - weibull_mean(base)) < 1e-6);
    const TruncWeibullSpec s{{2.0, 0.0}, 1.0};
    Rng rng(23);
    std::vector<double> x;
    for (int i = 0; i < 1000000; ++i) x.push_back(trunc_weibull_sample(s, rng));
    const auto ms = mean_se(x);
    CHECK(std::abs(trunc_weibull_mean(s) - ms.mean) < 3.0 * ms.se);
    CHECK(trunc_weibull_mean(s) >= s.trunc);
}

TEST_CASE("logistic probability") {
    Eigen::VectorXd x(2), g(2);
    x << 1.2, -0.5;
    g << 0.0, 0.0;
    CHECK(logistic_prob(x, 0.0, g) == doctest::Approx(0.5));
    CHECK(logistic_prob(x, std::log(3.0), g) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(logistic_prob(x, -800.0, g) == doctest::Approx(0.0));
    CHECK(std::isfinite(logistic_prob(x, -800.0, g)));
    Eigen::VectorXd bad(3);
    CHECK_THROWS_AS(logistic_prob(bad, 0.0, g), validation_error);

    // Monotone in a covariate with positive coefficient.
    Eigen::VectorXd gp(2);
    gp << 0.8, -0.2;
    double prev = -1.0;
    for (double v = -3.0; v <= 3.0; v += 0.5) {
        Eigen::VectorXd xv(2);
        xv << v, 0.3;
        const double p = logistic_prob(xv, 0.1, gp);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("hpd interval: integers 1..100") {
    std::vector<double> s;
    for (int i = 1; i <= 100; ++i) s.push_back(i);
    const HpdInterval h = hpd_interval(s, 0.95);
    // Brute force over all windows holding ceil(0.95*100)=95 points.
    const int m = 95;
    double best_w = 1e300;
    double best_lo = 0.0, best_hi = 0.0;
    for (int i = 0; i + m <= 100; ++i) {
        const double w = s[i + m - 1] - s[i];
        if (w < best_w) {
            best_w = w;
            best_lo = s[i];
            best_hi = s[i + m - 1];
        }
    }
    CHECK(h.lower == best_lo);
    CHECK(h.upper == best_hi);
    CHECK(h.lower == 1.0);
    CHECK(h.upper == 95.0);
}

TEST_CASE("hpd interval: degenerate and gaussian") {
    std::vector<double> same(10, 3.25);
    const HpdInterval h = hpd_interval(same, 0.5);
    CHECK(h.lower == 3.25);
    CHECK(h.upper == 3.25);

    Rng rng(3);
    std::vector<double> z;
    for (int i = 0; i < 100000; ++i) z.push_back(rng.normal());
    const HpdInterval hz = hpd_interval(z, 0.95);
    CHECK(std::abs(hz.lower + 1.96) < 0.05);
    CHECK(std::abs(hz.upper - 1.96) < 0.05);

    CHECK_THROWS_AS(hpd_interval({}, 0.95), validation_error);
    CHECK_THROWS_AS(hpd_interval({1.0}, 1.5), validation_error);
}

TEST_CASE("hpd interval: brute-force property on random samples") {
    Rng rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 5 + static_cast<int>(rng.uniform() * 195);
        std::vector<double> s;
        for (int i = 0; i < n; ++i) s.push_back(rng.normal() * (1.0 + rep % 3));
        const double level = 0.5 + 0.45 * rng.uniform();
        const HpdInterval h = hpd_interval(s, level);
        std::sort(s.begin(), s.end());
        const int m = static_cast<int>(std::ceil(level * n));
        int contained = 0;
        for (double v : s)
            if (v >= h.lower && v <= h.upper) ++contained;
        CHECK(contained >= m);
        for (int i = 0; i + m <= n; ++i)
            CHECK(h.upper - h.lower <= s[i + m - 1] - s[i] + 1e-12);
    }
}

TEST_CASE("log identity: truncated = untruncated minus survival at truncation") {
    Rng rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        const WeibullSpec base{0.5 + 3.5 * rng.uniform(), -3.0 + 5.0 * rng.uniform()};
        const double trunc = 0.1 + 4.9 * rng.uniform();
        const TruncWeibullSpec s{base, trunc};
        for (int j = 0; j < 10; ++j) {
            const double y = trunc + 6.0 * rng.uniform();
            const double lhs = trunc_weibull_logpdf(y, s);
            const double rhs = weibull_logpdf(y, base) - weibull_logsurv(trunc, base);
            CHECK(std::abs(lhs - rhs) < 1e-12);
        }
    }
}

TEST_CASE("quadrature failure carries diagnostics") {
    QuadOptions opt;
    opt.rel_tol = 1e-14;
    opt.max_segments = 12;
    try {
        integrate([](double t) { return std::cos(600.0 * t * t); }, 0.0, 30.0, opt);
        CHECK(false);
    } catch (const numeric_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("estimate") != std::string::npos);
        CHECK(msg.find("segments") != std::string::npos);
    }
}

TEST_CASE("normalization and survival-CDF identities on a random grid") {
    Rng rng(29);
    QuadOptions opt;
    opt.rel_tol = 1e-12;
    for (int rep = 0; rep < 20; ++rep) {
        const WeibullSpec s{0.5 + 3.5 * rng.uniform(), -3.0 + 5.0 * rng.uniform()};
        const double total =
            integrate_to_inf([&](double y) { return std::exp(weibull_logpdf(y, s)); }, 0.0, opt);
        CHECK(std::abs(total - 1.0) < 1e-6);
        const double y = 0.2 + 5.0 * rng.uniform();
        const double cdf =
            integrate([&](double v) { return std::exp(weibull_logpdf(v, s)); }, 1e-300, y, opt);
        CHECK(std::abs(std::exp(weibull_logsurv(y, s)) - (1.0 - cdf)) < 1e-9);
    }
}

}  // TEST_SUITE
