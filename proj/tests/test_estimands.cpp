#include <doctest.h>

#include <cmath>

#include "psdisc/estimands.hpp"
#include "psdisc/io.hpp"

using namespace psdisc;

namespace {

ParamVector fitted_like_theta() {
    ParamVector th = ParamVector::zeros(3);
    th.gamma0 = 0.9;
    th.gamma << -0.7, 0.5, 0.4;
    th.alpha_d = 1.35;
    th.beta_d = -1.9;
    th.eta_d << 0.3, 0.1, 0.4;
    th.alpha_nd1 = 1.12;
    th.beta_nd1 = -2.7;
    th.alpha_d1 = 1.22;
    th.beta_d1 = -1.85;
    th.alpha_nd0 = 1.14;
    th.beta_nd0 = -1.9;
    th.alpha_d0 = 1.2;
    th.beta_d0 = -1.8;
    th.eta_y << 0.3, 0.25, 0.25;
    th.delta = -0.28;
    return th;
}

Eigen::MatrixXd sample_covariates(int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(n, 3);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.bernoulli(0.44) ? 1.0 : 0.0;
        x(i, 2) = rng.bernoulli(0.25) ? 1.0 : 0.0;
    }
    return x;
}

}  // namespace

TEST_SUITE("estimands") {

TEST_CASE("membership share basics") {
    ParamVector th = ParamVector::zeros(3);
    const Eigen::MatrixXd x = sample_covariates(200, 1);
    CHECK(pi_nd(th, x) == doctest::Approx(0.5));
    th.gamma0 = 500.0;
    CHECK(pi_nd(th, x) == doctest::Approx(1.0));
}

TEST_CASE("ace_nd: identical arms vanish, single unit matches the gamma formula") {
    ParamVector th = fitted_like_theta();
    th.alpha_nd0 = th.alpha_nd1;
    th.beta_nd0 = th.beta_nd1;
    const Eigen::MatrixXd x = sample_covariates(100, 2);
    CHECK(ace_nd(th, x) == doctest::Approx(0.0));

    ParamVector th2 = fitted_like_theta();
    Eigen::MatrixXd x1(1, 3);
    x1 << 0.7, 1.0, 0.0;
    const double xey = th2.eta_y.dot(Eigen::Vector3d(0.7, 1.0, 0.0));
    const double expect =
        std::tgamma(1.0 + 1.0 / th2.alpha_nd1) * std::exp(-(th2.beta_nd1 + xey) / th2.alpha_nd1) -
        std::tgamma(1.0 + 1.0 / th2.alpha_nd0) * std::exp(-(th2.beta_nd0 + xey) / th2.alpha_nd0);
    CHECK(ace_nd(th2, x1) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("ace_d_at: truncation dominance and MC cross-check") {
    ParamVector th = fitted_like_theta();
    th.delta = 0.0;
    th.alpha_d1 = th.alpha_d0 = 1.3;
    th.beta_d1 = th.beta_d0 = -1.7;
    const Eigen::MatrixXd x = sample_covariates(50, 3);
    // Same parameters in both arms: the effect is exactly the truncation gain.
    CHECK(ace_d_at(th, x, 2.5) > 0.0);

    // Point evaluation against Monte Carlo draws from both conditional laws.
    ParamVector th2 = fitted_like_theta();
    Eigen::MatrixXd x1(1, 3);
    x1 << -0.4, 0.0, 1.0;
    const double d = 1.8;
    const double xey = th2.eta_y.dot(Eigen::Vector3d(-0.4, 0.0, 1.0));
    Rng rng(44);
    const int n_mc = 1000000;
    double acc = 0.0, acc2 = 0.0;
    for (int m = 0; m < n_mc; ++m) {
        const double y1 = trunc_weibull_sample(
            {{th2.alpha_d1, th2.beta_d1 + xey + th2.delta * std::log(d)}, d}, rng);
        const double y0 =
            weibull_sample({th2.alpha_d0, th2.beta_d0 + xey + th2.delta * std::log(d)}, rng);
        const double diff = y1 - y0;
        acc += diff;
        acc2 += diff * diff;
    }
    const double mc = acc / n_mc;
    const double se = std::sqrt((acc2 / n_mc - mc * mc) / n_mc);
    CHECK(std::abs(ace_d_at(th2, x1, d) - mc) < 3.0 * se);
}

TEST_CASE("ace_d: point-mass limit of the discontinuation law") {
    ParamVector th = fitted_like_theta();
    // Huge shape concentrates d sharply around the scale.
    const double d0 = 2.0;
    th.alpha_d = 400.0;
    th.beta_d = -400.0 * std::log(d0);
    th.eta_d.setZero();
    Eigen::MatrixXd x = sample_covariates(20, 5);
    Rng rng(7);
    const double got = ace_d(th, x, 200, rng);
    const double at_point = ace_d_at(th, x, d0);
    CHECK(std::abs(got - at_point) < 0.05);
}

TEST_CASE("ace_d agrees with the MC integral of the ace_d_at curve") {
    // With eta_d = 0 the discontinuation law is covariate-free, so averaging
    // the per-unit integrand equals integrating the curve against f_D.
    ParamVector th = fitted_like_theta();
    th.eta_d.setZero();
    const Eigen::MatrixXd x = sample_covariates(40, 11);
    Rng rng(123);
    const double direct = ace_d(th, x, 400, rng);
    Rng rng2(321);
    const WeibullSpec disc_spec{th.alpha_d, th.beta_d};
    const int n_mc = 3000;
    double acc = 0.0, acc2 = 0.0;
    for (int m = 0; m < n_mc; ++m) {
        const double v = ace_d_at(th, x, weibull_sample(disc_spec, rng2));
        acc += v;
        acc2 += v * v;
    }
    const double curve_mc = acc / n_mc;
    const double se = std::sqrt((acc2 / n_mc - curve_mc * curve_mc) / n_mc);
    CHECK(std::abs(direct - curve_mc) < 3.0 * se + 0.02);
}

TEST_CASE("dce curves: zero at origin, vanishing tail, truncation step") {
    ParamVector th = fitted_like_theta();
    const Eigen::MatrixXd x = sample_covariates(60, 6);
    CHECK(dce_nd(th, x, 0.0) == 0.0);
    CHECK(std::abs(dce_nd(th, x, 4000.0)) < 1e-8);
    CHECK(dce_d(th, x, 0.0, 2.0) == 0.0);
    CHECK(std::abs(dce_d(th, x, 4000.0, 2.0)) < 1e-8);
    for (double y : {0.5, 2.0, 8.0, 20.0}) {
        CHECK(dce_nd(th, x, y) <= 1.0);
        CHECK(dce_nd(th, x, y) >= -1.0);
    }
    // Below the truncation point the treated survival is exactly 1.
    const double y = 1.2, d = 3.0;
    double mean_s0 = 0.0;
    for (int i = 0; i < x.rows(); ++i) {
        const double lp0 = th.beta_d0 + th.eta_y.dot(Eigen::Vector3d(x.row(i))) +
                           th.delta * std::log(d);
        mean_s0 += std::exp(weibull_logsurv(y, {th.alpha_d0, lp0}));
    }
    mean_s0 /= x.rows();
    CHECK(dce_d(th, x, y, d) == doctest::Approx(1.0 - mean_s0).epsilon(1e-12));
}

TEST_CASE("summarize_posterior: identical draws give point HPDs; identity holds per draw") {
    const ParamVector th = fitted_like_theta();
    const Eigen::MatrixXd x = sample_covariates(40, 8);
    Eigen::MatrixXd draws(12, th.size());
    for (int r = 0; r < 12; ++r) draws.row(r) = th.to_flat();
    EstimandGrids grids;
    grids.d_grid = {1.0, 2.0};
    grids.y_grid = {1.0, 5.0};
    grids.dce_d_dgrid = {2.0};
    SummarizeOptions opt;
    opt.ace_d_mc = 25;
    opt.seed = 99;
    opt.jobs = 1;
    const EstimandReport rep = summarize_posterior(draws, 3, x, grids, opt);
    CHECK(rep.pi_nd.hpd.lower == rep.pi_nd.hpd.upper);
    CHECK(rep.ace_nd.hpd.lower == rep.ace_nd.hpd.upper);
    CHECK(rep.ace_nd.mean == doctest::Approx(ace_nd(th, x)).epsilon(1e-12));
    for (int r = 0; r < rep.scalar_draws.rows(); ++r) {
        const double pi = rep.scalar_draws(r, 0);
        const double itt = rep.scalar_draws(r, 1);
        const double a_nd = rep.scalar_draws(r, 2);
        const double a_d = rep.scalar_draws(r, 3);
        CHECK(std::abs(itt - (pi * a_nd + (1.0 - pi) * a_d)) < 1e-10);
    }
    REQUIRE(rep.ace_d_curve.size() == 2);
    CHECK(rep.ace_d_curve[0].at == 1.0);
    REQUIRE(rep.dce_d_curve.size() == 2);
}

TEST_CASE("summarize_posterior is deterministic given the seed") {
    const ParamVector th = fitted_like_theta();
    const Eigen::MatrixXd x = sample_covariates(30, 9);
    Rng jitter(4);
    Eigen::MatrixXd draws(40, th.size());
    for (int r = 0; r < 40; ++r) {
        ParamVector t2 = th;
        t2.beta_nd1 += 0.05 * jitter.normal();
        t2.beta_nd0 += 0.05 * jitter.normal();
        draws.row(r) = t2.to_flat();
    }
    EstimandGrids grids;
    grids.d_grid = {1.0};
    grids.y_grid = {2.0};
    grids.dce_d_dgrid = {};
    SummarizeOptions opt;
    opt.ace_d_mc = 10;
    opt.seed = 1234;
    opt.jobs = 2;
    const EstimandReport a = summarize_posterior(draws, 3, x, grids, opt);
    const EstimandReport b = summarize_posterior(draws, 3, x, grids, opt);
    CHECK(a.ace_d.mean == b.ace_d.mean);
    CHECK(a.ace_d.hpd.lower == b.ace_d.hpd.lower);
    CHECK(a.itt.mean == b.itt.mean);
}

TEST_CASE("strata characterization pools draws and respects pinning") {
    // Build a fit on simulated data with latents stored, then profile.
    const ScenarioConfig cfg = default_scenario_config(Scenario::I).scaled_to(160);
    Rng rng(31);
    const CompleteData cd = simulate_complete(cfg, rng);
    const CensoredTrial trial = apply_censoring(cd, cfg, rng);
    const Dataset fit_ds = standardize_covariates(trial.data);
    SamplerConfig scfg;
    scfg.iters = 1500;
    scfg.burnin = 500;
    scfg.thin = 5;
    scfg.chains = 1;
    scfg.store_latents = true;
    scfg.latent_every = 4;
    const Chain chain = run_chain(fit_ds, PriorConfig{}, scfg, 77);
    REQUIRE(!chain.latents.empty());

    const StrataProfile prof = characterize_strata({chain}, trial.data);
    CHECK(prof.snapshots_used > 0);
    REQUIRE(prof.classes.size() == 3);
    double weight = 0.0;
    for (const auto& cl : prof.classes) weight += cl.weight;
    CHECK(weight == doctest::Approx(1.0));
    // Simulated truth couples membership inversely to x1: ND mean below D mean.
    const auto find = [&](const std::string& n) {
        for (const auto& cl : prof.classes)
            if (cl.name == n) return cl;
        REQUIRE(false);
        return prof.classes.front();
    };
    const auto nd = find("never_discontinue");
    const auto early = find("discontinue_early");
    const auto late = find("discontinue_late");
    CHECK(nd.x1_mean < 0.5 * (early.x1_mean + late.x1_mean));
}

TEST_CASE("single-class profile when every unit is pinned ND") {
    Eigen::VectorXi z(3), event(3), disc(3);
    Eigen::VectorXd c(3), y(3), d(3);
    Eigen::MatrixXd x(3, 3);
    for (int i = 0; i < 3; ++i) {
        z[i] = 1;
        c[i] = 20.0;
        y[i] = 3.0 + i;
        event[i] = 1;
        d[i] = 20.0;
        disc[i] = 0;
        x.row(i) << 60.0 + i, 1.0, 0.0;
    }
    const Dataset ds(z, c, y, event, d, disc, x, {"x1", "x2", "x3"});
    Chain chain;
    chain.latents.push_back(
        {0, {1, 1, 1}, Eigen::VectorXd::Constant(3, LatentState::undefined())});
    const StrataProfile prof = characterize_strata({chain}, ds);
    REQUIRE(prof.classes.size() == 1);
    CHECK(prof.classes[0].name == "never_discontinue");
    CHECK(prof.snapshots_skipped == 1);
}

}  // TEST_SUITE
