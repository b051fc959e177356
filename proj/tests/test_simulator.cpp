#include <doctest.h>

#include <cmath>

#include "psdisc/io.hpp"
#include "psdisc/rng.hpp"
#include "psdisc/simulator.hpp"

using namespace psdisc;

TEST_SUITE("simulator") {

TEST_CASE("natural constraint and latent bookkeeping") {
    ScenarioConfig cfg = default_scenario_config(Scenario::I).scaled_to(4000);
    Rng rng(12);
    const CompleteData cd = simulate_complete(cfg, rng);
    for (int i = 0; i < cd.n(); ++i) {
        if (cd.i_nd[i] == 0) {
            CHECK(cd.d1[i] > 0.0);
            CHECK(cd.y1[i] > cd.d1[i]);
        } else {
            CHECK(std::isnan(cd.d1[i]));
        }
        CHECK(cd.y1[i] > 0.0);
        CHECK(cd.y0[i] > 0.0);
    }
}

TEST_CASE("fixed-margin randomization") {
    ScenarioConfig cfg = default_scenario_config(Scenario::I);
    Rng rng(3);
    const CompleteData cd = simulate_complete(cfg, rng);
    CHECK(cd.z.sum() == 181);
    CHECK(cd.n() - cd.z.sum() == 154);
}

TEST_CASE("assignment is independent of the stratum") {
    ScenarioConfig cfg = default_scenario_config(Scenario::I).scaled_to(40);
    double sum_z = 0, sum_i = 0, sum_zi = 0, sum_z2 = 0, sum_i2 = 0;
    const int reps = 2500;
    Rng master(42);
    for (int r = 0; r < reps; ++r) {
        Rng rng = master.fork(r);
        const CompleteData cd = simulate_complete(cfg, rng);
        for (int i = 0; i < cd.n(); ++i) {
            sum_z += cd.z[i];
            sum_i += cd.i_nd[i];
            sum_zi += cd.z[i] * cd.i_nd[i];
            sum_z2 += cd.z[i] * cd.z[i];
            sum_i2 += cd.i_nd[i] * cd.i_nd[i];
        }
    }
    const double n = reps * 40.0;
    const double mz = sum_z / n, mi = sum_i / n;
    const double cov = sum_zi / n - mz * mi;
    const double corr = cov / std::sqrt((sum_z2 / n - mz * mz) * (sum_i2 / n - mi * mi));
    CHECK(std::abs(corr) < 3.0 / std::sqrt(n));
}

TEST_CASE("scenario II gives identically distributed D-stratum arms") {
    ScenarioConfig cfg = default_scenario_config(Scenario::II).scaled_to(100000);
    Rng rng(9);
    const CompleteData cd = simulate_complete(cfg, rng);
    double acc = 0.0, acc2 = 0.0;
    int m = 0;
    for (int i = 0; i < cd.n(); ++i) {
        if (cd.i_nd[i] == 1) continue;
        const double diff = cd.y1[i] - cd.y0[i];
        acc += diff;
        acc2 += diff * diff;
        ++m;
        CHECK(cd.y0[i] > cd.d1[i]);  // truncated under scenario II
    }
    REQUIRE(m > 1000);
    const double mean = acc / m;
    const double se = std::sqrt((acc2 / m - mean * mean) / m);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("scenario II requires equal D blocks") {
    ScenarioConfig cfg = default_scenario_config(Scenario::II);
    cfg.d_arm0.intercept += 0.1;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
}

TEST_CASE("censoring window and observation maps") {
    ScenarioConfig cfg = default_scenario_config(Scenario::I).scaled_to(2000);
    Rng rng(17);
    const CompleteData cd = simulate_complete(cfg, rng);
    const CensoredTrial trial = apply_censoring(cd, cfg, rng);
    const Dataset& ds = trial.data;
    for (int i = 0; i < ds.n(); ++i) {
        CHECK(ds.c()[i] >= 10.0);
        CHECK(ds.c()[i] <= 33.0);
        const double y_obs = cd.z[i] == 1 ? cd.y1[i] : cd.y0[i];
        if (y_obs <= ds.c()[i]) {
            CHECK(ds.event()[i] == 1);
            CHECK(ds.y_tilde()[i] == y_obs);
        } else {
            CHECK(ds.event()[i] == 0);
            CHECK(ds.y_tilde()[i] == ds.c()[i]);
        }
        if (cd.z[i] == 0) {
            CHECK(ds.disc()[i] == 0);
            CHECK(ds.d_tilde()[i] == ds.c()[i]);
        }
        if (ds.disc()[i] == 1) CHECK(ds.d_tilde()[i] == cd.d1[i]);
        // covariates carried over untouched
        for (int k = 0; k < 3; ++k) CHECK(ds.x()(i, k) == cd.x_raw(i, k));
    }
}

TEST_CASE("true estimands: decomposition identity and arithmetic") {
    // Fabricated complete data hitting the Table-4 true values exactly:
    // 73 ND units with unit effect 4.92, 27 D units with effect 2.40.
    const int n = 100;
    CompleteData cd;
    cd.x_raw = Eigen::MatrixXd::Zero(n, 3);
    cd.x_std = Eigen::MatrixXd::Zero(n, 3);
    cd.i_nd.resize(n);
    cd.d1.resize(n);
    cd.y1.resize(n);
    cd.y0.resize(n);
    cd.z = Eigen::VectorXi::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (i < 73) {
            cd.i_nd[i] = 1;
            cd.d1[i] = std::numeric_limits<double>::quiet_NaN();
            cd.y0[i] = 5.0;
            cd.y1[i] = 5.0 + 4.92;
        } else {
            cd.i_nd[i] = 0;
            cd.d1[i] = 2.0;
            cd.y0[i] = 4.0;
            cd.y1[i] = 4.0 + 2.40;
        }
    }
    ScenarioConfig cfg = default_scenario_config(Scenario::I);
    EstimandGrids grids;
    grids.d_grid = {};
    grids.y_grid = {};
    grids.dce_d_dgrid = {};
    const TrueValues tv = true_estimands(cd, cfg, grids);
    CHECK(tv.pi_nd == doctest::Approx(0.73));
    CHECK(tv.ace_nd == doctest::Approx(4.92));
    CHECK(tv.ace_d == doctest::Approx(2.40));
    CHECK(tv.itt == doctest::Approx(4.2396).epsilon(1e-12));
    CHECK(tv.itt ==
          doctest::Approx(tv.pi_nd * tv.ace_nd + (1 - tv.pi_nd) * tv.ace_d).epsilon(1e-12));
}

TEST_CASE("scenario II true curves are identically zero") {
    ScenarioConfig cfg = default_scenario_config(Scenario::II).scaled_to(300);
    Rng rng(5);
    const CompleteData cd = simulate_complete(cfg, rng);
    EstimandGrids grids;
    grids.d_grid = {1.0, 2.0, 4.0};
    grids.y_grid = {2.0, 6.0};
    grids.dce_d_dgrid = {1.0, 3.0};
    const TrueValues tv = true_estimands(cd, cfg, grids);
    for (const auto& p : tv.ace_d_curve) CHECK(std::abs(p.value) < 1e-9);
    for (const auto& p : tv.dce_d_curve) CHECK(std::abs(p.value) < 1e-12);
}

TEST_CASE("calibrated scenario I config stays on its targets") {
    const ScenarioConfig cfg = default_scenario_config(Scenario::I);
    const CalibrationTargets targets = default_targets(Scenario::I);
    const CalibrationDiagnostics d = evaluate_config(cfg, 10, 2000, 777, targets);
    CHECK(std::abs(d.pi_nd - 0.73) < 0.02);
    CHECK(std::abs(d.event_share - 0.9164) < 0.02);
    CHECK(std::abs(d.disc_share - 0.1493) < 0.02);
    CHECK(std::abs(d.ace_nd - 4.92) < 0.5);
    CHECK(std::abs(d.ace_d - 2.40) < 0.5);
    CHECK(std::abs(d.itt - 4.24) < 0.5);
}

TEST_CASE("calibrated scenario II config stays on its targets") {
    const ScenarioConfig cfg = default_scenario_config(Scenario::II);
    const CalibrationTargets targets = default_targets(Scenario::II);
    const CalibrationDiagnostics d = evaluate_config(cfg, 10, 2000, 778, targets);
    CHECK(std::abs(d.pi_nd - 0.73) < 0.02);
    CHECK(std::abs(d.ace_nd - 5.72) < 0.5);
    CHECK(std::abs(d.ace_d) < 0.25);
    CHECK(std::abs(d.itt - 4.18) < 0.5);
}

TEST_CASE("degenerate membership: no one discontinues") {
    ScenarioConfig cfg = default_scenario_config(Scenario::I);
    cfg.membership.gamma0 = 50.0;
    cfg.membership.gamma.setZero();
    cfg = cfg.scaled_to(500);
    Rng rng(1);
    const CompleteData cd = simulate_complete(cfg, rng);
    const CensoredTrial trial = apply_censoring(cd, cfg, rng);
    CHECK(trial.data.disc().sum() == 0);
}

TEST_CASE("scenario config json round trip") {
    const ScenarioConfig cfg = default_scenario_config(Scenario::II);
    const std::string path = "/tmp/psdisc_cfg_roundtrip.json";
    save_scenario_config(cfg, path);
    const ScenarioConfig back = load_scenario_config(path);
    CHECK(back.scenario == Scenario::II);
    CHECK(back.membership.gamma0 == cfg.membership.gamma0);
    CHECK(back.d_arm1.delta == cfg.d_arm1.delta);
    CHECK(back.nd_arm1.intercept == cfg.nd_arm1.intercept);
    CHECK(back.covariates.x2_rate == cfg.covariates.x2_rate);
}

}  // TEST_SUITE
