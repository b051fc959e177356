#include "psdisc/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "psdisc/errors.hpp"

namespace psdisc {

namespace {

Eigen::ArrayXd lin(const Eigen::MatrixXd& x, const Eigen::VectorXd& coef, double intercept) {
    if (x.cols() == 0) return Eigen::ArrayXd::Constant(x.rows(), intercept);
    return (x * coef).array() + intercept;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

double pi_nd(const ParamVector& theta, const Eigen::MatrixXd& x_emp) {
    if (x_emp.rows() == 0) throw validation_error("pi_nd: empty covariate matrix");
    const Eigen::ArrayXd lp = lin(x_emp, theta.gamma, theta.gamma0);
    return lp.unaryExpr([](double v) { return expit(v); }).mean();
}

double ace_nd(const ParamVector& theta, const Eigen::MatrixXd& x_emp) {
    const Eigen::ArrayXd xey = lin(x_emp, theta.eta_y, 0.0);
    const double g1 = std::tgamma(1.0 + 1.0 / theta.alpha_nd1);
    const double g0 = std::tgamma(1.0 + 1.0 / theta.alpha_nd0);
    const Eigen::ArrayXd m1 = g1 * (-(theta.beta_nd1 + xey) / theta.alpha_nd1).exp();
    const Eigen::ArrayXd m0 = g0 * (-(theta.beta_nd0 + xey) / theta.alpha_nd0).exp();
    return (m1 - m0).mean();
}

double ace_d_at(const ParamVector& theta, const Eigen::MatrixXd& x_emp, double d) {
    if (!(d > 0.0)) throw validation_error("ace_d_at: d must be positive");
    const Eigen::ArrayXd xey = lin(x_emp, theta.eta_y, 0.0);
    const double ld = std::log(d);
    const double g0 = std::tgamma(1.0 + 1.0 / theta.alpha_d0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < xey.size(); ++i) {
        const double lp1 = theta.beta_d1 + xey[i] + theta.delta * ld;
        const double lp0 = theta.beta_d0 + xey[i] + theta.delta * ld;
        const double m1 = trunc_weibull_mean({{theta.alpha_d1, lp1}, d});
        const double m0 = g0 * std::exp(-lp0 / theta.alpha_d0);
        acc += m1 - m0;
    }
    return acc / static_cast<double>(xey.size());
}

double ace_d(const ParamVector& theta, const Eigen::MatrixXd& x_emp, int mc_draws, Rng& rng) {
    if (mc_draws < 1) throw validation_error("ace_d: mc_draws must be >= 1");
    const Eigen::ArrayXd xey = lin(x_emp, theta.eta_y, 0.0);
    const Eigen::ArrayXd xed = lin(x_emp, theta.eta_d, 0.0);
    const double g0 = std::tgamma(1.0 + 1.0 / theta.alpha_d0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < xey.size(); ++i) {
        const WeibullSpec disc_spec{theta.alpha_d, theta.beta_d + xed[i]};
        for (int m = 0; m < mc_draws; ++m) {
            const double d = weibull_sample(disc_spec, rng);
            const double ld = std::log(d);
            const double m1 =
                trunc_weibull_mean({{theta.alpha_d1, theta.beta_d1 + xey[i] + theta.delta * ld}, d});
            const double m0 =
                g0 * std::exp(-(theta.beta_d0 + xey[i] + theta.delta * ld) / theta.alpha_d0);
            acc += m1 - m0;
        }
    }
    return acc / (static_cast<double>(xey.size()) * mc_draws);
}

double dce_nd(const ParamVector& theta, const Eigen::MatrixXd& x_emp, double y) {
    if (y < 0.0) throw validation_error("dce_nd: y must be >= 0");
    if (y == 0.0) return 0.0;
    const Eigen::ArrayXd xey = lin(x_emp, theta.eta_y, 0.0);
    const double ly = std::log(y);
    const Eigen::ArrayXd s1 = (-(theta.beta_nd1 + xey + theta.alpha_nd1 * ly).exp()).exp();
    const Eigen::ArrayXd s0 = (-(theta.beta_nd0 + xey + theta.alpha_nd0 * ly).exp()).exp();
    return (s1 - s0).mean();
}

double dce_d(const ParamVector& theta, const Eigen::MatrixXd& x_emp, double y, double d) {
    if (!(d > 0.0)) throw validation_error("dce_d: d must be positive");
    if (y < 0.0) throw validation_error("dce_d: y must be >= 0");
    if (y == 0.0) return 0.0;
    const Eigen::ArrayXd xey = lin(x_emp, theta.eta_y, 0.0);
    const double ly = std::log(y);
    const double ld = std::log(d);
    const double dld = theta.delta * ld;
    // Arm 1 is left-truncated at d: survival is exactly 1 below the truncation.
    Eigen::ArrayXd s1;
    if (y <= d) {
        s1 = Eigen::ArrayXd::Ones(xey.size());
    } else {
        const Eigen::ArrayXd lp1 = theta.beta_d1 + xey + dld;
        s1 = ((lp1 + theta.alpha_d1 * ld).exp() - (lp1 + theta.alpha_d1 * ly).exp()).exp();
    }
    const Eigen::ArrayXd s0 = (-(theta.beta_d0 + xey + dld + theta.alpha_d0 * ly).exp()).exp();
    return (s1 - s0).mean();
}

namespace {

ScalarSummary summarize_column(const std::string& name, const Eigen::VectorXd& col, double level) {
    ScalarSummary s;
    s.name = name;
    s.mean = col.mean();
    std::vector<double> v(col.data(), col.data() + col.size());
    s.hpd = hpd_interval(std::move(v), level);
    return s;
}

}  // namespace

EstimandReport summarize_posterior(const Eigen::MatrixXd& draws, int n_covariates,
                                   const Eigen::MatrixXd& x_emp, const EstimandGrids& grids,
                                   const SummarizeOptions& opt,
                                   const std::vector<LatentSnapshot>* latents) {
    const int r = static_cast<int>(draws.rows());
    if (r == 0) throw validation_error("summarize_posterior: no draws");
    if (x_emp.cols() != n_covariates)
        throw validation_error("summarize_posterior: covariate dimension mismatch");

    const int n_ace_grid = opt.curves ? static_cast<int>(grids.d_grid.size()) : 0;
    const int n_dce_nd = opt.curves ? static_cast<int>(grids.y_grid.size()) : 0;
    const int n_dce_d =
        opt.curves ? static_cast<int>(grids.dce_d_dgrid.size() * grids.y_grid.size()) : 0;

    Eigen::MatrixXd scalars(r, 4);
    Eigen::MatrixXd ace_curve(r, n_ace_grid);
    Eigen::MatrixXd dce_nd_curve(r, n_dce_nd);
    Eigen::MatrixXd dce_d_curve(r, n_dce_d);

    Rng seeder(opt.seed);

    const auto eval_range = [&](int lo, int hi) {
        for (int t = lo; t < hi; ++t) {
            const ParamVector th = ParamVector::from_flat(draws.row(t), n_covariates);
            Rng rng = seeder.fork(static_cast<std::uint64_t>(t));
            const double pi = pi_nd(th, x_emp);
            const double a_nd = ace_nd(th, x_emp);
            const double a_d = ace_d(th, x_emp, opt.ace_d_mc, rng);
            scalars(t, 0) = pi;
            scalars(t, 2) = a_nd;
            scalars(t, 3) = a_d;
            scalars(t, 1) = pi * a_nd + (1.0 - pi) * a_d;
            if (opt.curves) {
                for (int gi = 0; gi < n_ace_grid; ++gi)
                    ace_curve(t, gi) = ace_d_at(th, x_emp, grids.d_grid[gi]);
                for (int gi = 0; gi < n_dce_nd; ++gi)
                    dce_nd_curve(t, gi) = dce_nd(th, x_emp, grids.y_grid[gi]);
                int col = 0;
                for (double d : grids.dce_d_dgrid)
                    for (double y : grids.y_grid) dce_d_curve(t, col++) = dce_d(th, x_emp, y, d);
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int jobs = std::max(1, opt.jobs > 0 ? opt.jobs : static_cast<int>(hw));
    if (jobs == 1 || r < 2 * jobs) {
        eval_range(0, r);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (r + jobs - 1) / jobs;
        for (int w = 0; w < jobs; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(r, lo + chunk);
            if (lo < hi) pool.emplace_back([&eval_range, lo, hi]() { eval_range(lo, hi); });
        }
        for (auto& th : pool) th.join();
    }

    EstimandReport rep;
    rep.level = opt.level;
    rep.scalar_draws = scalars;
    rep.pi_nd = summarize_column("pi_nd", scalars.col(0), opt.level);
    rep.itt = summarize_column("itt", scalars.col(1), opt.level);
    rep.ace_nd = summarize_column("ace_nd", scalars.col(2), opt.level);
    rep.ace_d = summarize_column("ace_d", scalars.col(3), opt.level);
    if (latents != nullptr && !latents->empty()) {
        Eigen::VectorXd shares(latents->size());
        for (std::size_t s = 0; s < latents->size(); ++s) {
            double acc = 0.0;
            for (auto v : (*latents)[s].i_nd) acc += v;
            shares[static_cast<Eigen::Index>(s)] = acc / (*latents)[s].i_nd.size();
        }
        rep.pi_nd_indicator = summarize_column("pi_nd_indicator_share", shares, opt.level);
        rep.has_indicator = true;
    }
    if (opt.curves) {
        for (int gi = 0; gi < n_ace_grid; ++gi) {
            auto s = summarize_column("", ace_curve.col(gi), opt.level);
            rep.ace_d_curve.push_back({grids.d_grid[gi], 0.0, s.mean, s.hpd});
        }
        for (int gi = 0; gi < n_dce_nd; ++gi) {
            auto s = summarize_column("", dce_nd_curve.col(gi), opt.level);
            rep.dce_nd_curve.push_back({grids.y_grid[gi], 0.0, s.mean, s.hpd});
        }
        int col = 0;
        for (double d : grids.dce_d_dgrid)
            for (double y : grids.y_grid) {
                auto s = summarize_column("", dce_d_curve.col(col++), opt.level);
                rep.dce_d_curve.push_back({y, d, s.mean, s.hpd});
            }
    }
    return rep;
}

void EstimandReport::write_scalars_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "estimand,posterior_mean,hpd_lower,hpd_upper,level\n";
    const auto row = [&](const ScalarSummary& s) {
        out << s.name << ',' << fmt(s.mean) << ',' << fmt(s.hpd.lower) << ',' << fmt(s.hpd.upper)
            << ',' << fmt(level) << '\n';
    };
    row(pi_nd);
    row(itt);
    row(ace_nd);
    row(ace_d);
    if (has_indicator) row(pi_nd_indicator);
}

void EstimandReport::write_curves_csv(const std::string& dir) const {
    {
        std::ofstream out(dir + "/ace_d_curve.csv");
        if (!out) throw validation_error("cannot write ace_d_curve.csv under " + dir);
        out << "d,posterior_mean,hpd_lower,hpd_upper\n";
        for (const auto& p : ace_d_curve)
            out << fmt(p.at) << ',' << fmt(p.mean) << ',' << fmt(p.hpd.lower) << ','
                << fmt(p.hpd.upper) << '\n';
    }
    {
        std::ofstream out(dir + "/dce_nd_curve.csv");
        if (!out) throw validation_error("cannot write dce_nd_curve.csv under " + dir);
        out << "y,posterior_mean,hpd_lower,hpd_upper\n";
        for (const auto& p : dce_nd_curve)
            out << fmt(p.at) << ',' << fmt(p.mean) << ',' << fmt(p.hpd.lower) << ','
                << fmt(p.hpd.upper) << '\n';
    }
    {
        std::ofstream out(dir + "/dce_d_curve.csv");
        if (!out) throw validation_error("cannot write dce_d_curve.csv under " + dir);
        out << "y,d,posterior_mean,hpd_lower,hpd_upper\n";
        for (const auto& p : dce_d_curve)
            out << fmt(p.at) << ',' << fmt(p.at2) << ',' << fmt(p.mean) << ',' << fmt(p.hpd.lower)
                << ',' << fmt(p.hpd.upper) << '\n';
    }
}

StrataProfile characterize_strata(const std::vector<Chain>& chains, const Dataset& raw_ds) {
    struct Acc {
        double w = 0.0, x1 = 0.0, x1sq = 0.0, x2 = 0.0, x3 = 0.0;
        std::vector<double> hist;
    };
    const int n = raw_ds.n();
    const int n_bins = 20;
    double x1_lo = 0.0, x1_hi = 1.0;
    const bool have_x1 = raw_ds.n_covariates() >= 1;
    if (have_x1) {
        x1_lo = raw_ds.x().col(0).minCoeff();
        x1_hi = raw_ds.x().col(0).maxCoeff();
        if (x1_hi <= x1_lo) x1_hi = x1_lo + 1.0;
    }
    const double bin_w = (x1_hi - x1_lo) / n_bins;

    std::vector<std::string> names = {"never_discontinue", "discontinue_early",
                                      "discontinue_late"};
    std::vector<Acc> acc(3);
    for (auto& a : acc) a.hist.assign(n_bins, 0.0);

    int used = 0, skipped = 0;
    for (const auto& chain : chains) {
        for (const auto& snap : chain.latents) {
            std::vector<double> dvals;
            for (int i = 0; i < n; ++i)
                if (snap.i_nd[i] == 0) dvals.push_back(snap.d1[i]);
            double med = 0.0;
            const bool have_d = !dvals.empty();
            if (have_d) med = quantile_type7(dvals, 0.5);
            if (!have_d) ++skipped;
            ++used;
            for (int i = 0; i < n; ++i) {
                int cls;
                if (snap.i_nd[i] == 1) {
                    cls = 0;
                } else if (!have_d) {
                    continue;  // counted via snapshots_skipped
                } else {
                    cls = snap.d1[i] < med ? 1 : 2;
                }
                Acc& a = acc[cls];
                a.w += 1.0;
                if (have_x1) {
                    const double x1 = raw_ds.x()(i, 0);
                    a.x1 += x1;
                    a.x1sq += x1 * x1;
                    int b = static_cast<int>((x1 - x1_lo) / bin_w);
                    b = std::clamp(b, 0, n_bins - 1);
                    a.hist[b] += 1.0;
                }
                if (raw_ds.n_covariates() >= 2) a.x2 += raw_ds.x()(i, 1);
                if (raw_ds.n_covariates() >= 3) a.x3 += raw_ds.x()(i, 2);
            }
        }
    }

    StrataProfile prof;
    prof.snapshots_used = used;
    prof.snapshots_skipped = skipped;
    double total_w = 0.0;
    for (const auto& a : acc) total_w += a.w;
    for (int cf = 0; cf < 3; ++cf) {
        const Acc& a = acc[cf];
        if (a.w <= 0.0) continue;
        StrataClassSummary s;
        s.name = names[cf];
        s.weight = total_w > 0 ? a.w / total_w : 0.0;
        s.x1_mean = a.x1 / a.w;
        const double var = std::max(0.0, a.x1sq / a.w - s.x1_mean * s.x1_mean);
        s.x1_sd = std::sqrt(var);
        s.x2_share = a.x2 / a.w;
        s.x3_share = a.x3 / a.w;
        for (int b = 0; b <= n_bins; ++b) s.x1_hist_edges.push_back(x1_lo + b * bin_w);
        for (int b = 0; b < n_bins; ++b) s.x1_hist_density.push_back(a.hist[b] / (a.w * bin_w));
        prof.classes.push_back(std::move(s));
    }
    return prof;
}

void StrataProfile::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "class,weight,x1_mean,x1_sd,x2_share,x3_share\n";
    for (const auto& c : classes)
        out << c.name << ',' << fmt(c.weight) << ',' << fmt(c.x1_mean) << ',' << fmt(c.x1_sd)
            << ',' << fmt(c.x2_share) << ',' << fmt(c.x3_share) << '\n';
    out << "\nclass,bin_lo,bin_hi,density\n";
    for (const auto& c : classes)
        for (std::size_t b = 0; b + 1 < c.x1_hist_edges.size(); ++b)
            out << c.name << ',' << fmt(c.x1_hist_edges[b]) << ',' << fmt(c.x1_hist_edges[b + 1])
                << ',' << fmt(c.x1_hist_density[b]) << '\n';
}

}  // namespace psdisc
