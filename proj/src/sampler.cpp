#include "psdisc/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "psdisc/distributions.hpp"
#include "psdisc/errors.hpp"

namespace psdisc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double w_logpdf(double ly, double shape, double lp) {
    return std::log(shape) + (shape - 1.0) * ly + lp - std::exp(lp + shape * ly);
}

double w_logsurv(double ly, double shape, double lp) { return -std::exp(lp + shape * ly); }

// Packed per-group arrays; all sized to the group's current membership.
struct YGroup {
    std::vector<int> idx;
    Eigen::ArrayXd ly;   // log observed time (log y if event, log c if censored)
    Eigen::ArrayXd ev;   // event indicator as double
    Eigen::ArrayXd ld;   // log truncation / discontinuation time (B and E only)
    Eigen::ArrayXd xey;  // gathered x'eta_y
    Eigen::MatrixXd x;   // gathered covariate rows
    void reserve_rows(int m, int k, bool with_ld) {
        ly.resize(m);
        ev.resize(m);
        if (with_ld) ld.resize(m);
        xey.resize(m);
        x.resize(m, k);
    }
};

struct DGroup {
    std::vector<int> idx;
    Eigen::ArrayXd ld;   // log d for density rows, log c for survival rows
    Eigen::ArrayXd pdf;  // 1 density row, 0 survival row
    Eigen::ArrayXd xed;
    Eigen::MatrixXd x;
};

double y_group_loglik(double shape, const Eigen::ArrayXd& lp, const YGroup& g) {
    if (g.ly.size() == 0) return 0.0;
    const double t1 = (g.ev * (std::log(shape) + lp + (shape - 1.0) * g.ly)).sum();
    const double t2 = (lp + shape * g.ly).exp().sum();
    return t1 - t2;
}

double y_group_trunc_loglik(double shape, const Eigen::ArrayXd& lp, const YGroup& g) {
    if (g.ly.size() == 0) return 0.0;
    const double t1 = (g.ev * (std::log(shape) + lp + (shape - 1.0) * g.ly)).sum();
    const double t2 = (lp + shape * g.ly).exp().sum();
    const double t3 = (lp + shape * g.ld).exp().sum();
    return t1 - t2 + t3;
}

double d_group_loglik(double shape, const Eigen::ArrayXd& lp, const DGroup& g) {
    if (g.ld.size() == 0) return 0.0;
    const double t1 = (g.pdf * (std::log(shape) + lp + (shape - 1.0) * g.ld)).sum();
    const double t2 = (lp + shape * g.ld).exp().sum();
    return t1 - t2;
}

double log_expit_sum(const Eigen::ArrayXd& t) {
    if (t.size() == 0) return 0.0;
    return (t.min(0.0) - (-t.abs()).exp().unaryExpr([](double v) { return std::log1p(v); })).sum();
}

enum class CoordKind { MembIntercept, MembCoeff, Shape, Intercept, Coeff, Delta };
enum class Block { Memb, Disc, Nd1, D1, Nd0, D0, EtaY, DeltaB };

struct CoordSpec {
    CoordKind kind;
    Block block;
    int cov = -1;  // coefficient column
};

}  // namespace

void SamplerConfig::validate() const {
    if (iters <= 0 || burnin < 0 || burnin >= iters)
        throw validation_error("SamplerConfig: need 0 <= burnin < iters");
    if (thin <= 0) throw validation_error("SamplerConfig: thin must be positive");
    if (chains <= 0) throw validation_error("SamplerConfig: chains must be positive");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw validation_error("SamplerConfig: target_accept in (0,1)");
    if (adapt_window <= 0) throw validation_error("SamplerConfig: adapt_window must be positive");
    if (!(init_scale > 0.0)) throw validation_error("SamplerConfig: init_scale must be positive");
    for (double d : latent_d_grid)
        if (!(d > 0.0)) throw validation_error("SamplerConfig: latent_d_grid values must be > 0");
}

std::vector<LatentRole> latent_roles(const Dataset& ds) {
    std::vector<LatentRole> roles(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.z()[i] == 0) {
            roles[i] = LatentRole::Control;
        } else if (ds.disc()[i] == 1) {
            roles[i] = LatentRole::PinnedD;
        } else if (ds.event()[i] == 1) {
            roles[i] = LatentRole::PinnedND;
        } else {
            roles[i] = LatentRole::FreeTreated;
        }
    }
    return roles;
}

struct GibbsEngine::Impl {
    Dataset ds;
    PriorConfig prior;
    SamplerConfig cfg;
    int n = 0;
    int k = 0;
    std::vector<LatentRole> roles;

    // Per-unit data arrays.
    Eigen::ArrayXd ly_obs;   // log y_tilde if event else log c
    Eigen::ArrayXd lc;       // log c
    Eigen::ArrayXd ld_obs;   // log d_tilde for pinned-D units (NaN otherwise)
    Eigen::ArrayXd ev;

    // Per-unit parameter caches.
    Eigen::ArrayXd lpm;   // gamma0 + x'gamma
    Eigen::ArrayXd xed;   // x'eta_d
    Eigen::ArrayXd xey;   // x'eta_y

    // Latent-dependent packs.
    Eigen::ArrayXd sign;  // +1 ND, -1 D
    YGroup ga, gb, gd0, ge;
    DGroup gdl;
    bool packs_dirty = true;

    std::vector<CoordSpec> coords;
    Eigen::VectorXd window_accepts;
    Eigen::VectorXd total_accepts;
    double total_rounds = 0.0;
    int window_pos = 0;
    int adapt_round = 0;

    void rebuild_unit_caches(const ParamVector& th) {
        const Eigen::VectorXd lpm_v =
            (ds.x() * th.gamma).array() + th.gamma0;
        lpm = lpm_v.array();
        xed = (ds.x() * th.eta_d).array();
        xey = (ds.x() * th.eta_y).array();
    }

    void repack(const LatentState& lat) {
        sign.resize(n);
        ga.idx.clear();
        gb.idx.clear();
        gd0.idx.clear();
        ge.idx.clear();
        gdl.idx.clear();
        std::vector<int> gdl_pdf;
        std::vector<double> gdl_ld;
        for (int i = 0; i < n; ++i) {
            sign[i] = lat.i_nd[i] ? 1.0 : -1.0;
            if (ds.z()[i] == 1) {
                if (lat.i_nd[i] == 1) {
                    ga.idx.push_back(i);
                } else if (ds.disc()[i] == 1) {
                    gb.idx.push_back(i);
                    gdl.idx.push_back(i);
                    gdl_pdf.push_back(1);
                    gdl_ld.push_back(ld_obs[i]);
                } else {
                    // censored treated unit currently imputed D: only the
                    // survival of the discontinuation time at C enters.
                    gdl.idx.push_back(i);
                    gdl_pdf.push_back(0);
                    gdl_ld.push_back(lc[i]);
                }
            } else {
                if (lat.i_nd[i] == 1) {
                    gd0.idx.push_back(i);
                } else {
                    ge.idx.push_back(i);
                    gdl.idx.push_back(i);
                    gdl_pdf.push_back(1);
                    gdl_ld.push_back(std::log(lat.d1[i]));
                }
            }
        }
        auto fill_y = [&](YGroup& g, bool with_ld, const LatentState* latp) {
            const int m = static_cast<int>(g.idx.size());
            g.reserve_rows(m, k, with_ld);
            for (int r = 0; r < m; ++r) {
                const int i = g.idx[r];
                g.ly[r] = ly_obs[i];
                g.ev[r] = ev[i];
                g.xey[r] = xey[i];
                g.x.row(r) = ds.x().row(i);
                if (with_ld)
                    g.ld[r] = latp ? std::log((*latp).d1[i]) : ld_obs[i];
            }
        };
        fill_y(ga, false, nullptr);
        fill_y(gb, true, nullptr);   // ld from the observed discontinuation
        fill_y(gd0, false, nullptr);
        fill_y(ge, true, &lat);      // ld from the latent draw
        const int md = static_cast<int>(gdl.idx.size());
        gdl.ld.resize(md);
        gdl.pdf.resize(md);
        gdl.xed.resize(md);
        gdl.x.resize(md, k);
        for (int r = 0; r < md; ++r) {
            const int i = gdl.idx[r];
            gdl.ld[r] = gdl_ld[r];
            gdl.pdf[r] = gdl_pdf[r];
            gdl.xed[r] = xed[i];
            gdl.x.row(r) = ds.x().row(i);
        }
        packs_dirty = false;
    }

    double memb_loglik(const Eigen::ArrayXd& lpm_eval) const {
        return log_expit_sum(sign * lpm_eval);
    }

    double block_loglik(Block b, const ParamVector& th) const {
        switch (b) {
            case Block::Memb:
                return memb_loglik(lpm);
            case Block::Disc:
                return d_group_loglik(th.alpha_d, th.beta_d + gdl.xed, gdl);
            case Block::Nd1:
                return y_group_loglik(th.alpha_nd1, th.beta_nd1 + ga.xey, ga);
            case Block::D1:
                return y_group_trunc_loglik(th.alpha_d1,
                                            th.beta_d1 + gb.xey + th.delta * gb.ld, gb);
            case Block::Nd0:
                return y_group_loglik(th.alpha_nd0, th.beta_nd0 + gd0.xey, gd0);
            case Block::D0:
                return y_group_loglik(th.alpha_d0, th.beta_d0 + ge.xey + th.delta * ge.ld, ge);
            case Block::EtaY:
                return block_loglik(Block::Nd1, th) + block_loglik(Block::D1, th) +
                       block_loglik(Block::Nd0, th) + block_loglik(Block::D0, th);
            case Block::DeltaB:
                return block_loglik(Block::D1, th) + block_loglik(Block::D0, th);
        }
        return 0.0;
    }
};

GibbsEngine::GibbsEngine(const Dataset& ds, PriorConfig prior, SamplerConfig cfg)
    : impl_(std::make_shared<Impl>()) {
    cfg.validate();
    Impl& im = *impl_;
    im.ds = ds;
    im.prior = prior;
    im.cfg = cfg;
    im.n = ds.n();
    im.k = ds.n_covariates();
    im.roles = latent_roles(ds);
    im.ly_obs.resize(im.n);
    im.lc.resize(im.n);
    im.ld_obs.resize(im.n);
    im.ev.resize(im.n);
    for (int i = 0; i < im.n; ++i) {
        im.ev[i] = ds.event()[i];
        im.lc[i] = std::log(ds.c()[i]);
        im.ly_obs[i] = ds.event()[i] == 1 ? std::log(ds.y_tilde()[i]) : im.lc[i];
        im.ld_obs[i] = ds.disc()[i] == 1 ? std::log(ds.d_tilde()[i]) : kNaN;
    }

    const int k = im.k;
    im.coords.push_back({CoordKind::MembIntercept, Block::Memb});
    for (int j = 0; j < k; ++j) im.coords.push_back({CoordKind::MembCoeff, Block::Memb, j});
    im.coords.push_back({CoordKind::Shape, Block::Disc});
    im.coords.push_back({CoordKind::Intercept, Block::Disc});
    for (int j = 0; j < k; ++j) im.coords.push_back({CoordKind::Coeff, Block::Disc, j});
    im.coords.push_back({CoordKind::Shape, Block::Nd1});
    im.coords.push_back({CoordKind::Intercept, Block::Nd1});
    im.coords.push_back({CoordKind::Shape, Block::D1});
    im.coords.push_back({CoordKind::Intercept, Block::D1});
    im.coords.push_back({CoordKind::Shape, Block::Nd0});
    im.coords.push_back({CoordKind::Intercept, Block::Nd0});
    im.coords.push_back({CoordKind::Shape, Block::D0});
    im.coords.push_back({CoordKind::Intercept, Block::D0});
    for (int j = 0; j < k; ++j) im.coords.push_back({CoordKind::Coeff, Block::EtaY, j});
    im.coords.push_back({CoordKind::Delta, Block::DeltaB});

    const int nc = static_cast<int>(im.coords.size());
    scales_ = Eigen::VectorXd::Constant(nc, cfg.init_scale);
    im.window_accepts = Eigen::VectorXd::Zero(nc);
    im.total_accepts = Eigen::VectorXd::Zero(nc);

    theta_ = ParamVector::zeros(k);
    theta_.gamma = Eigen::VectorXd::Zero(k);
    lat_.i_nd.assign(im.n, 1);
    lat_.d1 = Eigen::VectorXd::Constant(im.n, LatentState::undefined());
    im.rebuild_unit_caches(theta_);
    im.packs_dirty = true;
}

void GibbsEngine::set_theta(const ParamVector& theta) {
    if (theta.n_covariates() != impl_->k)
        throw validation_error("set_theta: covariate dimension mismatch");
    if (!theta.shapes_positive()) throw validation_error("set_theta: shapes must be positive");
    theta_ = theta;
    impl_->rebuild_unit_caches(theta_);
}

void GibbsEngine::set_latents(const LatentState& lat) {
    Impl& im = *impl_;
    if (static_cast<int>(lat.i_nd.size()) != im.n || lat.d1.size() != im.n)
        throw validation_error("set_latents: size mismatch");
    if (!lat.consistent()) throw validation_error("set_latents: inconsistent latent state");
    for (int i = 0; i < im.n; ++i) {
        if (im.roles[i] == LatentRole::PinnedND && lat.i_nd[i] != 1)
            throw validation_error("set_latents: unit " + std::to_string(i) + " is pinned ND");
        if (im.roles[i] == LatentRole::PinnedD &&
            (lat.i_nd[i] != 0 || lat.d1[i] != im.ds.d_tilde()[i]))
            throw validation_error("set_latents: unit " + std::to_string(i) +
                                   " is pinned to its observed discontinuation");
        if (im.roles[i] == LatentRole::FreeTreated && lat.i_nd[i] == 0 &&
            !(lat.d1[i] > im.ds.c()[i]))
            throw validation_error("set_latents: censored treated D unit needs d1 > c");
    }
    lat_ = lat;
    im.packs_dirty = true;
}

void GibbsEngine::set_scales(const Eigen::VectorXd& s) {
    if (s.size() != scales_.size()) throw validation_error("set_scales: size mismatch");
    scales_ = s;
}

Eigen::VectorXd GibbsEngine::acceptance_rates() const {
    const Impl& im = *impl_;
    if (im.total_rounds <= 0.0) return Eigen::VectorXd::Zero(im.total_accepts.size());
    return im.total_accepts / im.total_rounds;
}

void GibbsEngine::reset_acceptance_counters() {
    impl_->total_accepts.setZero();
    impl_->total_rounds = 0.0;
}

void GibbsEngine::initialize(Rng& rng) {
    Impl& im = *impl_;
    const Dataset& ds = im.ds;
    const int k = im.k;

    int n_disc = 0, n_ev_nodisc = 0;
    std::vector<double> disc_times;
    std::vector<double> y_treated, y_control;
    for (int i = 0; i < im.n; ++i) {
        if (ds.z()[i] == 1) {
            y_treated.push_back(ds.y_tilde()[i]);
            if (ds.disc()[i] == 1) {
                ++n_disc;
                disc_times.push_back(ds.d_tilde()[i]);
            } else if (ds.event()[i] == 1) {
                ++n_ev_nodisc;
            }
        } else {
            y_control.push_back(ds.y_tilde()[i]);
        }
    }

    ParamVector th = ParamVector::zeros(k);
    const double p_hat =
        std::clamp((n_ev_nodisc + 0.5) / (n_ev_nodisc + n_disc + 1.0), 0.05, 0.95);
    th.gamma0 = std::log(p_hat / (1.0 - p_hat));

    auto mom_weibull = [](const std::vector<double>& v, double inflate, double& shape,
                          double& intercept) {
        shape = 1.0;
        double mean = 3.0;
        if (v.size() >= 3) {
            double m = 0.0, mlog = 0.0;
            for (double t : v) {
                m += t;
                mlog += std::log(t);
            }
            m /= v.size();
            mlog /= v.size();
            double ss = 0.0;
            for (double t : v) ss += (std::log(t) - mlog) * (std::log(t) - mlog);
            const double sd_log = std::sqrt(ss / std::max<std::size_t>(1, v.size() - 1));
            if (sd_log > 1e-6) shape = std::clamp(M_PI / (sd_log * std::sqrt(6.0)), 0.3, 8.0);
            mean = m * inflate;
        } else if (!v.empty()) {
            mean = std::max(0.5, v[0] * inflate);
        }
        intercept = shape * (std::lgamma(1.0 + 1.0 / shape) - std::log(mean));
    };

    mom_weibull(disc_times, 1.0, th.alpha_d, th.beta_d);
    double sh, ic;
    mom_weibull(y_treated, 1.2, sh, ic);
    th.alpha_nd1 = sh;
    th.beta_nd1 = ic;
    th.alpha_d1 = sh;
    th.beta_d1 = ic;
    mom_weibull(y_control, 1.2, sh, ic);
    th.alpha_nd0 = sh;
    th.beta_nd0 = ic;
    th.alpha_d0 = sh;
    th.beta_d0 = ic;
    set_theta(th);

    LatentState lat;
    lat.i_nd.assign(im.n, 1);
    lat.d1 = Eigen::VectorXd::Constant(im.n, LatentState::undefined());
    for (int i = 0; i < im.n; ++i) {
        switch (im.roles[i]) {
            case LatentRole::PinnedND:
                break;
            case LatentRole::PinnedD:
                lat.i_nd[i] = 0;
                lat.d1[i] = ds.d_tilde()[i];
                break;
            case LatentRole::FreeTreated:
                if (!rng.bernoulli(p_hat)) {
                    lat.i_nd[i] = 0;
                    lat.d1[i] = trunc_weibull_sample(
                        {{th.alpha_d, th.beta_d + im.xed[i]}, ds.c()[i]}, rng);
                }
                break;
            case LatentRole::Control:
                if (!rng.bernoulli(p_hat)) {
                    lat.i_nd[i] = 0;
                    if (!im.cfg.latent_d_grid.empty()) {
                        lat.d1[i] = im.cfg.latent_d_grid[static_cast<std::size_t>(
                            rng.uniform() * im.cfg.latent_d_grid.size())];
                    } else {
                        lat.d1[i] = weibull_sample({th.alpha_d, th.beta_d + im.xed[i]}, rng);
                    }
                }
                break;
        }
    }
    set_latents(lat);
    const double lp = logpost();
    if (!std::isfinite(lp))
        throw numeric_error(
            "non-finite log-posterior at initialization; supply different starting values");
}

void GibbsEngine::augment_treated(Rng& rng) {
    Impl& im = *impl_;
    for (int i = 0; i < im.n; ++i) {
        if (im.roles[i] != LatentRole::FreeTreated) continue;
        // Both endpoints censored: exact conditional draw of the membership.
        const double a_nd = log_expit(im.lpm[i]) +
                            w_logsurv(im.lc[i], theta_.alpha_nd1, theta_.beta_nd1 + im.xey[i]);
        const double a_d = log_expit(-im.lpm[i]) +
                           w_logsurv(im.lc[i], theta_.alpha_d, theta_.beta_d + im.xed[i]);
        const double gi = expit(a_nd - a_d);
        if (rng.bernoulli(gi)) {
            lat_.i_nd[i] = 1;
            lat_.d1[i] = LatentState::undefined();
        } else {
            lat_.i_nd[i] = 0;
            lat_.d1[i] = trunc_weibull_sample(
                {{theta_.alpha_d, theta_.beta_d + im.xed[i]}, im.ds.c()[i]}, rng);
        }
    }
    im.packs_dirty = true;
}

void GibbsEngine::augment_control(Rng& rng) {
    Impl& im = *impl_;
    const bool grid = !im.cfg.latent_d_grid.empty();
    for (int i = 0; i < im.n; ++i) {
        if (im.roles[i] != LatentRole::Control) continue;
        const double lgp = log_expit(im.lpm[i]);
        const double lg1mp = log_expit(-im.lpm[i]);
        const double lp_d = theta_.beta_d + im.xed[i];

        const auto y0_term = [&](int i_nd, double d1) {
            if (i_nd == 1)
                return im.ev[i] == 1.0
                           ? w_logpdf(im.ly_obs[i], theta_.alpha_nd0, theta_.beta_nd0 + im.xey[i])
                           : w_logsurv(im.lc[i], theta_.alpha_nd0, theta_.beta_nd0 + im.xey[i]);
            const double lp0 = theta_.beta_d0 + im.xey[i] + theta_.delta * std::log(d1);
            return im.ev[i] == 1.0 ? w_logpdf(im.ly_obs[i], theta_.alpha_d0, lp0)
                                   : w_logsurv(im.lc[i], theta_.alpha_d0, lp0);
        };
        const auto unit_term = [&](int i_nd, double d1) {
            if (i_nd == 1) return lgp + y0_term(1, 0.0);
            return lg1mp + w_logpdf(std::log(d1), theta_.alpha_d, lp_d) + y0_term(0, d1);
        };
        const auto lfd = [&](double d) { return w_logpdf(std::log(d), theta_.alpha_d, lp_d); };

        // Independence-style proposal from the membership model and the
        // discontinuation-time model at the current parameters.
        const int i_nd_new = rng.bernoulli(expit(im.lpm[i])) ? 1 : 0;
        double d_new = kNaN;
        if (i_nd_new == 0) {
            if (grid) {
                const auto& gv = im.cfg.latent_d_grid;
                std::vector<double> w(gv.size());
                double m = kNegInf;
                for (std::size_t jj = 0; jj < gv.size(); ++jj) {
                    w[jj] = lfd(gv[jj]);
                    m = std::max(m, w[jj]);
                }
                double tot = 0.0;
                for (auto& wv : w) {
                    wv = std::exp(wv - m);
                    tot += wv;
                }
                double u = rng.uniform() * tot;
                std::size_t pick = 0;
                for (; pick + 1 < w.size(); ++pick) {
                    if (u < w[pick]) break;
                    u -= w[pick];
                }
                d_new = gv[pick];
            } else {
                d_new = weibull_sample({theta_.alpha_d, lp_d}, rng);
            }
        }

        const int i_nd_old = lat_.i_nd[i];
        const double d_old = lat_.d1[i];
        const double log_r = unit_term(i_nd_new, d_new) - unit_term(i_nd_old, d_old);
        double log_rho;
        if (i_nd_new == 1 && i_nd_old == 1) {
            log_rho = 0.0;
        } else if (i_nd_new == 0 && i_nd_old == 1) {
            log_rho = lgp - lg1mp - lfd(d_new);
        } else if (i_nd_new == 1 && i_nd_old == 0) {
            log_rho = lg1mp + lfd(d_old) - lgp;
        } else {
            log_rho = lfd(d_old) - lfd(d_new);
        }
        const double log_acc = log_r + log_rho;
        const double lu = std::log(rng.uniform());
        if (!std::isnan(log_acc) && lu < log_acc) {
            lat_.i_nd[i] = static_cast<std::uint8_t>(i_nd_new);
            lat_.d1[i] = i_nd_new == 1 ? LatentState::undefined() : d_new;
        }
    }
    im.packs_dirty = true;
}

void GibbsEngine::update_parameters(Rng& rng, bool adapt) {
    Impl& im = *impl_;
    if (im.packs_dirty) im.repack(lat_);
    const PriorConfig& pr = im.prior;

    for (int j = 0; j < n_coords(); ++j) {
        const CoordSpec& cs = im.coords[j];
        const double step = scales_[j] * rng.normal();
        double delta_log = 0.0;
        bool representable = true;

        switch (cs.kind) {
            case CoordKind::MembIntercept: {
                const double v0 = theta_.gamma0;
                const double v1 = v0 + step;
                delta_log = log_expit_sum(im.sign * (im.lpm + step)) - im.memb_loglik(im.lpm) +
                            (v0 * v0 - v1 * v1) / (2.0 * pr.membership_var);
                if (std::log(rng.uniform()) < delta_log) {
                    theta_.gamma0 = v1;
                    im.lpm += step;
                    im.window_accepts[j] += 1.0;
                    im.total_accepts[j] += 1.0;
                }
                representable = false;
                break;
            }
            case CoordKind::MembCoeff: {
                const double v0 = theta_.gamma[cs.cov];
                const double v1 = v0 + step;
                const Eigen::ArrayXd shift = step * im.ds.x().col(cs.cov).array();
                delta_log = log_expit_sum(im.sign * (im.lpm + shift)) - im.memb_loglik(im.lpm) +
                            (v0 * v0 - v1 * v1) / (2.0 * pr.membership_var);
                if (std::log(rng.uniform()) < delta_log) {
                    theta_.gamma[cs.cov] = v1;
                    im.lpm += shift;
                    im.window_accepts[j] += 1.0;
                    im.total_accepts[j] += 1.0;
                }
                representable = false;
                break;
            }
            default:
                break;
        }
        if (!representable) continue;

        // Remaining kinds share the pattern: evaluate the affected block at the
        // proposal, with a prior increment that depends on the coordinate type.
        ParamVector cand = theta_;
        double prior_delta = 0.0;
        Eigen::ArrayXd* cache = nullptr;        // per-unit cache to shift on accept
        Eigen::ArrayXd cache_shift;
        Eigen::ArrayXd* gathered = nullptr;     // matching packed array
        Eigen::ArrayXd gathered_shift;

        auto shape_ref = [](ParamVector& t, Block b) -> double& {
            switch (b) {
                case Block::Disc: return t.alpha_d;
                case Block::Nd1: return t.alpha_nd1;
                case Block::D1: return t.alpha_d1;
                case Block::Nd0: return t.alpha_nd0;
                case Block::D0: return t.alpha_d0;
                default: throw validation_error("shape_ref: bad block");
            }
        };
        auto intercept_ref = [](ParamVector& t, Block b) -> double& {
            switch (b) {
                case Block::Disc: return t.beta_d;
                case Block::Nd1: return t.beta_nd1;
                case Block::D1: return t.beta_d1;
                case Block::Nd0: return t.beta_nd0;
                case Block::D0: return t.beta_d0;
                default: throw validation_error("intercept_ref: bad block");
            }
        };

        switch (cs.kind) {
            case CoordKind::Shape: {
                double& sref = shape_ref(cand, cs.block);
                const double a0 = sref;
                const double a1 = a0 * std::exp(step);
                sref = a1;
                // Gamma prior plus the log-scale Jacobian.
                prior_delta = pr.gamma_shape * (std::log(a1) - std::log(a0)) -
                              pr.gamma_rate * (a1 - a0);
                break;
            }
            case CoordKind::Intercept: {
                double& iref = intercept_ref(cand, cs.block);
                const double v0 = iref;
                const double v1 = v0 + step;
                iref = v1;
                prior_delta = (v0 * v0 - v1 * v1) / (2.0 * pr.intercept_var);
                break;
            }
            case CoordKind::Coeff: {
                if (cs.block == Block::Disc) {
                    const double v0 = cand.eta_d[cs.cov];
                    cand.eta_d[cs.cov] = v0 + step;
                    prior_delta = (v0 * v0 - (v0 + step) * (v0 + step)) / (2.0 * pr.coeff_var);
                    cache = &im.xed;
                    cache_shift = step * im.ds.x().col(cs.cov).array();
                    gathered = &im.gdl.xed;
                    gathered_shift = step * im.gdl.x.col(cs.cov).array();
                } else {
                    const double v0 = cand.eta_y[cs.cov];
                    cand.eta_y[cs.cov] = v0 + step;
                    prior_delta = (v0 * v0 - (v0 + step) * (v0 + step)) / (2.0 * pr.coeff_var);
                    cache = &im.xey;
                    cache_shift = step * im.ds.x().col(cs.cov).array();
                }
                break;
            }
            case CoordKind::Delta: {
                const double v0 = cand.delta;
                cand.delta = v0 + step;
                prior_delta = (v0 * v0 - (v0 + step) * (v0 + step)) / (2.0 * pr.delta_var);
                break;
            }
            default:
                break;
        }

        double loglik_new, loglik_old;
        if (cs.kind == CoordKind::Coeff && cs.block == Block::EtaY) {
            // eta_y touches the four outcome groups; shift each gathered array.
            auto shifted = [&](const YGroup& g) {
                return Eigen::ArrayXd(g.xey + step * g.x.col(cs.cov).array());
            };
            const Eigen::ArrayXd xa = shifted(im.ga), xb = shifted(im.gb), xd = shifted(im.gd0),
                                 xe = shifted(im.ge);
            loglik_new =
                y_group_loglik(cand.alpha_nd1, cand.beta_nd1 + xa, im.ga) +
                y_group_trunc_loglik(cand.alpha_d1, cand.beta_d1 + xb + cand.delta * im.gb.ld,
                                     im.gb) +
                y_group_loglik(cand.alpha_nd0, cand.beta_nd0 + xd, im.gd0) +
                y_group_loglik(cand.alpha_d0, cand.beta_d0 + xe + cand.delta * im.ge.ld, im.ge);
            loglik_old = im.block_loglik(Block::EtaY, theta_);
        } else {
            loglik_new = [&]() {
                if (cs.kind == CoordKind::Coeff && cs.block == Block::Disc) {
                    const Eigen::ArrayXd xd = im.gdl.xed + gathered_shift;
                    return d_group_loglik(cand.alpha_d, cand.beta_d + xd, im.gdl);
                }
                return im.block_loglik(cs.block, cand);
            }();
            loglik_old = im.block_loglik(cs.block, theta_);
        }

        delta_log = loglik_new - loglik_old + prior_delta;
        const double lu = std::log(rng.uniform());
        if (!std::isnan(delta_log) && lu < delta_log) {
            theta_ = cand;
            if (cache != nullptr) {
                *cache += cache_shift;
                if (gathered != nullptr) *gathered += gathered_shift;
                if (cs.kind == CoordKind::Coeff && cs.block == Block::EtaY) {
                    im.ga.xey += step * im.ga.x.col(cs.cov).array();
                    im.gb.xey += step * im.gb.x.col(cs.cov).array();
                    im.gd0.xey += step * im.gd0.x.col(cs.cov).array();
                    im.ge.xey += step * im.ge.x.col(cs.cov).array();
                }
            }
            im.window_accepts[j] += 1.0;
            im.total_accepts[j] += 1.0;
        }
    }

    im.total_rounds += 1.0;
    ++im.window_pos;
    if (adapt && im.window_pos >= im.cfg.adapt_window) {
        ++im.adapt_round;
        const double gain = std::min(1.0, 2.0 / std::sqrt(static_cast<double>(im.adapt_round)));
        for (int j = 0; j < n_coords(); ++j) {
            const double rate = im.window_accepts[j] / im.window_pos;
            scales_[j] *= std::exp(gain * (rate - im.cfg.target_accept));
            scales_[j] = std::clamp(scales_[j], 1e-5, 1e4);
        }
        im.window_accepts.setZero();
        im.window_pos = 0;
    } else if (!adapt && im.window_pos >= im.cfg.adapt_window) {
        im.window_accepts.setZero();
        im.window_pos = 0;
    }
}

double GibbsEngine::complete_loglik() {
    Impl& im = *impl_;
    if (im.packs_dirty) im.repack(lat_);
    return im.memb_loglik(im.lpm) + im.block_loglik(Block::Disc, theta_) +
           im.block_loglik(Block::EtaY, theta_);
}

double GibbsEngine::logpost() { return complete_loglik() + log_prior(theta_, impl_->prior); }

LatentState augment_treated(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                            Rng& rng) {
    GibbsEngine eng(ds, PriorConfig{}, SamplerConfig{});
    eng.set_theta(theta);
    eng.set_latents(lat);
    eng.augment_treated(rng);
    return eng.latents();
}

LatentState augment_control(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                            Rng& rng, const std::vector<double>& d_grid) {
    SamplerConfig cfg;
    cfg.latent_d_grid = d_grid;
    GibbsEngine eng(ds, PriorConfig{}, cfg);
    eng.set_theta(theta);
    eng.set_latents(lat);
    eng.augment_control(rng);
    return eng.latents();
}

ParamVector update_parameters(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                              Rng& rng, const Eigen::VectorXd& scales, const PriorConfig& prior) {
    GibbsEngine eng(ds, prior, SamplerConfig{});
    eng.set_theta(theta);
    eng.set_latents(lat);
    eng.set_scales(scales);
    eng.update_parameters(rng, false);
    return eng.theta();
}

Chain run_chain(const Dataset& ds, const PriorConfig& prior, const SamplerConfig& cfg,
                std::uint64_t chain_seed) {
    cfg.validate();
    GibbsEngine eng(ds, prior, cfg);
    Rng rng(chain_seed);
    eng.initialize(rng);

    const int retained = (cfg.iters - cfg.burnin) / cfg.thin;
    const int latent_every =
        cfg.latent_every > 0 ? cfg.latent_every : std::max(1, retained / 500);
    Chain chain;
    chain.config = cfg;
    chain.seed = chain_seed;
    chain.param_names = ParamVector::names(ds.covariate_names());
    chain.draws.resize(retained, eng.theta().size());
    chain.logpost.resize(retained);

    int r = 0;
    for (int t = 1; t <= cfg.iters; ++t) {
        eng.augment_treated(rng);
        eng.augment_control(rng);
        eng.update_parameters(rng, t <= cfg.burnin);
        if (t == cfg.burnin) eng.reset_acceptance_counters();
        if (t > cfg.burnin && (t - cfg.burnin) % cfg.thin == 0 && r < retained) {
            chain.draws.row(r) = eng.theta().to_flat();
            chain.logpost[r] = eng.logpost();
            if (cfg.store_latents && r % latent_every == 0) {
                chain.latents.push_back({r, eng.latents().i_nd, eng.latents().d1});
            }
            ++r;
        }
    }
    chain.accept_rate = eng.acceptance_rates();
    chain.proposal_scale = eng.scales();
    return chain;
}

std::vector<Chain> run_chains(const Dataset& ds, const PriorConfig& prior,
                              const SamplerConfig& cfg) {
    cfg.validate();
    Rng seeder(cfg.seed);
    std::vector<std::uint64_t> seeds;
    for (int c = 0; c < cfg.chains; ++c) seeds.push_back(seeder.fork(1000 + c).seed());

    std::vector<Chain> chains(cfg.chains);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int jobs = cfg.jobs > 0 ? cfg.jobs : static_cast<int>(hw);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(cfg.chains);
    const int workers = std::min(jobs, cfg.chains);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const int c = next.fetch_add(1);
                if (c >= cfg.chains) return;
                try {
                    chains[c] = run_chain(ds, prior, cfg, seeds[c]);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return chains;
}

Eigen::MatrixXd pooled_draws(const std::vector<Chain>& chains) {
    if (chains.empty()) throw validation_error("pooled_draws: no chains");
    int rows = 0;
    for (const auto& c : chains) rows += c.n_retained();
    Eigen::MatrixXd out(rows, chains.front().draws.cols());
    int at = 0;
    for (const auto& c : chains) {
        out.middleRows(at, c.n_retained()) = c.draws;
        at += c.n_retained();
    }
    return out;
}

double split_chain_statistic(const Eigen::MatrixXd& draws) {
    const int n = static_cast<int>(draws.rows());
    if (n < 4) return 0.0;
    const int half = n / 2;
    double worst = 0.0;
    for (int j = 0; j < draws.cols(); ++j) {
        const double m1 = draws.col(j).head(half).mean();
        const double m2 = draws.col(j).tail(n - half).mean();
        const double mu = draws.col(j).mean();
        const double sd = std::sqrt((draws.col(j).array() - mu).square().sum() / (n - 1));
        if (sd > 1e-12) worst = std::max(worst, std::abs(m1 - m2) / sd);
    }
    return worst;
}

}  // namespace psdisc
