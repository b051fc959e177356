#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "psdisc/dataset.hpp"
#include "psdisc/likelihood.hpp"
#include "psdisc/rng.hpp"

namespace psdisc {

struct SamplerConfig {
    int iters = 30000;
    int burnin = 10000;
    int thin = 10;
    int chains = 4;
    double target_accept = 0.44;
    int adapt_window = 50;
    double init_scale = 0.25;
    std::uint64_t seed = 1;
    bool store_latents = true;
    int latent_every = 0;               // 0 = auto (about 500 snapshots)
    std::vector<double> latent_d_grid;  // validation hook: restrict control-arm
                                        // discontinuation proposals to a grid
    int jobs = 0;                       // worker pool bound for multi-chain runs
    void validate() const;
};

struct LatentSnapshot {
    int draw_index = 0;
    std::vector<std::uint8_t> i_nd;
    Eigen::VectorXd d1;
};

struct Chain {
    Eigen::MatrixXd draws;  // retained draws x parameters
    std::vector<std::string> param_names;
    Eigen::VectorXd logpost;         // complete-data log posterior per draw
    Eigen::VectorXd accept_rate;     // per coordinate, post-burnin
    Eigen::VectorXd proposal_scale;  // frozen scales after adaptation
    std::vector<LatentSnapshot> latents;
    SamplerConfig config;
    std::uint64_t seed = 0;
    int n_retained() const { return static_cast<int>(draws.rows()); }
};

// How each unit's latents are constrained by its observed profile.
enum class LatentRole : std::uint8_t {
    PinnedND,     // treated, event observed, no discontinuation
    PinnedD,      // treated, discontinuation observed (d1 = observation)
    FreeTreated,  // treated, censored on both endpoints
    Control,
};

std::vector<LatentRole> latent_roles(const Dataset& ds);

// Metropolis-within-Gibbs engine over the complete-data posterior. Holds the
// packed per-group arrays that make block updates cheap; one engine = one
// chain's state.
class GibbsEngine {
public:
    GibbsEngine(const Dataset& ds, PriorConfig prior, SamplerConfig cfg);

    void set_theta(const ParamVector& theta);
    void set_latents(const LatentState& lat);
    const ParamVector& theta() const { return theta_; }
    const LatentState& latents() const { return lat_; }

    // Profile-frequency / method-of-moments starting values plus consistent
    // latents; throws numeric_error when the starting log posterior is not
    // finite.
    void initialize(Rng& rng);

    void augment_treated(Rng& rng);
    void augment_control(Rng& rng);
    void update_parameters(Rng& rng, bool adapt);

    double complete_loglik();  // data part only
    double logpost();          // + log prior

    int n_coords() const { return static_cast<int>(scales_.size()); }
    const Eigen::VectorXd& scales() const { return scales_; }
    void set_scales(const Eigen::VectorXd& s);
    Eigen::VectorXd acceptance_rates() const;  // since last reset
    void reset_acceptance_counters();

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    ParamVector theta_;
    LatentState lat_;
    Eigen::VectorXd scales_;
};

// One-shot functional forms of the three sweep stages (test surface; run_chain
// composes the engine directly).
LatentState augment_treated(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                            Rng& rng);
LatentState augment_control(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                            Rng& rng, const std::vector<double>& d_grid = {});
ParamVector update_parameters(const ParamVector& theta, const Dataset& ds, const LatentState& lat,
                              Rng& rng, const Eigen::VectorXd& scales,
                              const PriorConfig& prior = {});

Chain run_chain(const Dataset& ds, const PriorConfig& prior, const SamplerConfig& cfg,
                std::uint64_t chain_seed);

// cfg.chains chains with forked seeds, at most cfg.jobs (default: hardware)
// running concurrently; chains are merged by index so results are
// deterministic.
std::vector<Chain> run_chains(const Dataset& ds, const PriorConfig& prior,
                              const SamplerConfig& cfg);

// Pooled retained draws of several chains, stacked chain-by-chain.
Eigen::MatrixXd pooled_draws(const std::vector<Chain>& chains);

// Max over parameters of |mean(first half) - mean(second half)| / pooled sd;
// a cheap stability diagnostic logged per fit.
double split_chain_statistic(const Eigen::MatrixXd& draws);

}  // namespace psdisc
