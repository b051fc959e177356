#include "psdisc/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "psdisc/errors.hpp"

namespace psdisc {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json block_to_json(const OutcomeBlock& b) {
    return json{{"shape", b.shape},
                {"intercept", b.intercept},
                {"coeffs", std::vector<double>(b.coeffs.data(), b.coeffs.data() + b.coeffs.size())}};
}

json block_to_json(const DiscOutcomeBlock& b) {
    json j{{"shape", b.shape},
           {"intercept", b.intercept},
           {"coeffs", std::vector<double>(b.coeffs.data(), b.coeffs.data() + b.coeffs.size())},
           {"delta", b.delta}};
    return j;
}

Eigen::VectorXd vec_from_json(const json& j) {
    std::vector<double> v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

OutcomeBlock block_from_json(const json& j) {
    OutcomeBlock b;
    b.shape = j.at("shape");
    b.intercept = j.at("intercept");
    b.coeffs = vec_from_json(j.at("coeffs"));
    return b;
}

DiscOutcomeBlock disc_block_from_json(const json& j) {
    DiscOutcomeBlock b;
    b.shape = j.at("shape");
    b.intercept = j.at("intercept");
    b.coeffs = vec_from_json(j.at("coeffs"));
    b.delta = j.at("delta");
    return b;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw validation_error("malformed JSON in " + path + ": " + e.what());
    }
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

Eigen::VectorXd shared_eta_y() {
    Eigen::VectorXd v(3);
    v << 0.50, 0.45, 0.45;
    return v;
}

}  // namespace

ScenarioConfig default_scenario_config(Scenario s) {
    ScenarioConfig cfg;
    cfg.scenario = s;
    cfg.n = 335;
    cfg.n_treated = 181;
    cfg.enrollment_window = 23.0;
    cfg.cutoff = 33.0;
    cfg.seed = 1;
    cfg.covariates = CovariateModel{};

    cfg.membership.gamma0 = 0.75;
    cfg.membership.gamma = Eigen::VectorXd(3);
    cfg.membership.gamma << -1.30, 0.90, 0.90;

    cfg.disc.shape = 1.86;
    cfg.disc.intercept = -2.80;
    cfg.disc.coeffs = Eigen::VectorXd(3);
    cfg.disc.coeffs << 0.55, 0.15, 0.70;

    const Eigen::VectorXd eta_y = shared_eta_y();
    cfg.nd_arm1.shape = 1.15;
    cfg.nd_arm1.intercept = -2.775;
    cfg.nd_arm1.coeffs = eta_y;
    cfg.nd_arm0.shape = 1.15;
    cfg.nd_arm0.intercept = -1.945;
    cfg.nd_arm0.coeffs = eta_y;

    cfg.d_arm1.shape = 1.60;
    cfg.d_arm1.intercept = -2.50;
    cfg.d_arm1.coeffs = eta_y;
    cfg.d_arm1.delta = -0.15;
    cfg.d_arm0 = cfg.d_arm1;
    cfg.d_arm0.intercept = -2.40;

    if (s == Scenario::II) {
        cfg.disc.shape = 1.62;
        cfg.disc.intercept = -2.50;
        cfg.nd_arm1.intercept = -2.852;
        cfg.d_arm1.intercept = -3.10;
        cfg.d_arm0 = cfg.d_arm1;
    }
    return cfg;
}

CalibrationTargets default_targets(Scenario s) {
    CalibrationTargets t;
    if (s == Scenario::II) {
        t.ace_nd = 5.72;
        t.ace_d = 0.0;
        t.itt = 4.18;
        t.event_share = 0.9015;
        t.y_obs_mean = 5.51;
    }
    return t;
}

std::string scenario_config_json(const ScenarioConfig& cfg) {
    json j;
    j["scenario"] = cfg.scenario == Scenario::I ? "I" : "II";
    j["n"] = cfg.n;
    j["n_treated"] = cfg.n_treated;
    j["enrollment_window"] = cfg.enrollment_window;
    j["cutoff"] = cfg.cutoff;
    j["seed"] = cfg.seed;
    j["covariates"] = json{{"x1_mean", cfg.covariates.x1_mean},
                           {"x1_sd", cfg.covariates.x1_sd},
                           {"x1_min", cfg.covariates.x1_min},
                           {"x1_max", cfg.covariates.x1_max},
                           {"x2_rate", cfg.covariates.x2_rate},
                           {"x3_rate", cfg.covariates.x3_rate},
                           {"center", cfg.covariates.center},
                           {"scale", cfg.covariates.scale}};
    j["membership"] = json{{"gamma0", cfg.membership.gamma0},
                           {"gamma", std::vector<double>(cfg.membership.gamma.data(),
                                                         cfg.membership.gamma.data() +
                                                             cfg.membership.gamma.size())}};
    j["disc"] = block_to_json(cfg.disc);
    j["nd_arm1"] = block_to_json(cfg.nd_arm1);
    j["nd_arm0"] = block_to_json(cfg.nd_arm0);
    j["d_arm1"] = block_to_json(cfg.d_arm1);
    j["d_arm0"] = block_to_json(cfg.d_arm0);
    return j.dump(2);
}

void save_scenario_config(const ScenarioConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write config file: " + path);
    out << scenario_config_json(cfg) << '\n';
}

ScenarioConfig load_scenario_config(const std::string& path) {
    const json j = load_json(path);
    ScenarioConfig cfg;
    const std::string sc = j.at("scenario");
    if (sc == "I") {
        cfg.scenario = Scenario::I;
    } else if (sc == "II") {
        cfg.scenario = Scenario::II;
    } else {
        throw validation_error("scenario must be \"I\" or \"II\" in " + path);
    }
    cfg.n = j.at("n");
    cfg.n_treated = j.at("n_treated");
    cfg.enrollment_window = j.at("enrollment_window");
    cfg.cutoff = j.at("cutoff");
    cfg.seed = j.value("seed", 1);
    const json& cv = j.at("covariates");
    cfg.covariates.x1_mean = cv.at("x1_mean");
    cfg.covariates.x1_sd = cv.at("x1_sd");
    cfg.covariates.x1_min = cv.at("x1_min");
    cfg.covariates.x1_max = cv.at("x1_max");
    cfg.covariates.x2_rate = cv.at("x2_rate");
    cfg.covariates.x3_rate = cv.at("x3_rate");
    cfg.covariates.center = cv.at("center");
    cfg.covariates.scale = cv.at("scale");
    cfg.membership.gamma0 = j.at("membership").at("gamma0");
    cfg.membership.gamma = vec_from_json(j.at("membership").at("gamma"));
    cfg.disc = block_from_json(j.at("disc"));
    cfg.nd_arm1 = block_from_json(j.at("nd_arm1"));
    cfg.nd_arm0 = block_from_json(j.at("nd_arm0"));
    cfg.d_arm1 = disc_block_from_json(j.at("d_arm1"));
    cfg.d_arm0 = disc_block_from_json(j.at("d_arm0"));
    cfg.validate();
    return cfg;
}

PriorConfig load_prior_config(const std::string& path) {
    const json j = load_json(path);
    PriorConfig p;
    p.gamma_shape = j.value("gamma_shape", p.gamma_shape);
    p.gamma_rate = j.value("gamma_rate", p.gamma_rate);
    p.intercept_var = j.value("intercept_var", p.intercept_var);
    p.delta_var = j.value("delta_var", p.delta_var);
    p.coeff_var = j.value("coeff_var", p.coeff_var);
    p.membership_var = j.value("membership_var", p.membership_var);
    if (!(p.gamma_shape > 0) || !(p.gamma_rate > 0) || !(p.intercept_var > 0) ||
        !(p.delta_var > 0) || !(p.coeff_var > 0) || !(p.membership_var > 0))
        throw validation_error("prior hyperparameters must be positive in " + path);
    return p;
}

void save_prior_config(const PriorConfig& p, const std::string& path) {
    dump_json(json{{"gamma_shape", p.gamma_shape},
                   {"gamma_rate", p.gamma_rate},
                   {"intercept_var", p.intercept_var},
                   {"delta_var", p.delta_var},
                   {"coeff_var", p.coeff_var},
                   {"membership_var", p.membership_var}},
              path);
}

SamplerConfig load_sampler_config(const std::string& path) {
    const json j = load_json(path);
    SamplerConfig c;
    c.iters = j.value("iters", c.iters);
    c.burnin = j.value("burnin", c.burnin);
    c.thin = j.value("thin", c.thin);
    c.chains = j.value("chains", c.chains);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.adapt_window = j.value("adapt_window", c.adapt_window);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.seed = j.value("seed", c.seed);
    c.store_latents = j.value("store_latents", c.store_latents);
    c.latent_every = j.value("latent_every", c.latent_every);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("latent_d_grid")) c.latent_d_grid = j.at("latent_d_grid").get<std::vector<double>>();
    c.validate();
    return c;
}

void save_sampler_config(const SamplerConfig& c, const std::string& path) {
    dump_json(json{{"iters", c.iters},
                   {"burnin", c.burnin},
                   {"thin", c.thin},
                   {"chains", c.chains},
                   {"target_accept", c.target_accept},
                   {"adapt_window", c.adapt_window},
                   {"init_scale", c.init_scale},
                   {"seed", c.seed},
                   {"store_latents", c.store_latents},
                   {"latent_every", c.latent_every},
                   {"jobs", c.jobs}},
              path);
}

EstimandGrids load_grids(const std::string& path) {
    const json j = load_json(path);
    EstimandGrids g = EstimandGrids::defaults();
    if (j.contains("d_grid")) g.d_grid = j.at("d_grid").get<std::vector<double>>();
    if (j.contains("y_grid")) g.y_grid = j.at("y_grid").get<std::vector<double>>();
    if (j.contains("dce_d_dgrid"))
        g.dce_d_dgrid = j.at("dce_d_dgrid").get<std::vector<double>>();
    for (double d : g.d_grid)
        if (!(d > 0)) throw validation_error("d_grid values must be positive in " + path);
    for (double d : g.dce_d_dgrid)
        if (!(d > 0)) throw validation_error("dce_d_dgrid values must be positive in " + path);
    return g;
}

void save_true_values(const TrueValues& tv, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw validation_error("cannot write " + csv_path);
    out << "quantity,at,at2,value\n";
    out << "pi_nd,,," << fmt(tv.pi_nd) << '\n';
    out << "itt,,," << fmt(tv.itt) << '\n';
    out << "ace_nd,,," << fmt(tv.ace_nd) << '\n';
    out << "ace_d,,," << fmt(tv.ace_d) << '\n';
    for (const auto& p : tv.ace_d_curve) out << "ace_d_at," << fmt(p.at) << ",," << fmt(p.value) << '\n';
    for (const auto& p : tv.dce_nd_curve) out << "dce_nd," << fmt(p.at) << ",," << fmt(p.value) << '\n';
    for (const auto& p : tv.dce_d_curve)
        out << "dce_d," << fmt(p.at) << ',' << fmt(p.at2) << ',' << fmt(p.value) << '\n';
}

void save_complete_data(const CompleteData& cd, const Eigen::VectorXd& c,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "id,x1,x2,x3,i_nd,d1,y1,y0,z,c\n";
    for (int i = 0; i < cd.n(); ++i) {
        out << i << ',' << fmt(cd.x_raw(i, 0)) << ',' << fmt(cd.x_raw(i, 1)) << ','
            << fmt(cd.x_raw(i, 2)) << ',' << cd.i_nd[i] << ',';
        if (cd.i_nd[i] == 0) out << fmt(cd.d1[i]);
        out << ',' << fmt(cd.y1[i]) << ',' << fmt(cd.y0[i]) << ',' << cd.z[i] << ','
            << fmt(c.size() == cd.n() ? c[i] : 0.0) << '\n';
    }
}

void save_chain_csv(const Chain& chain, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "draw";
    for (const auto& name : chain.param_names) out << ',' << name;
    out << ",logpost\n";
    for (int r = 0; r < chain.n_retained(); ++r) {
        out << r;
        for (int j = 0; j < chain.draws.cols(); ++j) out << ',' << fmt(chain.draws(r, j));
        out << ',' << fmt(chain.logpost[r]) << '\n';
    }
}

void save_latents_csv(const Chain& chain, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path);
    out << "draw,unit,i_nd,d1\n";
    for (const auto& snap : chain.latents) {
        for (std::size_t i = 0; i < snap.i_nd.size(); ++i) {
            out << snap.draw_index << ',' << i << ',' << static_cast<int>(snap.i_nd[i]) << ',';
            if (snap.i_nd[i] == 0) out << fmt(snap.d1[static_cast<Eigen::Index>(i)]);
            out << '\n';
        }
    }
}

void save_fit(const std::vector<Chain>& chains, const Dataset& fit_ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json meta;
    meta["n"] = fit_ds.n();
    meta["n_covariates"] = fit_ds.n_covariates();
    meta["covariate_names"] = fit_ds.covariate_names();
    json transforms = json::array();
    for (const auto& t : fit_ds.transforms())
        transforms.push_back(json{{"column", t.column}, {"center", t.center}, {"scale", t.scale}});
    meta["transforms"] = transforms;
    meta["chains"] = static_cast<int>(chains.size());
    json acc = json::array();
    for (std::size_t c = 0; c < chains.size(); ++c) {
        save_chain_csv(chains[c], dir + "/chain_" + std::to_string(c) + ".csv");
        if (!chains[c].latents.empty())
            save_latents_csv(chains[c], dir + "/latents_" + std::to_string(c) + ".csv");
        acc.push_back(json{{"seed", chains[c].seed},
                           {"accept_min", chains[c].accept_rate.minCoeff()},
                           {"accept_max", chains[c].accept_rate.maxCoeff()}});
    }
    meta["chain_info"] = acc;
    if (!chains.empty()) {
        meta["param_names"] = chains.front().param_names;
        meta["iters"] = chains.front().config.iters;
        meta["burnin"] = chains.front().config.burnin;
        meta["thin"] = chains.front().config.thin;
    }
    dump_json(meta, dir + "/fit.json");
}

namespace {

std::vector<std::vector<std::string>> read_csv_table(const std::string& path,
                                                     std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open " + path);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (first) {
            header = fields;
            first = false;
        } else {
            rows.push_back(fields);
        }
    }
    return rows;
}

}  // namespace

FitArtifacts load_fit(const std::string& dir) {
    const json meta = load_json(dir + "/fit.json");
    FitArtifacts fa;
    fa.n_covariates = meta.at("n_covariates");
    fa.covariate_names = meta.at("covariate_names").get<std::vector<std::string>>();
    fa.param_names = meta.at("param_names").get<std::vector<std::string>>();
    for (const auto& t : meta.at("transforms"))
        fa.transforms.push_back({t.at("column"), t.at("center"), t.at("scale")});
    const int n_chains = meta.at("chains");
    for (int c = 0; c < n_chains; ++c) {
        const std::string path = dir + "/chain_" + std::to_string(c) + ".csv";
        std::vector<std::string> header;
        const auto rows = read_csv_table(path, header);
        if (header.size() != fa.param_names.size() + 2)
            throw validation_error("unexpected chain CSV layout in " + path);
        Chain chain;
        chain.param_names = fa.param_names;
        chain.draws.resize(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(fa.param_names.size()));
        chain.logpost.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != header.size())
                throw validation_error("ragged row in " + path + " at data row " +
                                       std::to_string(r + 1));
            for (std::size_t j = 0; j < fa.param_names.size(); ++j)
                chain.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                    std::stod(rows[r][j + 1]);
            chain.logpost[static_cast<Eigen::Index>(r)] = std::stod(rows[r].back());
        }
        // Latents, when stored.
        const std::string lat_path = dir + "/latents_" + std::to_string(c) + ".csv";
        if (std::filesystem::exists(lat_path)) {
            std::vector<std::string> lheader;
            const auto lrows = read_csv_table(lat_path, lheader);
            LatentSnapshot snap;
            int cur = -1;
            for (const auto& row : lrows) {
                const int draw = std::stoi(row[0]);
                const std::size_t unit = static_cast<std::size_t>(std::stoul(row[1]));
                if (draw != cur) {
                    if (cur >= 0) chain.latents.push_back(snap);
                    cur = draw;
                    snap = LatentSnapshot{};
                    snap.draw_index = draw;
                }
                if (snap.i_nd.size() <= unit) {
                    snap.i_nd.resize(unit + 1, 1);
                    snap.d1.conservativeResize(static_cast<Eigen::Index>(unit + 1));
                }
                snap.i_nd[unit] = static_cast<std::uint8_t>(std::stoi(row[2]));
                snap.d1[static_cast<Eigen::Index>(unit)] =
                    row[3].empty() ? LatentState::undefined() : std::stod(row[3]);
            }
            if (cur >= 0) chain.latents.push_back(snap);
        }
        fa.chains.push_back(std::move(chain));
    }
    return fa;
}

void save_estimand_report_json(const EstimandReport& rep, const std::string& path) {
    json j;
    const auto scalar = [](const ScalarSummary& s) {
        return json{{"mean", s.mean}, {"hpd_lower", s.hpd.lower}, {"hpd_upper", s.hpd.upper}};
    };
    j["level"] = rep.level;
    j["pi_nd"] = scalar(rep.pi_nd);
    j["itt"] = scalar(rep.itt);
    j["ace_nd"] = scalar(rep.ace_nd);
    j["ace_d"] = scalar(rep.ace_d);
    if (rep.has_indicator) j["pi_nd_indicator_share"] = scalar(rep.pi_nd_indicator);
    const auto curve = [](const std::vector<CurveSummary>& c, bool two) {
        json arr = json::array();
        for (const auto& p : c) {
            json e{{"at", p.at},
                   {"mean", p.mean},
                   {"hpd_lower", p.hpd.lower},
                   {"hpd_upper", p.hpd.upper}};
            if (two) e["d"] = p.at2;
            arr.push_back(e);
        }
        return arr;
    };
    j["ace_d_curve"] = curve(rep.ace_d_curve, false);
    j["dce_nd_curve"] = curve(rep.dce_nd_curve, false);
    j["dce_d_curve"] = curve(rep.dce_d_curve, true);
    dump_json(j, path);
}

std::string hash_string(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const Manifest& m, const std::string& dir) {
    json j;
    j["subcommand"] = m.subcommand;
    j["seed"] = m.seed;
    j["config_hash"] = m.config_hash;
    j["version"] = "psdisc 0.1.0";
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["wall_time_s"] = m.wall_time_s;
    for (const auto& [k, v] : m.extra) j["extra"][k] = v;
    dump_json(j, dir + "/manifest.json");
}

}  // namespace psdisc
