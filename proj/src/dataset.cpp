#include "psdisc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "psdisc/errors.hpp"

namespace psdisc {

namespace {

const char* kSchema[] = {"id", "z", "c", "y_tilde", "event", "d_tilde", "disc"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, int line_no, const std::string& field) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw validation_error("CSV line " + std::to_string(line_no) + ": cannot parse field '" +
                               field + "' from '" + s + "'");
    }
}

int parse_flag(const std::string& s, int line_no, const std::string& field) {
    const double v = parse_double(s, line_no, field);
    if (v != 0.0 && v != 1.0)
        throw validation_error("CSV line " + std::to_string(line_no) + ": field '" + field +
                               "' must be 0 or 1, got '" + s + "'");
    return static_cast<int>(v);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool is_binary_column(const Eigen::VectorXd& col) {
    for (int i = 0; i < col.size(); ++i)
        if (col[i] != 0.0 && col[i] != 1.0) return false;
    return true;
}

}  // namespace

ObservedProfile classify_profile(int z, int event, int disc) {
    if (z == 1 && disc == 1) return ObservedProfile::D;
    if (z == 1 && event == 1) return ObservedProfile::ND;
    return ObservedProfile::Mixture;
}

ObservedProfile classify_profile(const PatientRecord& r) {
    return classify_profile(r.z, r.event, r.disc);
}

Dataset::Dataset(Eigen::VectorXi z, Eigen::VectorXd c, Eigen::VectorXd y_tilde,
                 Eigen::VectorXi event, Eigen::VectorXd d_tilde, Eigen::VectorXi disc,
                 Eigen::MatrixXd x, std::vector<std::string> covariate_names)
    : z_(std::move(z)),
      c_(std::move(c)),
      y_tilde_(std::move(y_tilde)),
      event_(std::move(event)),
      d_tilde_(std::move(d_tilde)),
      disc_(std::move(disc)),
      x_(std::move(x)),
      covariate_names_(std::move(covariate_names)) {
    const auto n = z_.size();
    if (c_.size() != n || y_tilde_.size() != n || event_.size() != n || d_tilde_.size() != n ||
        disc_.size() != n || x_.rows() != n)
        throw validation_error("Dataset: column length mismatch");
    if (static_cast<int>(covariate_names_.size()) != x_.cols())
        throw validation_error("Dataset: covariate name/column mismatch");
}

PatientRecord Dataset::record(int i) const {
    PatientRecord r;
    r.id = i;
    r.z = z_[i];
    r.c = c_[i];
    r.y_tilde = y_tilde_[i];
    r.event = event_[i];
    r.d_tilde = d_tilde_[i];
    r.disc = disc_[i];
    r.x = x_.row(i);
    return r;
}

Dataset Dataset::without_covariates() const {
    Dataset out = *this;
    out.x_ = Eigen::MatrixXd(n(), 0);
    out.covariate_names_.clear();
    out.transforms_.clear();
    return out;
}

void Dataset::validate() const {
    for (int i = 0; i < n(); ++i) {
        const auto bad = [&](const std::string& what) {
            throw validation_error("Dataset row " + std::to_string(i) + ": " + what);
        };
        if (z_[i] != 0 && z_[i] != 1) bad("z must be 0/1");
        if (!(c_[i] > 0.0) || !std::isfinite(c_[i])) bad("censoring time must be positive");
        if (!(y_tilde_[i] > 0.0)) bad("y_tilde must be positive");
        if (y_tilde_[i] > c_[i] + 1e-12) bad("y_tilde exceeds censoring time");
        if (event_[i] == 0 && y_tilde_[i] < c_[i] - 1e-12)
            bad("censored outcome must have y_tilde = c");
        if (d_tilde_[i] > c_[i] + 1e-12) bad("d_tilde exceeds censoring time");
        if (z_[i] == 0) {
            if (disc_[i] != 0) bad("control unit cannot have observed discontinuation");
            if (d_tilde_[i] < c_[i] - 1e-12) bad("control unit must have d_tilde = c");
        }
        if (disc_[i] == 1) {
            if (!(d_tilde_[i] < y_tilde_[i]))
                bad("observed discontinuation must precede the observed outcome");
            if (!(d_tilde_[i] > 0.0)) bad("d_tilde must be positive");
        }
        if (disc_[i] == 0 && z_[i] == 1 && d_tilde_[i] < c_[i] - 1e-12)
            bad("treated unit without discontinuation must have d_tilde = c");
        for (int k = 0; k < x_.cols(); ++k)
            if (!std::isfinite(x_(i, k))) bad("non-finite covariate " + covariate_names_[k]);
    }
}

Dataset standardize_covariates(const Dataset& ds) {
    Dataset out = ds;
    out.transforms_.clear();
    for (int k = 0; k < ds.x_.cols(); ++k) {
        Eigen::VectorXd col = ds.x_.col(k);
        if (is_binary_column(col)) continue;
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / std::max(1, ds.n() - 1);
        const double sd = std::sqrt(var);
        if (!(sd > 0.0))
            throw validation_error("standardize_covariates: zero-variance continuous covariate '" +
                                   ds.covariate_names_[k] + "'");
        out.x_.col(k) = (col.array() - mean) / sd;
        out.transforms_.push_back({k, mean, sd});
    }
    return out;
}

Dataset apply_transforms(const Dataset& ds, const std::vector<CovariateTransform>& t) {
    Dataset out = ds;
    out.transforms_ = t;
    for (const auto& tr : t) {
        if (tr.column < 0 || tr.column >= ds.x_.cols())
            throw validation_error("apply_transforms: column index out of range");
        if (!(tr.scale > 0.0)) throw validation_error("apply_transforms: non-positive scale");
        out.x_.col(tr.column) = (ds.x_.col(tr.column).array() - tr.center) / tr.scale;
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty dataset file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    const int n_fixed = static_cast<int>(std::size(kSchema));
    for (int j = 0; j < n_fixed; ++j) {
        if (j >= static_cast<int>(header.size()) || header[j] != kSchema[j])
            throw validation_error("dataset schema error: expected column '" +
                                   std::string(kSchema[j]) + "' at position " +
                                   std::to_string(j + 1) + " in " + path);
    }
    std::vector<std::string> cov_names(header.begin() + n_fixed, header.end());
    const int n_cov = static_cast<int>(cov_names.size());

    std::vector<PatientRecord> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (static_cast<int>(f.size()) != n_fixed + n_cov)
            throw validation_error("CSV line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(n_fixed + n_cov) + " fields, got " +
                                   std::to_string(f.size()));
        PatientRecord r;
        r.id = static_cast<int>(parse_double(f[0], line_no, "id"));
        r.z = parse_flag(f[1], line_no, "z");
        r.c = parse_double(f[2], line_no, "c");
        r.y_tilde = parse_double(f[3], line_no, "y_tilde");
        r.event = parse_flag(f[4], line_no, "event");
        r.d_tilde = parse_double(f[5], line_no, "d_tilde");
        r.disc = parse_flag(f[6], line_no, "disc");
        r.x.resize(n_cov);
        for (int k = 0; k < n_cov; ++k) r.x[k] = parse_double(f[n_fixed + k], line_no, cov_names[k]);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw validation_error("dataset has no records: " + path);

    const int n = static_cast<int>(rows.size());
    Eigen::VectorXi z(n), event(n), disc(n);
    Eigen::VectorXd c(n), y(n), d(n);
    Eigen::MatrixXd x(n, n_cov);
    for (int i = 0; i < n; ++i) {
        z[i] = rows[i].z;
        c[i] = rows[i].c;
        y[i] = rows[i].y_tilde;
        event[i] = rows[i].event;
        d[i] = rows[i].d_tilde;
        disc[i] = rows[i].disc;
        x.row(i) = rows[i].x;
    }
    Dataset ds(std::move(z), std::move(c), std::move(y), std::move(event), std::move(d),
               std::move(disc), std::move(x), std::move(cov_names));
    ds.validate();
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write dataset file: " + path);
    out << "id,z,c,y_tilde,event,d_tilde,disc";
    for (const auto& name : ds.covariate_names()) out << ',' << name;
    out << '\n';
    for (int i = 0; i < ds.n(); ++i) {
        out << i << ',' << ds.z()[i] << ',' << fmt(ds.c()[i]) << ',' << fmt(ds.y_tilde()[i]) << ','
            << ds.event()[i] << ',' << fmt(ds.d_tilde()[i]) << ',' << ds.disc()[i];
        for (int k = 0; k < ds.n_covariates(); ++k) out << ',' << fmt(ds.x()(i, k));
        out << '\n';
    }
}

double quantile_type7(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

SummaryRow share_row(const std::string& label, int count, int denom) {
    SummaryRow r;
    r.label = label;
    r.is_share = true;
    r.count = count;
    r.denom = denom;
    r.defined = denom > 0;
    r.mean = r.defined ? static_cast<double>(count) / denom : 0.0;
    return r;
}

SummaryRow stat_row(const std::string& label, const std::vector<double>& v) {
    SummaryRow r;
    r.label = label;
    r.count = static_cast<int>(v.size());
    r.denom = r.count;
    if (v.empty()) {
        r.defined = false;
        return r;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    r.mean = mean;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        r.sd = std::sqrt(ss / (static_cast<double>(v.size()) - 1.0));
    } else {
        r.sd = 0.0;
    }
    r.min = *std::min_element(v.begin(), v.end());
    r.max = *std::max_element(v.begin(), v.end());
    r.q1 = quantile_type7(v, 0.25);
    r.median = quantile_type7(v, 0.50);
    r.q3 = quantile_type7(v, 0.75);
    return r;
}

}  // namespace

SummaryTable summarize(const Dataset& ds) {
    if (ds.n() == 0) throw validation_error("summarize: empty dataset");
    SummaryTable t;
    const int n = ds.n();
    int n1 = 0, n_disc = 0, n_event = 0;
    std::vector<double> d_disc, d_treated, y_all;
    for (int i = 0; i < n; ++i) {
        if (ds.z()[i] == 1) {
            ++n1;
            d_treated.push_back(ds.d_tilde()[i]);
            if (ds.disc()[i] == 1) {
                ++n_disc;
                d_disc.push_back(ds.d_tilde()[i]);
            }
        }
        if (ds.event()[i] == 1) ++n_event;
        y_all.push_back(ds.y_tilde()[i]);
    }
    t.rows.push_back(share_row("z=1", n1, n));
    t.rows.push_back(share_row("disc_observed (among treated)", n_disc, n1));
    t.rows.push_back(share_row("disc_observed (among all)", n_disc, n));
    t.rows.push_back(stat_row("d_tilde (discontinuers)", d_disc));
    t.rows.push_back(stat_row("d_tilde (all treated)", d_treated));
    t.rows.push_back(share_row("event_observed", n_event, n));
    t.rows.push_back(stat_row("y_tilde", y_all));
    for (int k = 0; k < ds.n_covariates(); ++k) {
        Eigen::VectorXd col = ds.x().col(k);
        std::vector<double> v(col.data(), col.data() + col.size());
        if (is_binary_column(col)) {
            int cnt = 0;
            for (double x : v) cnt += x == 1.0 ? 1 : 0;
            t.rows.push_back(share_row(ds.covariate_names()[k], cnt, n));
        } else {
            t.rows.push_back(stat_row(ds.covariate_names()[k], v));
        }
    }
    return t;
}

std::string SummaryTable::to_text() const {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-32s %12s %9s %8s %8s %8s %8s %8s\n", "variable",
                  "mean/share", "sd", "min", "q1", "median", "q3", "max");
    os << buf;
    for (const auto& r : rows) {
        if (!r.defined) {
            std::snprintf(buf, sizeof(buf), "%-32s %12s\n", r.label.c_str(), "undefined");
            os << buf;
        } else if (r.is_share) {
            std::snprintf(buf, sizeof(buf), "%-32s %10.2f%% (%d/%d)\n", r.label.c_str(),
                          100.0 * r.mean, r.count, r.denom);
            os << buf;
        } else {
            std::snprintf(buf, sizeof(buf), "%-32s %12.4g %9.4g %8.4g %8.4g %8.4g %8.4g %8.4g\n",
                          r.label.c_str(), r.mean, r.sd, r.min, r.q1, r.median, r.q3, r.max);
            os << buf;
        }
    }
    return os.str();
}

void SummaryTable::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write summary file: " + path);
    out << "variable,type,defined,count,denom,mean_or_share,sd,min,q1,median,q3,max\n";
    for (const auto& r : rows) {
        out << '"' << r.label << '"' << ',' << (r.is_share ? "share" : "stat") << ','
            << (r.defined ? 1 : 0) << ',' << r.count << ',' << r.denom << ',' << fmt(r.mean) << ','
            << fmt(r.sd) << ',' << fmt(r.min) << ',' << fmt(r.q1) << ',' << fmt(r.median) << ','
            << fmt(r.q3) << ',' << fmt(r.max) << '\n';
    }
}

}  // namespace psdisc
