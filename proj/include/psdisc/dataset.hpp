#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace psdisc {

// One unit's observed data. z=1 is the investigational arm; times in months.
// d_tilde is min(D_obs, C) for treated units and C under control; disc flags an
// observed discontinuation (only possible when z=1).
struct PatientRecord {
    int id = 0;
    int z = 0;
    double c = 0.0;
    double y_tilde = 0.0;
    int event = 0;
    double d_tilde = 0.0;
    int disc = 0;
    Eigen::VectorXd x;
};

enum class ObservedProfile { D, ND, Mixture };

// Six-row observed-profile table: treated units with an observed
// discontinuation are D; treated units with an event and no discontinuation
// are ND; everyone else (treated censored on both, all controls) is a mixture.
ObservedProfile classify_profile(int z, int event, int disc);
ObservedProfile classify_profile(const PatientRecord& r);

struct CovariateTransform {
    int column = 0;
    double center = 0.0;
    double scale = 1.0;
};

// Columnar storage; immutable after construction/load.
class Dataset {
public:
    Dataset() = default;
    Dataset(Eigen::VectorXi z, Eigen::VectorXd c, Eigen::VectorXd y_tilde, Eigen::VectorXi event,
            Eigen::VectorXd d_tilde, Eigen::VectorXi disc, Eigen::MatrixXd x,
            std::vector<std::string> covariate_names);

    int n() const { return static_cast<int>(z_.size()); }
    int n_covariates() const { return static_cast<int>(x_.cols()); }

    const Eigen::VectorXi& z() const { return z_; }
    const Eigen::VectorXd& c() const { return c_; }
    const Eigen::VectorXd& y_tilde() const { return y_tilde_; }
    const Eigen::VectorXi& event() const { return event_; }
    const Eigen::VectorXd& d_tilde() const { return d_tilde_; }
    const Eigen::VectorXi& disc() const { return disc_; }
    const Eigen::MatrixXd& x() const { return x_; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    const std::vector<CovariateTransform>& transforms() const { return transforms_; }

    PatientRecord record(int i) const;

    // Intercept-only variant (drops every covariate column).
    Dataset without_covariates() const;

    // Validates the per-record invariants; throws validation_error naming the
    // first offending row.
    void validate() const;

private:
    friend Dataset standardize_covariates(const Dataset& ds);
    friend Dataset apply_transforms(const Dataset& ds, const std::vector<CovariateTransform>& t);

    Eigen::VectorXi z_;
    Eigen::VectorXd c_;
    Eigen::VectorXd y_tilde_;
    Eigen::VectorXi event_;
    Eigen::VectorXd d_tilde_;
    Eigen::VectorXi disc_;
    Eigen::MatrixXd x_;
    std::vector<std::string> covariate_names_;
    std::vector<CovariateTransform> transforms_;
};

// Center/scale continuous covariates (binary 0/1 columns are left untouched);
// the applied transform is recorded on the result for report-time back-mapping.
Dataset standardize_covariates(const Dataset& ds);

// Re-apply a stored transform (e.g. when scoring a fit against new data).
Dataset apply_transforms(const Dataset& ds, const std::vector<CovariateTransform>& t);

// CSV schema: id,z,c,y_tilde,event,d_tilde,disc,x1,x2,x3 (header required,
// UTF-8, '.' decimal).
Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

struct SummaryRow {
    std::string label;
    bool is_share = false;    // share rows carry count/denominator, no quantiles
    int count = 0;
    int denom = 0;
    double mean = 0.0;        // share value for share rows
    double sd = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    bool defined = true;      // false for 0/0 shares and single-point SDs
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
    std::string to_text() const;
    void to_csv(const std::string& path) const;
};

// Table-1-style report: arm share, discontinuation shares (both the
// among-treated and among-all bases), event share, time and covariate
// summaries. Quantiles are type-7 (linear interpolation).
SummaryTable summarize(const Dataset& ds);

// Helpers shared with other modules.
double quantile_type7(std::vector<double> v, double p);

}  // namespace psdisc
