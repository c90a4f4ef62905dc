#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramp/correction.hpp"

namespace ramp {

// Column transform applied before fitting: inputs centred and scaled to unit
// sample standard deviation, the target centred only.
struct Standardization {
    std::vector<std::string> columns;
    std::vector<double> means;
    std::vector<double> scales;       // 1 for zero-variance columns
    std::vector<bool> zero_variance;
    double target_mean = 0.0;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

struct Standardized {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Standardization transform;
};

Standardized standardize(const Dataset& d, const std::string& target);
Standardized standardize(const Dataset& d, const std::string& target,
                         const std::vector<std::string>& columns);
// Input-only variant used by the transfer and KNN learners.
Standardization fit_standardization(const Eigen::MatrixXd& raw, std::vector<std::string> columns);

// Solves (X'X + lambda I) beta = X'y. Throws SingularSystem when lambda = 0
// and X is rank deficient.
Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

const std::vector<double>& default_lambda_grid();

// K-fold cross-validated choice of lambda (minimum held-out MSE, ties to
// the larger lambda). Folds come from a seeded shuffle.
double select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<double>& grid,
                     int folds, std::uint64_t seed);

struct RidgeModel {
    std::vector<std::string> columns;
    Eigen::VectorXd coefficients;  // on the standardized scale
    double lambda = 0.0;
    Standardization transform;

    double predict(const Eigen::VectorXd& raw_row) const;
};

struct RidgeConfig {
    std::vector<double> lambda_grid = default_lambda_grid();
    int folds = 5;
    int runs = 10;
    double subsample = 0.8;
    std::uint64_t seed = 0;
};

// Standardize, select lambda, fit. Zero-variance columns get coefficient 0.
RidgeModel fit_ridge(const Dataset& d, const std::string& target, const RidgeConfig& cfg);

struct AveragedCoefficients {
    std::string target;
    std::vector<std::string> columns;
    std::vector<double> coefficients;
    std::vector<double> lambdas;  // selected per run
};

// Mean coefficients over cfg.runs seeded row subsamples.
AveragedCoefficients averaged_fit(const Dataset& d, const std::string& target, const RidgeConfig& cfg);

using ThresholdMap = std::map<TargetKind, double>;
ThresholdMap default_thresholds();  // speed 0.5, occupancy 0.5, flow 50

struct TargetSelection {
    std::string target;
    std::vector<std::string> columns;
    std::vector<double> coefficients;
    double threshold = 0.0;
    std::vector<std::string> selected;
    bool fallback = false;  // nothing passed; all variables kept
};

struct SelectionResult {
    std::vector<TargetSelection> targets;
    std::vector<std::string> warnings;

    const TargetSelection* find(const std::string& target) const;
};

SelectionResult filter_variables(const std::vector<AveragedCoefficients>& coeffs, const ThresholdMap& thresholds);

// Rows = variables, columns = targets, plus a `<target>_selected` flag column per target.
void write_coefficient_table(std::ostream& out, const SelectionResult& s);
std::string selection_to_json(const SelectionResult& s);
SelectionResult selection_from_json(const std::string& text);

}  // namespace ramp
