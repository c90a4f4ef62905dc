#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramp/correction.hpp"
#include "ramp/ridge.hpp"
#include "ramp/transfer.hpp"

namespace ramp {

double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);

struct MapeResult {
    double percent = 0.0;
    std::size_t skipped = 0;  // terms with |y| < 1e-9
};
// Throws AllTargetsZero when every term is skipped.
MapeResult mape(std::span<const double> y, std::span<const double> yhat);

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape;  // absent when every target is zero
    std::size_t mape_skipped = 0;
};
Metrics score(std::span<const double> y, std::span<const double> yhat);

struct KnnModel {
    Standardization transform;
    Eigen::MatrixXd X;  // standardized training rows
    Eigen::VectorXd y;
    int k = 1;

    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& raw_row) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd& raw) const;
};
// Throws KTooLarge when k exceeds the row count.
KnnModel knn_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int k);

enum class ModelKind { Transfer, AdaBoost, Knn };
std::string_view to_string(ModelKind kind);  // "TRA", "ADA", "KNN"
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct ModelSpec {
    ModelKind kind = ModelKind::Transfer;
    int max_depth = 5;
    int n_estimators = 50;
    int k = 5;

    std::string label() const;
};

struct EvalConfig {
    TransferConfig transfer;  // n_estimators and max_depth come from the ModelSpec
    RidgeConfig ridge;
    ThresholdMap thresholds = default_thresholds();
    // When set, every fold uses these inputs; otherwise variables are selected
    // by ridge on each fold's training sections.
    std::optional<std::vector<std::string>> columns;
    int runs = 1;  // repeats with incremented seeds; metrics are averaged
    int jobs = 1;
    std::uint64_t seed = 0;
};

struct FoldResult {
    SectionId section;
    std::string target;
    std::string model;
    Metrics metrics;
    std::size_t rows = 0;
    int selected_step = 0;  // transfer only
    std::vector<std::string> columns;
    double seconds = 0.0;   // wall time, kept out of the emitted reports
};

struct MetricReport {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<FoldResult> folds;

    // Sort by target, model, section.
    void normalize();
};

// One fold per section: train on the others, predict the held-out section.
// Throws TooFewSections for fewer than two sections.
MetricReport loso_cv(const Dataset& d, const std::string& target, const std::vector<ModelSpec>& models,
                     const EvalConfig& cfg);

// Only the held-out fold for one section; the same computation as its LOSO fold.
std::vector<FoldResult> holdout_eval(const Dataset& d, const SectionId& held_out, const std::string& target,
                                     const std::vector<ModelSpec>& models, const EvalConfig& cfg);

struct GridSpec {
    std::vector<int> max_depth{5, 10, 15, 20, 25};
    std::vector<int> n_estimators{50, 100, 150, 200, 250};
    std::vector<int> n_neighbors{1, 3, 5, 7, 9, 11, 13, 15, 17, 19};

    void validate() const;
    std::vector<ModelSpec> combinations(ModelKind kind) const;
};

struct GridPoint {
    ModelSpec spec;
    double mean_mae = 0.0;
    std::vector<double> fold_mae;  // in section order
};

struct GridResult {
    ModelKind kind = ModelKind::Transfer;
    std::vector<SectionId> sections;
    std::vector<GridPoint> table;  // sorted by max_depth, n_estimators, k
    GridPoint best;
};

// Mean LOSO MAE for every combination. Ties go to the smaller max_depth, then
// the smaller n_estimators (the smaller k for KNN). A budget keeps a seeded
// uniform subset of that many combinations.
GridResult grid_search(const Dataset& d, const std::string& target, ModelKind kind, const GridSpec& grid,
                       const EvalConfig& cfg, std::optional<std::size_t> budget = std::nullopt);

}  // namespace ramp
