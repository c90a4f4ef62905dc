#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramp/boosting.hpp"
#include "ramp/ridge.hpp"

namespace ramp {

// How source rows are admitted into the target substitute by their best
// cosine similarity to any target row.
enum class SubstituteComparator {
    LessEqual,     // sim <= theta
    GreaterEqual,  // sim >= theta
};

std::string_view to_string(SubstituteComparator c);
std::optional<SubstituteComparator> parse_comparator(std::string_view text);

struct TransferConfig {
    int steps = 10;
    int folds = 5;
    double theta = 0.9;
    SubstituteComparator comparator = SubstituteComparator::LessEqual;
    int n_estimators = 50;
    int max_depth = 5;
    std::optional<double> min_leaf_weight;  // default: 2 / (n + m)
    // During cross-validation, also withhold the source copy of each held-out
    // substitute row from training.
    bool cv_exclude_twins = true;
    // Compare rows over every before-period input instead of the selected
    // columns; with one or two selected columns cosine similarity is nearly
    // always +-1 and the substitute degenerates.
    bool substitute_all_inputs = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Substitute {
    std::vector<std::size_t> indices;  // source row indices, ascending
    std::vector<double> similarity;    // per source row
};

// Rows are standardized with the source statistics before comparison.
// Throws EmptySubstitute when no source row qualifies.
Substitute build_substitute(const Eigen::MatrixXd& source_inputs, const Eigen::MatrixXd& target_inputs, double theta,
                            SubstituteComparator comparator = SubstituteComparator::LessEqual);

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

// Outcome of the per-step source reweighting. Source weights are multiplied
// by beta^e (evaluated as exp(e * log_beta)); rows with e = 0 are further
// scaled by zero_error_scale, which is 1 unless beta alone cannot reach the
// goal.
struct BetaStep {
    double beta = 1.0;
    double log_beta = 0.0;
    double zero_error_scale = 1.0;
    int iterations = 0;
};

// Target mass of a weight vector laid out as n source rows then m target rows.
double target_mass(std::span<const double> weights, std::size_t n);

// Bisection for the beta that brings the normalized target mass to goal.
// Throws GoalUnreachable when goal is below the current mass.
BetaStep beta_search(std::span<const double> weights, std::size_t n, std::size_t m, double goal,
                     std::span<const double> source_errors);

// Applies a BetaStep and renormalizes to sum 1.
void apply_beta_step(std::vector<double>& weights, std::size_t n, std::span<const double> source_errors,
                     const BetaStep& step);

// Target-mass goal after step t (1-based) of an S-step schedule, clamped to 1.
double schedule_goal(int t, int steps, std::size_t n, std::size_t m);

struct TransferModel {
    R2Ensemble ensemble;
    int selected_step = 1;                  // 1-based
    std::vector<double> step_errors;        // cross-validated RMSE per step
    std::vector<double> substitute_mass;    // normalized target mass entering each step
    Standardization transform;              // source input statistics
    std::vector<std::string> columns;
    std::size_t source_rows = 0;
    std::size_t substitute_rows = 0;
    TransferConfig config;
};

// Two-stage TrAdaBoost.R2 over D = source rows + copies of the substitute
// rows. Source rows stay frozen inside each AdaBoost.R2 call.
TransferModel two_stage_fit(const Eigen::MatrixXd& source_inputs, const Eigen::VectorXd& source_targets,
                            std::span<const std::size_t> substitute, const std::vector<std::string>& columns,
                            const TransferConfig& cfg);

// Throws RosterMismatch when columns differ from the model's roster.
Eigen::VectorXd transfer_predict(const TransferModel& model, const Eigen::MatrixXd& raw_inputs,
                                 const std::vector<std::string>& columns);

}  // namespace ramp
