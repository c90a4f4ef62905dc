#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ramp {

struct TreeParams {
    int max_depth = 5;
    // Minimum leaf weight as a fraction of the total training weight.
    double min_leaf_weight = 0.0;
};

// Default min_leaf_weight: two rows' worth of uniform weight.
inline double default_min_leaf_weight(std::size_t rows) {
    return rows == 0 ? 0.0 : 2.0 / static_cast<double>(rows);
}

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // rows with x <= threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;   // weighted mean of the node's training targets
    double weight = 0.0;  // fraction of total training weight reaching the node
};

class RegressionTree {
public:
    RegressionTree() = default;
    RegressionTree(std::vector<TreeNode> nodes, TreeParams params);

    double predict(const double* row, Eigen::Index stride) const;
    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    double predict(const Eigen::RowVectorXd& row) const { return predict(Eigen::Ref<const Eigen::RowVectorXd>(row)); }
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    const TreeParams& params() const noexcept { return params_; }
    int depth() const;
    std::size_t leaf_count() const;

private:
    std::vector<TreeNode> nodes_;
    TreeParams params_;
};

// Greedy weighted CART (variance reduction). Zero-weight rows are ignored.
// Ties go to the lowest feature index, then the smallest threshold.
// Throws AllWeightsZero.
RegressionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> weights,
                        const TreeParams& params);

// Linear-loss adjusted errors |pred - y| / max |pred - y|; all zero when the
// fit is perfect.
std::vector<double> adjusted_errors(const Eigen::VectorXd& predictions, const Eigen::VectorXd& y);

struct R2Ensemble {
    std::vector<RegressionTree> trees;
    std::vector<double> betas;  // each in (0, 1)

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    double predict(const Eigen::RowVectorXd& row) const { return predict(Eigen::Ref<const Eigen::RowVectorXd>(row)); }
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Weighted median: the smallest value whose cumulative weight reaches half
// the total. Ties in value keep input order.
double weighted_median(std::span<const double> values, std::span<const double> weights);

struct R2Fit {
    R2Ensemble ensemble;
    std::vector<double> weights;         // after the last round
    std::vector<double> epsilons;        // weighted average loss per round
    std::vector<double> unfrozen_mass;   // before the first round, then after each update
};

// AdaBoost.R2 where rows with frozen[i] = true keep their weight for the
// whole run; the remaining rows are reweighted with their total mass held
// fixed. Throws NoUnfrozenInstances.
R2Fit adaboost_r2_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> init_weights,
                      const std::vector<bool>& frozen, int n_estimators, const TreeParams& params);

// Smallest beta kept for a perfect round, so that ln(1/beta) stays finite.
inline constexpr double kMinBeta = 1e-10;

}  // namespace ramp
