#include "ramp/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ramp/core.hpp"

namespace ramp {

RegressionTree::RegressionTree(std::vector<TreeNode> nodes, TreeParams params)
    : nodes_(std::move(nodes)), params_(params) {}

double RegressionTree::predict(const double* row, Eigen::Index stride) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = nodes_[static_cast<std::size_t>(i)];
        i = row[n.feature * stride] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return predict(row.data(), 1);
}

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(X.data() + r, X.rows());
    return out;
}

int RegressionTree::depth() const {
    // Nodes are stored parent before child.
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes_[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return best;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

// Per-feature row orders sorted once per design matrix and reused for every
// tree fitted on it.
class PresortedDesign {
public:
    explicit PresortedDesign(const Eigen::MatrixXd& X) : X_(X) {
        const auto n = static_cast<int>(X.rows());
        order_.resize(static_cast<std::size_t>(X.cols()));
        for (Eigen::Index f = 0; f < X.cols(); ++f) {
            auto& o = order_[static_cast<std::size_t>(f)];
            o.resize(static_cast<std::size_t>(n));
            std::iota(o.begin(), o.end(), 0);
            std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
        }
    }

    RegressionTree fit(const Eigen::VectorXd& y, std::span<const double> w, const TreeParams& params) const;

private:
    const Eigen::MatrixXd& X_;
    std::vector<std::vector<int>> order_;
};

class TreeGrower {
public:
    TreeGrower(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> w, double total,
               const TreeParams& params, std::vector<std::vector<int>> order)
        : X_(X), y_(y), w_(w), total_(total), params_(params), order_(std::move(order)),
          goes_left_(static_cast<std::size_t>(X.rows()), 0) {}

    std::vector<TreeNode> grow() {
        std::size_t n = order_.empty() ? 0 : order_[0].size();
        build(0, n, 0);
        return std::move(nodes_);
    }

private:
    int build(std::size_t b, std::size_t e, int depth) {
        const auto& members = order_[0];
        double W = 0.0, WY = 0.0;
        double ymin = y_(members[b]), ymax = ymin;
        for (std::size_t i = b; i < e; ++i) {
            int r = members[i];
            W += w_[static_cast<std::size_t>(r)];
            WY += w_[static_cast<std::size_t>(r)] * y_(r);
            ymin = std::min(ymin, y_(r));
            ymax = std::max(ymax, y_(r));
        }
        const double mean = WY / W;
        const int index = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{-1, 0.0, -1, -1, ymin == ymax ? ymin : mean, W / total_});

        const double min_leaf = params_.min_leaf_weight * total_;
        if (depth >= params_.max_depth || e - b < 2 || ymin == ymax || W < 2.0 * min_leaf) return index;

        double R = 0.0, sse = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            int r = members[i];
            double d = y_(r) - mean;
            R += w_[static_cast<std::size_t>(r)] * d;
            sse += w_[static_cast<std::size_t>(r)] * d * d;
        }
        const double base = R * R / W;

        int best_f = -1;
        double best_gain = 0.0, best_thr = 0.0;
        for (std::size_t f = 0; f < order_.size(); ++f) {
            const auto& o = order_[f];
            const auto fi = static_cast<Eigen::Index>(f);
            double wl = 0.0, rl = 0.0;
            for (std::size_t i = b; i + 1 < e; ++i) {
                int r = o[i];
                double wr = w_[static_cast<std::size_t>(r)];
                wl += wr;
                rl += wr * (y_(r) - mean);
                double x0 = X_(r, fi), x1 = X_(o[i + 1], fi);
                if (x0 == x1) continue;
                double wright = W - wl;
                if (wl < min_leaf || wright < min_leaf || wright <= 0.0) continue;
                double rr = R - rl;
                double gain = rl * rl / wl + rr * rr / wright - base;
                // Gains equal up to rounding count as ties and keep the earlier split.
                if (gain > best_gain + 1e-12 * sse) {
                    best_gain = gain;
                    best_f = static_cast<int>(f);
                    double thr = x0 + (x1 - x0) * 0.5;
                    best_thr = thr >= x1 ? x0 : thr;
                }
            }
        }
        if (best_f < 0 || !(best_gain > 1e-12 * sse)) return index;

        std::size_t n_left = 0;
        for (std::size_t i = b; i < e; ++i) {
            int r = members[i];
            bool left = X_(r, best_f) <= best_thr;
            goes_left_[static_cast<std::size_t>(r)] = left ? 1 : 0;
            n_left += left ? 1 : 0;
        }
        for (auto& o : order_) {
            auto mid = std::stable_partition(o.begin() + static_cast<std::ptrdiff_t>(b),
                                             o.begin() + static_cast<std::ptrdiff_t>(e),
                                             [&](int r) { return goes_left_[static_cast<std::size_t>(r)] != 0; });
            (void)mid;
        }
        nodes_[static_cast<std::size_t>(index)].feature = best_f;
        nodes_[static_cast<std::size_t>(index)].threshold = best_thr;
        int left = build(b, b + n_left, depth + 1);
        int right = build(b + n_left, e, depth + 1);
        nodes_[static_cast<std::size_t>(index)].left = left;
        nodes_[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    std::span<const double> w_;
    double total_;
    TreeParams params_;
    std::vector<std::vector<int>> order_;
    std::vector<char> goes_left_;
    std::vector<TreeNode> nodes_;
};

double checked_total(std::span<const double> w, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(w.size()) != rows)
        throw Error(ErrorKind::LengthMismatch, "tree: weight count does not match rows");
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidConfig, "tree: weights must be finite and >= 0");
        total += v;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::AllWeightsZero, "tree: all instance weights are zero");
    return total;
}

RegressionTree PresortedDesign::fit(const Eigen::VectorXd& y, std::span<const double> w,
                                    const TreeParams& params) const {
    if (y.size() != X_.rows()) throw Error(ErrorKind::LengthMismatch, "tree: X and y row counts differ");
    if (params.max_depth < 0) throw Error(ErrorKind::InvalidConfig, "tree: max_depth must be >= 0");
    const double total = checked_total(w, X_.rows());
    std::vector<std::vector<int>> order;
    order.reserve(order_.size());
    for (const auto& o : order_) {
        std::vector<int> kept;
        kept.reserve(o.size());
        for (int r : o)
            if (w[static_cast<std::size_t>(r)] > 0.0) kept.push_back(r);
        order.push_back(std::move(kept));
    }
    if (order.empty()) {
        // No features: a single leaf at the weighted mean.
        double wy = 0.0;
        for (Eigen::Index r = 0; r < y.size(); ++r) wy += w[static_cast<std::size_t>(r)] * y(r);
        return RegressionTree({TreeNode{-1, 0.0, -1, -1, wy / total, 1.0}}, params);
    }
    TreeGrower grower(X_, y, w, total, params, std::move(order));
    return RegressionTree(grower.grow(), params);
}

}  // namespace

RegressionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> weights,
                        const TreeParams& params) {
    return PresortedDesign(X).fit(y, weights, params);
}

std::vector<double> adjusted_errors(const Eigen::VectorXd& predictions, const Eigen::VectorXd& y) {
    if (predictions.size() != y.size())
        throw Error(ErrorKind::LengthMismatch, "adjusted_errors: length mismatch");
    std::vector<double> e(static_cast<std::size_t>(y.size()));
    double D = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        e[static_cast<std::size_t>(i)] = std::abs(predictions(i) - y(i));
        D = std::max(D, e[static_cast<std::size_t>(i)]);
    }
    for (double& v : e) v = D > 0.0 ? v / D : 0.0;
    return e;
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
    if (values.empty() || values.size() != weights.size())
        throw Error(ErrorKind::LengthMismatch, "weighted_median: empty or mismatched input");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double cum = 0.0;
    for (std::size_t i : idx) {
        cum += weights[i];
        if (cum >= 0.5 * total) return values[i];
    }
    return values[idx.back()];
}

double R2Ensemble::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (trees.empty()) throw Error(ErrorKind::InvalidConfig, "ensemble is empty");
    std::vector<double> preds(trees.size()), w(trees.size());
    for (std::size_t k = 0; k < trees.size(); ++k) {
        preds[k] = trees[k].predict(row);
        w[k] = std::log(1.0 / betas[k]);
    }
    return weighted_median(preds, w);
}

Eigen::VectorXd R2Ensemble::predict(const Eigen::MatrixXd& X) const {
    if (trees.empty()) throw Error(ErrorKind::InvalidConfig, "ensemble is empty");
    Eigen::VectorXd out(X.rows());
    std::vector<double> preds(trees.size()), w(trees.size());
    for (std::size_t k = 0; k < trees.size(); ++k) w[k] = std::log(1.0 / betas[k]);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (std::size_t k = 0; k < trees.size(); ++k) preds[k] = trees[k].predict(X.data() + r, X.rows());
        out(r) = weighted_median(preds, w);
    }
    return out;
}

R2Fit adaboost_r2_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const double> init_weights,
                      const std::vector<bool>& frozen, int n_estimators, const TreeParams& params) {
    const auto n = static_cast<std::size_t>(X.rows());
    if (y.size() != X.rows() || init_weights.size() != n || frozen.size() != n)
        throw Error(ErrorKind::LengthMismatch, "adaboost: X, y, weights and mask lengths differ");
    if (n_estimators < 1) throw Error(ErrorKind::InvalidConfig, "adaboost: n_estimators must be >= 1");
    if (std::all_of(frozen.begin(), frozen.end(), [](bool f) { return f; }))
        throw Error(ErrorKind::NoUnfrozenInstances, "adaboost: every instance is frozen");

    R2Fit fit;
    fit.weights.assign(init_weights.begin(), init_weights.end());
    auto unfrozen_mass = [&] {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!frozen[i]) m += fit.weights[i];
        return m;
    };
    fit.unfrozen_mass.push_back(unfrozen_mass());

    PresortedDesign design(X);
    for (int k = 0; k < n_estimators; ++k) {
        RegressionTree tree = design.fit(y, fit.weights, params);
        std::vector<double> e = adjusted_errors(tree.predict(X), y);
        double total = 0.0, loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += fit.weights[i];
            loss += fit.weights[i] * e[i];
        }
        const double eps = loss / total;
        fit.epsilons.push_back(eps);

        if (eps >= 0.5) {
            if (k == 0) {
                fit.ensemble.trees.push_back(std::move(tree));
                fit.ensemble.betas.push_back(1.0 - kMinBeta);
            }
            break;
        }
        if (eps <= 0.0) {
            fit.ensemble.trees.push_back(std::move(tree));
            fit.ensemble.betas.push_back(kMinBeta);
            break;
        }
        const double beta = std::max(eps / (1.0 - eps), kMinBeta);
        fit.ensemble.trees.push_back(std::move(tree));
        fit.ensemble.betas.push_back(beta);

        const double before = fit.unfrozen_mass.back();
        double after = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (frozen[i]) continue;
            fit.weights[i] *= std::pow(beta, 1.0 - e[i]);
            after += fit.weights[i];
        }
        if (after > 0.0) {
            const double scale = before / after;
            for (std::size_t i = 0; i < n; ++i)
                if (!frozen[i]) fit.weights[i] *= scale;
        }
        fit.unfrozen_mass.push_back(unfrozen_mass());
    }
    return fit;
}

}  // namespace ramp
