#include "ramp/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ramp/csv.hpp"

namespace ramp {

std::string_view to_string(SubstituteComparator c) {
    return c == SubstituteComparator::LessEqual ? "le" : "ge";
}

std::optional<SubstituteComparator> parse_comparator(std::string_view text) {
    if (text == "le") return SubstituteComparator::LessEqual;
    if (text == "ge") return SubstituteComparator::GreaterEqual;
    return std::nullopt;
}

void TransferConfig::validate() const {
    if (steps < 2) throw Error(ErrorKind::InvalidConfig, "transfer: steps must be >= 2");
    if (folds < 2) throw Error(ErrorKind::InvalidConfig, "transfer: folds must be >= 2");
    if (!(theta >= -1.0 && theta <= 1.0)) throw Error(ErrorKind::InvalidConfig, "transfer: theta must lie in [-1, 1]");
    if (n_estimators < 1) throw Error(ErrorKind::InvalidConfig, "transfer: n_estimators must be >= 1");
    if (max_depth < 0) throw Error(ErrorKind::InvalidConfig, "transfer: max_depth must be >= 0");
    if (min_leaf_weight && !(*min_leaf_weight >= 0.0 && *min_leaf_weight < 0.5))
        throw Error(ErrorKind::InvalidConfig, "transfer: min_leaf_weight must lie in [0, 0.5)");
}

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Substitute build_substitute(const Eigen::MatrixXd& source_inputs, const Eigen::MatrixXd& target_inputs, double theta,
                            SubstituteComparator comparator) {
    if (source_inputs.cols() != target_inputs.cols())
        throw Error(ErrorKind::RosterMismatch, "substitute: source and target column counts differ");
    if (target_inputs.rows() == 0) throw Error(ErrorKind::EmptyInput, "substitute: no target rows");
    Standardization t = fit_standardization(source_inputs, {});
    Eigen::MatrixXd S = t.apply(source_inputs);
    Eigen::MatrixXd T = t.apply(target_inputs);
    // Unit rows so that cosine similarity is a dot product.
    auto normalize_rows = [](Eigen::MatrixXd& M) {
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            double nr = M.row(r).norm();
            if (nr > 0.0) M.row(r) /= nr;
        }
    };
    normalize_rows(S);
    normalize_rows(T);
    Eigen::MatrixXd sims = S * T.transpose();

    Substitute out;
    out.similarity.resize(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index j = 0; j < S.rows(); ++j) {
        double best = std::clamp(sims.row(j).maxCoeff(), -1.0, 1.0);
        out.similarity[static_cast<std::size_t>(j)] = best;
        bool take = comparator == SubstituteComparator::LessEqual ? best <= theta : best >= theta;
        if (take) out.indices.push_back(static_cast<std::size_t>(j));
    }
    if (out.indices.empty())
        throw Error(ErrorKind::EmptySubstitute,
                    "no source row has best cosine similarity " +
                        std::string(comparator == SubstituteComparator::LessEqual ? "<= " : ">= ") +
                        csv::format_real(theta) + "; adjust theta");
    return out;
}

double target_mass(std::span<const double> weights, std::size_t n) {
    double src = 0.0, tgt = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) (i < n ? src : tgt) += weights[i];
    return tgt / (src + tgt);
}

double schedule_goal(int t, int steps, std::size_t n, std::size_t m) {
    const double base = static_cast<double>(m) / static_cast<double>(n + m);
    return std::min(1.0, base + static_cast<double>(t) / static_cast<double>(steps - 1) * (1.0 - base));
}

BetaStep beta_search(std::span<const double> weights, std::size_t n, std::size_t m, double goal,
                     std::span<const double> source_errors) {
    if (weights.size() != n + m || source_errors.size() != n)
        throw Error(ErrorKind::LengthMismatch, "beta_search: weight/error lengths do not match n and m");
    if (!(goal > 0.0 && goal <= 1.0)) throw Error(ErrorKind::InvalidConfig, "beta_search: goal must lie in (0, 1]");

    double T = 0.0, S = 0.0, S0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        S += weights[i];
        if (source_errors[i] <= 0.0) S0 += weights[i];
    }
    for (std::size_t i = n; i < n + m; ++i) T += weights[i];
    if (!(T > 0.0)) throw Error(ErrorKind::GoalUnreachable, "beta_search: target rows carry no weight");

    const double current = T / (T + S);
    constexpr double kTol = 1e-8;
    if (goal < current - 1e-12)
        throw Error(ErrorKind::GoalUnreachable, "beta_search: goal " + csv::format_real(goal) +
                                                    " is below the current target mass " + csv::format_real(current));
    BetaStep step;
    if (goal - current <= 1e-12) return step;  // beta = 1
    const double neg_inf = -std::numeric_limits<double>::infinity();
    if (goal >= 1.0) {
        step.beta = 0.0;
        step.log_beta = neg_inf;
        step.zero_error_scale = 0.0;
        return step;
    }

    const double required = T * (1.0 - goal) / goal;  // source mass needed after the update
    if (S0 > required) {
        // Zero-error rows are immune to beta; shrink them directly.
        step.beta = 0.0;
        step.log_beta = neg_inf;
        step.zero_error_scale = required / S0;
        return step;
    }

    auto source_after = [&](double L) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = source_errors[i];
            s += e <= 0.0 ? weights[i] : weights[i] * std::exp(e * L);
        }
        return s;
    };
    auto mass = [&](double L) { return T / (T + source_after(L)); };

    // Bracket the root in log(beta): mass is increasing as L decreases.
    double hi = 0.0, lo = -1.0;
    while (mass(lo) < goal) {
        hi = lo;
        lo *= 2.0;
        if (lo < -1e300) break;
    }
    double L = lo;
    int it = 0;
    for (; it < 200; ++it) {
        L = 0.5 * (lo + hi);
        double f = mass(L);
        if (std::abs(f - goal) <= 1e-13) break;
        if (f < goal)
            hi = L;
        else
            lo = L;
    }
    if (std::abs(mass(L) - goal) > kTol) {
        // Rows with e close to zero can need a log(beta) beyond double range.
        if (S0 <= required && mass(neg_inf) >= goal - kTol) {
            step.beta = 0.0;
            step.log_beta = neg_inf;
            step.zero_error_scale = S0 > 0.0 ? required / S0 : 1.0;
            step.iterations = it;
            return step;
        }
        throw Error(ErrorKind::NoConvergence, "beta_search: bisection did not reach the goal mass");
    }
    step.log_beta = L;
    step.beta = std::exp(L);
    step.iterations = it;
    return step;
}

void apply_beta_step(std::vector<double>& weights, std::size_t n, std::span<const double> source_errors,
                     const BetaStep& step) {
    for (std::size_t i = 0; i < n; ++i) {
        double e = source_errors[i];
        if (e <= 0.0)
            weights[i] *= step.zero_error_scale;
        else if (step.log_beta != 0.0)
            weights[i] *= std::exp(e * step.log_beta);
    }
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
}

namespace {

struct Design {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

double cv_error(const Design& D, std::size_t n, const std::vector<std::size_t>& substitute,
                const std::vector<double>& w, const std::vector<int>& fold_of, int folds,
                const TreeParams& tree, const TransferConfig& cfg) {
    const std::size_t m = substitute.size();
    double sse = 0.0;
    std::size_t count = 0;
    for (int f = 0; f < folds; ++f) {
        std::vector<char> withheld_source(n, 0);
        std::vector<Eigen::Index> train, test;
        for (std::size_t j = 0; j < m; ++j) {
            if (fold_of[j] == f) {
                test.push_back(static_cast<Eigen::Index>(n + j));
                if (cfg.cv_exclude_twins) withheld_source[substitute[j]] = 1;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            if (!withheld_source[i]) train.push_back(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < m; ++j)
            if (fold_of[j] != f) train.push_back(static_cast<Eigen::Index>(n + j));

        Eigen::MatrixXd Xtr = D.X(train, Eigen::all);
        Eigen::VectorXd ytr = D.y(train);
        std::vector<double> wtr;
        std::vector<bool> frozen;
        for (Eigen::Index r : train) {
            wtr.push_back(w[static_cast<std::size_t>(r)]);
            frozen.push_back(static_cast<std::size_t>(r) < n);
        }
        R2Fit fit = adaboost_r2_fit(Xtr, ytr, wtr, frozen, cfg.n_estimators, tree);
        Eigen::VectorXd pred = fit.ensemble.predict(Eigen::MatrixXd(D.X(test, Eigen::all)));
        Eigen::VectorXd truth = D.y(test);
        sse += (pred - truth).squaredNorm();
        count += test.size();
    }
    return std::sqrt(sse / static_cast<double>(count));
}

}  // namespace

TransferModel two_stage_fit(const Eigen::MatrixXd& source_inputs, const Eigen::VectorXd& source_targets,
                            std::span<const std::size_t> substitute, const std::vector<std::string>& columns,
                            const TransferConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(source_inputs.rows());
    const std::size_t m = substitute.size();
    if (n == 0) throw Error(ErrorKind::EmptyInput, "two_stage_fit: no source rows");
    if (m == 0) throw Error(ErrorKind::EmptySubstitute, "two_stage_fit: empty substitute");
    if (source_targets.size() != source_inputs.rows())
        throw Error(ErrorKind::LengthMismatch, "two_stage_fit: inputs and targets differ in length");
    if (static_cast<Eigen::Index>(columns.size()) != source_inputs.cols())
        throw Error(ErrorKind::RosterMismatch, "two_stage_fit: column roster does not match inputs");
    if (static_cast<std::size_t>(cfg.folds) > m)
        throw Error(ErrorKind::InvalidConfig, "two_stage_fit: folds (" + std::to_string(cfg.folds) +
                                                  ") exceed substitute size (" + std::to_string(m) + ")");
    for (std::size_t j : substitute)
        if (j >= n) throw Error(ErrorKind::InvalidConfig, "two_stage_fit: substitute index out of range");

    TransferModel model;
    model.columns = columns;
    model.config = cfg;
    model.source_rows = n;
    model.substitute_rows = m;
    model.transform = fit_standardization(source_inputs, columns);
    const Eigen::MatrixXd Xs = model.transform.apply(source_inputs);

    Design D;
    D.X.resize(static_cast<Eigen::Index>(n + m), Xs.cols());
    D.y.resize(static_cast<Eigen::Index>(n + m));
    D.X.topRows(static_cast<Eigen::Index>(n)) = Xs;
    D.y.head(static_cast<Eigen::Index>(n)) = source_targets;
    for (std::size_t j = 0; j < m; ++j) {
        D.X.row(static_cast<Eigen::Index>(n + j)) = Xs.row(static_cast<Eigen::Index>(substitute[j]));
        D.y(static_cast<Eigen::Index>(n + j)) = source_targets(static_cast<Eigen::Index>(substitute[j]));
    }
    std::vector<bool> frozen(n + m, false);
    std::fill(frozen.begin(), frozen.begin() + static_cast<std::ptrdiff_t>(n), true);

    TreeParams tree{cfg.max_depth, cfg.min_leaf_weight.value_or(default_min_leaf_weight(n + m))};

    // Folds over substitute rows only; identical for every step.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(m);
    for (std::size_t i = 0; i < m; ++i) fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(cfg.folds));

    std::vector<double> w(n + m, 1.0 / static_cast<double>(n + m));
    std::vector<R2Ensemble> models;
    for (int t = 1; t <= cfg.steps; ++t) {
        model.substitute_mass.push_back(target_mass(w, n));
        models.push_back(adaboost_r2_fit(D.X, D.y, w, frozen, cfg.n_estimators, tree).ensemble);
        model.step_errors.push_back(cv_error(D, n, std::vector<std::size_t>(substitute.begin(), substitute.end()), w,
                                             fold_of, cfg.folds, tree, cfg));
        if (t == cfg.steps) break;

        RegressionTree probe = tree_fit(D.X, D.y, w, tree);
        std::vector<double> e = adjusted_errors(probe.predict(D.X), D.y);
        std::span<const double> e_src(e.data(), n);
        BetaStep step = beta_search(w, n, m, schedule_goal(t, cfg.steps, n, m), e_src);
        apply_beta_step(w, n, e_src, step);
    }
    auto best = std::min_element(model.step_errors.begin(), model.step_errors.end());
    model.selected_step = static_cast<int>(best - model.step_errors.begin()) + 1;
    model.ensemble = std::move(models[static_cast<std::size_t>(model.selected_step - 1)]);
    return model;
}

Eigen::VectorXd transfer_predict(const TransferModel& model, const Eigen::MatrixXd& raw_inputs,
                                 const std::vector<std::string>& columns) {
    if (columns != model.columns)
        throw Error(ErrorKind::RosterMismatch, "transfer_predict: input columns do not match the model roster");
    if (raw_inputs.rows() == 0) return Eigen::VectorXd(0);
    if (raw_inputs.cols() != static_cast<Eigen::Index>(columns.size()))
        throw Error(ErrorKind::RosterMismatch, "transfer_predict: column count mismatch");
    return model.ensemble.predict(model.transform.apply(raw_inputs));
}

}  // namespace ramp
