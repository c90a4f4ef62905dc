#include "ramp/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "ramp/csv.hpp"

namespace ramp {

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != static_cast<Eigen::Index>(means.size()))
        throw Error(ErrorKind::RosterMismatch, "standardization: column count mismatch");
    Eigen::MatrixXd X = raw;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        auto uj = static_cast<std::size_t>(j);
        X.col(j).array() = (X.col(j).array() - means[uj]) / scales[uj];
    }
    return X;
}

Standardization fit_standardization(const Eigen::MatrixXd& raw, std::vector<std::string> columns) {
    Standardization t;
    t.columns = std::move(columns);
    const auto n = raw.rows();
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        double mean = raw.col(j).mean();
        double ss = (raw.col(j).array() - mean).square().sum();
        double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        bool flat = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
        t.means.push_back(mean);
        t.scales.push_back(flat ? 1.0 : sd);
        t.zero_variance.push_back(flat);
    }
    return t;
}

Standardized standardize(const Dataset& d, const std::string& target,
                         const std::vector<std::string>& columns) {
    if (d.empty()) throw Error(ErrorKind::EmptyDataset, "standardize: dataset is empty");
    Eigen::MatrixXd raw = d.inputs(columns);
    Standardized s;
    s.transform = fit_standardization(raw, columns);
    s.X = s.transform.apply(raw);
    for (Eigen::Index j = 0; j < s.X.cols(); ++j)
        if (s.transform.zero_variance[static_cast<std::size_t>(j)]) s.X.col(j).setZero();
    s.y = d.target(target);
    s.transform.target_mean = s.y.mean();
    s.y.array() -= s.transform.target_mean;
    return s;
}

Standardized standardize(const Dataset& d, const std::string& target) {
    return standardize(d, target, d.input_names());
}

Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    if (X.rows() < 1 || X.cols() < 1) throw Error(ErrorKind::EmptyDataset, "ridge: empty design matrix");
    if (X.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "ridge: X and y row counts differ");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw Error(ErrorKind::InvalidConfig, "ridge: lambda must be a finite value >= 0");
    if (!X.allFinite() || !y.allFinite()) throw Error(ErrorKind::MalformedInput, "ridge: non-finite input");

    const auto p = X.cols();
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd b = X.transpose() * y;

    Eigen::LLT<Eigen::MatrixXd> llt(A);
    // Relative pivot test: LLT succeeds on numerically singular matrices.
    const double scale = std::max(A.diagonal().maxCoeff(), 1e-300);
    bool singular = llt.info() != Eigen::Success;
    if (!singular) {
        const Eigen::VectorXd pivots = Eigen::MatrixXd(llt.matrixL()).diagonal();
        singular = (pivots.array().square() / scale).minCoeff() < 1e-13;
    }
    if (singular)
        throw Error(ErrorKind::SingularSystem,
                    "ridge: X'X + lambda I is singular (lambda = " + csv::format_real(lambda) +
                        ", p = " + std::to_string(p) + ")");

    Eigen::VectorXd beta = llt.solve(b);
    // One refinement step keeps the system residual well below tolerance.
    Eigen::VectorXd r = b - A * beta;
    beta += llt.solve(r);
    return beta;
}

const std::vector<double>& default_lambda_grid() {
    static const std::vector<double> grid{1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
    return grid;
}

double select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<double>& grid,
                     int folds, std::uint64_t seed) {
    if (grid.empty()) throw Error(ErrorKind::InvalidConfig, "select_lambda: empty grid");
    if (folds < 2) throw Error(ErrorKind::InvalidConfig, "select_lambda: folds must be >= 2");
    const auto n = static_cast<std::size_t>(X.rows());
    if (n < static_cast<std::size_t>(folds))
        throw Error(ErrorKind::InsufficientRows, "select_lambda: " + std::to_string(n) + " rows for " +
                                                     std::to_string(folds) + " folds");
    if (grid.size() == 1) return grid.front();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

    std::vector<double> sse(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
        Eigen::MatrixXd Xtr = X(train, Eigen::all);
        Eigen::VectorXd ytr = y(train);
        Eigen::RowVectorXd xbar = Xtr.colwise().mean();
        double ybar = ytr.mean();
        Xtr.rowwise() -= xbar;
        ytr.array() -= ybar;
        Eigen::MatrixXd Xte = X(test, Eigen::all);
        Xte.rowwise() -= xbar;
        Eigen::VectorXd yte = y(test);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            Eigen::VectorXd beta = ridge_fit(Xtr, ytr, grid[g]);
            Eigen::VectorXd resid = (Xte * beta).array() + ybar - yte.array();
            sse[g] += resid.squaredNorm();
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (sse[g] < sse[best] || (sse[g] == sse[best] && grid[g] > grid[best])) best = g;
    return grid[best];
}

double RidgeModel::predict(const Eigen::VectorXd& raw_row) const {
    double out = transform.target_mean;
    for (Eigen::Index j = 0; j < raw_row.size(); ++j) {
        auto uj = static_cast<std::size_t>(j);
        if (transform.zero_variance[uj]) continue;
        out += coefficients(j) * (raw_row(j) - transform.means[uj]) / transform.scales[uj];
    }
    return out;
}

namespace {

// Fits on non-flat columns only; flat columns get exactly 0.
RidgeModel fit_standardized(Standardized s, const RidgeConfig& cfg, std::uint64_t cv_seed) {
    std::vector<Eigen::Index> live;
    for (std::size_t j = 0; j < s.transform.zero_variance.size(); ++j)
        if (!s.transform.zero_variance[j]) live.push_back(static_cast<Eigen::Index>(j));
    RidgeModel m;
    m.columns = s.transform.columns;
    m.coefficients = Eigen::VectorXd::Zero(s.X.cols());
    if (!live.empty()) {
        Eigen::MatrixXd X = s.X(Eigen::all, live);
        m.lambda = select_lambda(X, s.y, cfg.lambda_grid, cfg.folds, cv_seed);
        Eigen::VectorXd beta = ridge_fit(X, s.y, m.lambda);
        for (std::size_t k = 0; k < live.size(); ++k) m.coefficients(live[k]) = beta(static_cast<Eigen::Index>(k));
    }
    m.transform = std::move(s.transform);
    return m;
}

}  // namespace

RidgeModel fit_ridge(const Dataset& d, const std::string& target, const RidgeConfig& cfg) {
    return fit_standardized(standardize(d, target), cfg, derive_seed(cfg.seed, 0));
}

AveragedCoefficients averaged_fit(const Dataset& d, const std::string& target, const RidgeConfig& cfg) {
    if (cfg.runs < 1) throw Error(ErrorKind::InvalidConfig, "averaged_fit: runs must be >= 1");
    if (!(cfg.subsample > 0.0 && cfg.subsample <= 1.0))
        throw Error(ErrorKind::InvalidConfig, "averaged_fit: subsample must be in (0, 1]");
    if (d.empty()) throw Error(ErrorKind::EmptyDataset, "averaged_fit: dataset is empty");

    AveragedCoefficients out;
    out.target = target;
    out.columns = d.input_names();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.columns.size()));
    const std::size_t n = d.size();
    for (int run = 0; run < cfg.runs; ++run) {
        const auto run_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(run));
        Dataset sample_rows;
        if (cfg.subsample >= 1.0) {
            sample_rows = d;
        } else {
            std::size_t k = std::max<std::size_t>(static_cast<std::size_t>(cfg.folds),
                                                  static_cast<std::size_t>(std::llround(cfg.subsample * n)));
            k = std::min(k, n);
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::mt19937_64 rng(derive_seed(run_seed, 1));
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(k);
            std::sort(idx.begin(), idx.end());
            sample_rows = d.select_rows(idx);
        }
        RidgeModel m = fit_standardized(standardize(sample_rows, target), cfg, run_seed);
        sum += m.coefficients;
        out.lambdas.push_back(m.lambda);
    }
    sum /= static_cast<double>(cfg.runs);
    out.coefficients.assign(sum.data(), sum.data() + sum.size());
    return out;
}

ThresholdMap default_thresholds() {
    return {{TargetKind::Speed, 0.5}, {TargetKind::Occupancy, 0.5}, {TargetKind::Flow, 50.0}};
}

const TargetSelection* SelectionResult::find(const std::string& target) const {
    for (const auto& t : targets)
        if (t.target == target) return &t;
    return nullptr;
}

SelectionResult filter_variables(const std::vector<AveragedCoefficients>& coeffs, const ThresholdMap& thresholds) {
    SelectionResult result;
    for (const auto& c : coeffs) {
        TargetKind kind = target_kind(c.target);
        auto it = thresholds.find(kind);
        if (it == thresholds.end())
            throw Error(ErrorKind::InvalidConfig, "no threshold for target kind " + std::string(to_string(kind)));
        if (!(it->second >= 0.0))
            throw Error(ErrorKind::InvalidConfig, "thresholds must be non-negative");
        TargetSelection sel;
        sel.target = c.target;
        sel.columns = c.columns;
        sel.coefficients = c.coefficients;
        sel.threshold = it->second;
        for (std::size_t j = 0; j < c.columns.size(); ++j)
            if (std::abs(c.coefficients[j]) > sel.threshold) sel.selected.push_back(c.columns[j]);
        if (sel.selected.empty()) {
            sel.fallback = true;
            sel.selected = c.columns;
            result.warnings.push_back("no variable passed threshold " + csv::format_real(sel.threshold) +
                                      " for " + c.target + "; keeping all variables");
        }
        result.targets.push_back(std::move(sel));
    }
    return result;
}

void write_coefficient_table(std::ostream& out, const SelectionResult& s) {
    if (s.targets.empty()) return;
    const auto& columns = s.targets.front().columns;
    out << "variable";
    for (const auto& t : s.targets) out << ',' << t.target << ',' << t.target << "_selected";
    out << '\n';
    for (std::size_t j = 0; j < columns.size(); ++j) {
        out << columns[j];
        for (const auto& t : s.targets) {
            auto pos = std::find(t.columns.begin(), t.columns.end(), columns[j]);
            if (pos == t.columns.end()) {
                out << ",,";
                continue;
            }
            auto k = static_cast<std::size_t>(pos - t.columns.begin());
            bool selected = std::find(t.selected.begin(), t.selected.end(), columns[j]) != t.selected.end();
            out << ',' << csv::format_real(t.coefficients[k]) << ',' << (selected ? 1 : 0);
        }
        out << '\n';
    }
}

std::string selection_to_json(const SelectionResult& s) {
    nlohmann::json j;
    j["targets"] = nlohmann::json::array();
    for (const auto& t : s.targets) {
        j["targets"].push_back({{"target", t.target},
                                {"columns", t.columns},
                                {"coefficients", t.coefficients},
                                {"threshold", t.threshold},
                                {"selected", t.selected},
                                {"fallback", t.fallback}});
    }
    j["warnings"] = s.warnings;
    return j.dump(2);
}

SelectionResult selection_from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        SelectionResult s;
        for (const auto& jt : j.at("targets")) {
            TargetSelection t;
            t.target = jt.at("target").get<std::string>();
            t.columns = jt.at("columns").get<std::vector<std::string>>();
            t.coefficients = jt.at("coefficients").get<std::vector<double>>();
            t.threshold = jt.at("threshold").get<double>();
            t.selected = jt.at("selected").get<std::vector<std::string>>();
            t.fallback = jt.value("fallback", false);
            s.targets.push_back(std::move(t));
        }
        s.warnings = j.value("warnings", std::vector<std::string>{});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("selection json: ") + e.what());
    }
}

}  // namespace ramp
