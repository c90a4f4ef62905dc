#include "ramp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace ramp {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw Error(ErrorKind::LengthMismatch, "metrics: y and prediction lengths differ");
    if (y.empty()) throw Error(ErrorKind::EmptyInput, "metrics: no observations");
}

// Runs fn(i) for i in [0, count) on at most `jobs` threads. The first
// exception by index is rethrown after all workers finish.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    std::vector<std::exception_ptr> errors(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Dataset canonical_order(const Dataset& d) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto& rows = d.rows();
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a].section != rows[b].section) return rows[a].section < rows[b].section;
        return rows[a].key < rows[b].key;
    });
    return d.select_rows(idx);
}

struct PreparedFold {
    SectionId section;
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
    Eigen::MatrixXd Xs, Xt;
    Eigen::VectorXd ys, yt;
    std::optional<Substitute> substitute;
};

std::vector<std::string> fold_columns(const Dataset& train, const std::string& target, const EvalConfig& cfg,
                                     std::uint64_t seed) {
    if (cfg.columns) return *cfg.columns;
    RidgeConfig rc = cfg.ridge;
    rc.seed = derive_seed(seed, 1);
    SelectionResult sel = filter_variables({averaged_fit(train, target, rc)}, cfg.thresholds);
    return sel.targets.front().selected;
}

PreparedFold prepare_fold(const Dataset& d, const SectionId& s, const std::string& target, const EvalConfig& cfg,
                          std::uint64_t run_seed, bool need_substitute) {
    PreparedFold f;
    f.section = s;
    f.seed = derive_seed(run_seed, fnv1a(s.str()));
    Dataset train = d.where_section(s, false);
    Dataset test = d.where_section(s, true);
    f.columns = fold_columns(train, target, cfg, f.seed);
    f.Xs = train.inputs(f.columns);
    f.ys = train.target(target);
    f.Xt = test.inputs(f.columns);
    f.yt = test.target(target);
    if (need_substitute) {
        if (cfg.transfer.substitute_all_inputs)
            f.substitute = build_substitute(train.inputs(d.input_names()), test.inputs(d.input_names()),
                                            cfg.transfer.theta, cfg.transfer.comparator);
        else
            f.substitute = build_substitute(f.Xs, f.Xt, cfg.transfer.theta, cfg.transfer.comparator);
    }
    return f;
}

FoldResult run_model(const PreparedFold& f, const std::string& target, const ModelSpec& spec, const EvalConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    FoldResult r;
    r.section = f.section;
    r.target = target;
    r.model = spec.label();
    r.rows = static_cast<std::size_t>(f.yt.size());
    r.columns = f.columns;
    Eigen::VectorXd pred;
    switch (spec.kind) {
    case ModelKind::Transfer: {
        TransferConfig tc = cfg.transfer;
        tc.max_depth = spec.max_depth;
        tc.n_estimators = spec.n_estimators;
        tc.seed = f.seed;
        TransferModel m = two_stage_fit(f.Xs, f.ys, f.substitute->indices, f.columns, tc);
        pred = transfer_predict(m, f.Xt, f.columns);
        r.selected_step = m.selected_step;
        break;
    }
    case ModelKind::AdaBoost: {
        Standardization t = fit_standardization(f.Xs, f.columns);
        const auto n = static_cast<std::size_t>(f.Xs.rows());
        std::vector<double> w(n, 1.0 / static_cast<double>(n));
        std::vector<bool> frozen(n, false);
        TreeParams tp{spec.max_depth, cfg.transfer.min_leaf_weight.value_or(default_min_leaf_weight(n))};
        R2Fit fit = adaboost_r2_fit(t.apply(f.Xs), f.ys, w, frozen, spec.n_estimators, tp);
        pred = fit.ensemble.predict(t.apply(f.Xt));
        break;
    }
    case ModelKind::Knn:
        pred = knn_fit(f.Xs, f.ys, spec.k).predict(f.Xt);
        break;
    }
    r.metrics = score(std::span<const double>(f.yt.data(), static_cast<std::size_t>(f.yt.size())),
                      std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())));
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

bool any_transfer(const std::vector<ModelSpec>& models) {
    return std::any_of(models.begin(), models.end(), [](const ModelSpec& m) { return m.kind == ModelKind::Transfer; });
}

// results[run][fold][model] averaged over runs.
std::vector<FoldResult> average_runs(const std::vector<std::vector<FoldResult>>& runs) {
    std::vector<FoldResult> out = runs.front();
    const double count = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double a = 0, b = 0, c = 0, secs = 0;
        bool have_mape = true;
        for (const auto& run : runs) {
            a += run[i].metrics.mae;
            b += run[i].metrics.rmse;
            if (run[i].metrics.mape)
                c += *run[i].metrics.mape;
            else
                have_mape = false;
            secs += run[i].seconds;
        }
        out[i].metrics.mae = a / count;
        out[i].metrics.rmse = b / count;
        out[i].metrics.mape = have_mape ? std::optional<double>(c / count) : std::nullopt;
        out[i].seconds = secs;
    }
    return out;
}

std::vector<FoldResult> evaluate_sections(const Dataset& sorted, const std::vector<SectionId>& sections,
                                          const std::string& target, const std::vector<ModelSpec>& models,
                                          const EvalConfig& cfg) {
    if (cfg.runs < 1) throw Error(ErrorKind::InvalidConfig, "evaluate: runs must be >= 1");
    if (models.empty()) throw Error(ErrorKind::InvalidConfig, "evaluate: no models");
    if (!sorted.target_index(target)) throw Error(ErrorKind::RosterMismatch, "evaluate: unknown target " + target);
    const bool need_sub = any_transfer(models);
    std::vector<std::vector<FoldResult>> runs;
    for (int run = 0; run < cfg.runs; ++run) {
        const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
        std::vector<PreparedFold> folds(sections.size());
        parallel_for(sections.size(), cfg.jobs, [&](std::size_t i) {
            folds[i] = prepare_fold(sorted, sections[i], target, cfg, run_seed, need_sub);
        });
        std::vector<FoldResult> results(sections.size() * models.size());
        parallel_for(results.size(), cfg.jobs, [&](std::size_t i) {
            results[i] = run_model(folds[i / models.size()], target, models[i % models.size()], cfg);
        });
        runs.push_back(std::move(results));
    }
    return average_runs(runs);
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(yhat[i] - y[i]);
    return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (yhat[i] - y[i]) * (yhat[i] - y[i]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

MapeResult mape(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat);
    MapeResult r;
    double s = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::abs(y[i]) < 1e-9) {
            ++r.skipped;
            continue;
        }
        s += std::abs((yhat[i] - y[i]) / y[i]);
        ++used;
    }
    if (used == 0) throw Error(ErrorKind::AllTargetsZero, "mape: every target is zero");
    r.percent = 100.0 * s / static_cast<double>(used);
    return r;
}

Metrics score(std::span<const double> y, std::span<const double> yhat) {
    Metrics m;
    m.mae = mae(y, yhat);
    m.rmse = rmse(y, yhat);
    try {
        MapeResult p = mape(y, yhat);
        m.mape = p.percent;
        m.mape_skipped = p.skipped;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllTargetsZero) throw;
        m.mape_skipped = y.size();
    }
    return m;
}

KnnModel knn_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int k) {
    if (X.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "knn: X and y row counts differ");
    if (k < 1) throw Error(ErrorKind::InvalidConfig, "knn: k must be >= 1");
    if (k > X.rows())
        throw Error(ErrorKind::KTooLarge, "knn: k = " + std::to_string(k) + " exceeds " + std::to_string(X.rows()) +
                                              " training rows");
    KnnModel m;
    m.transform = fit_standardization(X, {});
    m.X = m.transform.apply(X);
    m.y = y;
    m.k = k;
    return m;
}

double KnnModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& raw_row) const {
    Eigen::MatrixXd q = transform.apply(Eigen::MatrixXd(raw_row));
    const Eigen::RowVectorXd row = q.row(0);
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) dist[static_cast<std::size_t>(i)] = {(X.row(i) - row).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += y(dist[static_cast<std::size_t>(i)].second);
    return s / k;
}

Eigen::VectorXd KnnModel::predict(const Eigen::MatrixXd& raw) const {
    Eigen::VectorXd out(raw.rows());
    for (Eigen::Index r = 0; r < raw.rows(); ++r) out(r) = predict_row(raw.row(r));
    return out;
}

std::string_view to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Transfer: return "TRA";
    case ModelKind::AdaBoost: return "ADA";
    case ModelKind::Knn: return "KNN";
    }
    return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
    if (text == "TRA" || text == "tra") return ModelKind::Transfer;
    if (text == "ADA" || text == "ada") return ModelKind::AdaBoost;
    if (text == "KNN" || text == "knn") return ModelKind::Knn;
    return std::nullopt;
}

std::string ModelSpec::label() const { return std::string(to_string(kind)); }

void MetricReport::normalize() {
    std::stable_sort(folds.begin(), folds.end(), [](const FoldResult& a, const FoldResult& b) {
        return std::tie(a.target, a.model, a.section) < std::tie(b.target, b.model, b.section);
    });
}

MetricReport loso_cv(const Dataset& d, const std::string& target, const std::vector<ModelSpec>& models,
                     const EvalConfig& cfg) {
    std::vector<SectionId> sections = d.sections();
    if (sections.size() < 2)
        throw Error(ErrorKind::TooFewSections, "loso_cv: need at least 2 sections, found " +
                                                   std::to_string(sections.size()));
    Dataset sorted = canonical_order(d);
    MetricReport rep;
    rep.seed = cfg.seed;
    rep.folds = evaluate_sections(sorted, sections, target, models, cfg);
    rep.normalize();
    return rep;
}

std::vector<FoldResult> holdout_eval(const Dataset& d, const SectionId& held_out, const std::string& target,
                                     const std::vector<ModelSpec>& models, const EvalConfig& cfg) {
    std::vector<SectionId> sections = d.sections();
    if (sections.size() < 2) throw Error(ErrorKind::TooFewSections, "holdout_eval: need at least 2 sections");
    if (std::find(sections.begin(), sections.end(), held_out) == sections.end())
        throw Error(ErrorKind::InvalidConfig, "holdout_eval: unknown section " + held_out.str());
    return evaluate_sections(canonical_order(d), {held_out}, target, models, cfg);
}

void GridSpec::validate() const {
    if (max_depth.empty() || n_estimators.empty() || n_neighbors.empty())
        throw Error(ErrorKind::InvalidConfig, "grid: every hyperparameter list must be non-empty");
}

std::vector<ModelSpec> GridSpec::combinations(ModelKind kind) const {
    std::vector<ModelSpec> out;
    if (kind == ModelKind::Knn) {
        std::vector<int> ks = n_neighbors;
        std::sort(ks.begin(), ks.end());
        for (int k : ks) out.push_back({kind, 0, 0, k});
        return out;
    }
    std::vector<int> depths = max_depth, counts = n_estimators;
    std::sort(depths.begin(), depths.end());
    std::sort(counts.begin(), counts.end());
    for (int dpt : depths)
        for (int n : counts) out.push_back({kind, dpt, n, 0});
    return out;
}

GridResult grid_search(const Dataset& d, const std::string& target, ModelKind kind, const GridSpec& grid,
                       const EvalConfig& cfg, std::optional<std::size_t> budget) {
    grid.validate();
    std::vector<ModelSpec> combos = grid.combinations(kind);
    if (budget) {
        if (*budget == 0) throw Error(ErrorKind::InvalidConfig, "grid: budget must be >= 1");
        if (*budget < combos.size()) {
            std::vector<std::size_t> idx(combos.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::mt19937_64 rng(derive_seed(cfg.seed, 0xb0d6e7));
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(*budget);
            std::sort(idx.begin(), idx.end());
            std::vector<ModelSpec> kept;
            for (std::size_t i : idx) kept.push_back(combos[i]);
            combos = std::move(kept);
        }
    }
    std::vector<SectionId> sections = d.sections();
    if (sections.size() < 2) throw Error(ErrorKind::TooFewSections, "grid_search: need at least 2 sections");
    Dataset sorted = canonical_order(d);
    if (!sorted.target_index(target)) throw Error(ErrorKind::RosterMismatch, "grid_search: unknown target " + target);

    GridResult res;
    res.kind = kind;
    res.sections = sections;
    res.table.resize(combos.size());
    for (std::size_t c = 0; c < combos.size(); ++c) {
        res.table[c].spec = combos[c];
        res.table[c].fold_mae.assign(sections.size(), 0.0);
    }
    for (int run = 0; run < std::max(1, cfg.runs); ++run) {
        const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
        std::vector<PreparedFold> folds(sections.size());
        parallel_for(sections.size(), cfg.jobs, [&](std::size_t i) {
            folds[i] = prepare_fold(sorted, sections[i], target, cfg, run_seed, kind == ModelKind::Transfer);
        });
        std::mutex mu;
        parallel_for(combos.size() * sections.size(), cfg.jobs, [&](std::size_t i) {
            const std::size_t c = i / sections.size(), s = i % sections.size();
            FoldResult r = run_model(folds[s], target, combos[c], cfg);
            std::lock_guard lock(mu);
            res.table[c].fold_mae[s] += r.metrics.mae / std::max(1, cfg.runs);
        });
    }
    for (GridPoint& g : res.table)
        g.mean_mae = std::accumulate(g.fold_mae.begin(), g.fold_mae.end(), 0.0) / static_cast<double>(sections.size());
    // Table order already encodes the tie-breaks, so the first strict minimum wins.
    res.best = res.table.front();
    for (const GridPoint& g : res.table)
        if (g.mean_mae < res.best.mean_mae) res.best = g;
    return res;
}

}  // namespace ramp
