#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "ramp/ridge.hpp"

using namespace ramp;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& target = "After_up_mean_speed") {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < X.cols(); ++j) names.push_back("x" + std::to_string(j));
    Dataset d(names, {target});
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        FeatureRow row;
        row.section = SectionId("S");
        row.key = TimeKey::from_slot_index(static_cast<int>(i));
        for (Eigen::Index j = 0; j < X.cols(); ++j) row.inputs.push_back(X(i, j));
        row.targets.push_back(y(i));
        d.add_row(std::move(row));
    }
    return d;
}

double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& b, double lambda) {
    return (y - X * b).squaredNorm() + lambda * b.squaredNorm();
}

AveragedCoefficients coeffs(const std::string& target, std::vector<std::string> cols, std::vector<double> values) {
    AveragedCoefficients c;
    c.target = target;
    c.columns = std::move(cols);
    c.coefficients = std::move(values);
    return c;
}

}  // namespace

TEST_CASE("standardize uses the sample standard deviation") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 5, 2, 5, 3, 5;
    Eigen::VectorXd y(3);
    y << 10, 20, 30;
    Standardized s = standardize(make_dataset(X, y), "After_up_mean_speed");
    CHECK(s.X(0, 0) == doctest::Approx(-1.0));
    CHECK(s.X(1, 0) == doctest::Approx(0.0));
    CHECK(s.X(2, 0) == doctest::Approx(1.0));
    CHECK(s.X.col(1).isZero());
    CHECK(s.transform.zero_variance[1]);
    CHECK_FALSE(s.transform.zero_variance[0]);
    CHECK(s.transform.scales[1] == 1.0);
    CHECK(s.transform.target_mean == doctest::Approx(20.0));
    CHECK(s.y(0) == doctest::Approx(-10.0));
    CHECK(s.y(2) == doctest::Approx(10.0));
    CHECK_THROWS_AS(standardize(Dataset({"x0"}, {"After_up_mean_speed"}), "After_up_mean_speed"), Error);
}

TEST_CASE("one-column ridge matches its closed form") {
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    Eigen::VectorXd y(2);
    y << 1, 2;
    CHECK(ridge_fit(X, y, 5.0)(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ridge_fit(X, y, 0.0)(0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ridge at lambda zero equals ordinary least squares") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd X = oracle::random_matrix(rng, 30, 4);
        Eigen::VectorXd y = oracle::random_matrix(rng, 30, 1).col(0);
        auto ref = oracle::ols(oracle::to_rows(X), std::vector<double>(y.data(), y.data() + y.size()));
        Eigen::VectorXd b = ridge_fit(X, y, 0.0);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(b(j) - ref[static_cast<std::size_t>(j)]) < 1e-8);
    }
}

TEST_CASE("ridge agrees with a gradient-descent oracle on random problems") {
    std::mt19937_64 rng(2024);
    for (double lambda : {0.1, 1.0, 10.0}) {
        Eigen::MatrixXd X = oracle::random_matrix(rng, 20, 5);
        Eigen::VectorXd y = oracle::random_matrix(rng, 20, 1).col(0);
        auto ref = oracle::ridge_gradient_descent(oracle::to_rows(X), std::vector<double>(y.data(), y.data() + 20),
                                                  lambda);
        Eigen::VectorXd b = ridge_fit(X, y, lambda);
        for (int j = 0; j < 5; ++j) CHECK(std::abs(b(j) - ref[static_cast<std::size_t>(j)]) < 1e-6);
    }
}

TEST_CASE("ridge solution satisfies its normal equations and minimizes the objective") {
    std::mt19937_64 rng(5);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 40, 6);
    Eigen::VectorXd y = oracle::random_matrix(rng, 40, 1).col(0) * 30.0;
    const double lambda = 2.5;
    Eigen::VectorXd b = ridge_fit(X, y, lambda);
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = X.transpose() * y;
    CHECK((A * b - rhs).norm() <= 1e-8 * rhs.norm());
    const double base = objective(X, y, b, lambda);
    std::normal_distribution<double> z;
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd d(6);
        for (int j = 0; j < 6; ++j) d(j) = z(rng);
        d *= 1e-4 / d.norm();
        CHECK(objective(X, y, b + d, lambda) >= base - 1e-10);
    }
}

TEST_CASE("coefficient norm shrinks as lambda grows") {
    std::mt19937_64 rng(8);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 8, 4);
    Eigen::VectorXd truth(4);
    truth << 3, -2, 1, 0.5;
    Eigen::VectorXd y = X * truth + 0.1 * oracle::random_matrix(rng, 8, 1).col(0);
    double prev = INFINITY, first = 0.0, last = 0.0;
    for (double lambda : {0.0, 0.1, 1.0, 10.0, 100.0, 1e4}) {
        const double norm = ridge_fit(X, y, lambda).norm();
        CHECK(norm <= prev);
        if (lambda == 0.0) first = norm;
        last = norm;
        prev = norm;
    }
    CHECK(last <= 1e-3 * first);
    CHECK(ridge_fit(X, y, 1e12).norm() <= 1e-6);
}

TEST_CASE("rank-deficient design at lambda zero is reported") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 2, 2, 4, 3, 6, 4, 8;
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 4;
    try {
        ridge_fit(X, y, 0.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularSystem);
    }
    CHECK_NOTHROW(ridge_fit(X, y, 0.1));
    CHECK_THROWS_AS(ridge_fit(X, y, -1.0), Error);
}

TEST_CASE("lambda selection returns singletons and prefers small lambda on exact data") {
    Eigen::MatrixXd X(20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = i - 9.5;
        y(i) = 2.0 * X(i, 0);
    }
    CHECK(select_lambda(X, y, {3.0}, 5, 0) == 3.0);
    CHECK(select_lambda(X, y, default_lambda_grid(), 5, 0) == 1e-3);
    // Held-out error of the one-column closed form on a fixed split rises with lambda.
    double prev = -1.0;
    for (double lambda : default_lambda_grid()) {
        double sxy = 0.0, sxx = 0.0, mse = 0.0;
        for (int i = 0; i < 20; ++i)
            if (i % 5 != 0) {
                sxy += X(i, 0) * y(i);
                sxx += X(i, 0) * X(i, 0);
            }
        const double b = sxy / (sxx + lambda);
        for (int i = 0; i < 20; i += 5) mse += (y(i) - b * X(i, 0)) * (y(i) - b * X(i, 0));
        CHECK(mse > prev);
        prev = mse;
    }
    std::vector<double> grid = default_lambda_grid();
    std::reverse(grid.begin(), grid.end());
    CHECK(select_lambda(X, y, grid, 5, 0) == 1e-3);
    try {
        select_lambda(X.topRows(3), y.head(3), default_lambda_grid(), 5, 0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientRows);
    }
}

TEST_CASE("lambda selection breaks ties toward the larger value") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(10, 1);
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 9);
    CHECK(select_lambda(X, y, {0.5, 1.0, 2.0}, 5, 3) == 2.0);
}

TEST_CASE("averaged fit with one full run equals a single fit") {
    std::mt19937_64 rng(31);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 60, 3);
    Eigen::VectorXd y = X.col(0) * 4.0 - X.col(2) + oracle::random_matrix(rng, 60, 1).col(0);
    Dataset d = make_dataset(X, y);
    RidgeConfig cfg;
    cfg.runs = 1;
    cfg.subsample = 1.0;
    cfg.seed = 77;
    AveragedCoefficients a = averaged_fit(d, "After_up_mean_speed", cfg);
    Standardized s = standardize(d, "After_up_mean_speed");
    Eigen::VectorXd b = ridge_fit(s.X, s.y, a.lambdas.front());
    for (int j = 0; j < 3; ++j) CHECK(a.coefficients[static_cast<std::size_t>(j)] == doctest::Approx(b(j)).epsilon(1e-12));
}

TEST_CASE("averaged fit is bit-identical for a fixed seed") {
    std::mt19937_64 rng(32);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 84, 5);
    Eigen::VectorXd y = X * Eigen::VectorXd::LinSpaced(5, -2, 2) + oracle::random_matrix(rng, 84, 1).col(0);
    Dataset d = make_dataset(X, y);
    RidgeConfig cfg;
    cfg.seed = 9;
    auto a = averaged_fit(d, "After_up_mean_speed", cfg);
    auto b = averaged_fit(d, "After_up_mean_speed", cfg);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.lambdas == b.lambdas);
    CHECK(a.lambdas.size() == 10);
    cfg.runs = 0;
    CHECK_THROWS_AS(averaged_fit(d, "After_up_mean_speed", cfg), Error);
}

TEST_CASE("zero-variance columns get an exact zero coefficient") {
    std::mt19937_64 rng(33);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 40, 3);
    X.col(1).setConstant(7.0);
    Eigen::VectorXd y = 5.0 * X.col(0);
    RidgeModel m = fit_ridge(make_dataset(X, y), "After_up_mean_speed", RidgeConfig{});
    CHECK(m.coefficients(1) == 0.0);
    Eigen::VectorXd row = X.row(3).transpose();
    CHECK(m.predict(row) == doctest::Approx(y(3)).epsilon(1e-2));
}

TEST_CASE("speed coefficients 1.98, -0.02 and 0.41 at threshold 0.5 keep only the first") {
    auto r = filter_variables({coeffs("After_up_mean_speed",
                                      {"Before_up_mean_speed", "Before_ramp_mean_speed", "Before_ramp_density"},
                                      {1.98, -0.02, 0.41})},
                              default_thresholds());
    REQUIRE(r.targets.size() == 1);
    CHECK(r.targets[0].selected == std::vector<std::string>{"Before_up_mean_speed"});
    CHECK_FALSE(r.targets[0].fallback);
    CHECK(r.warnings.empty());
}

TEST_CASE("default thresholds are 0.5, 0.5 and 50") {
    auto t = default_thresholds();
    CHECK(t.at(TargetKind::Speed) == 0.5);
    CHECK(t.at(TargetKind::Occupancy) == 0.5);
    CHECK(t.at(TargetKind::Flow) == 50.0);
}

TEST_CASE("selection is strict, supports zero thresholds and falls back when empty") {
    auto c = coeffs("After_up_flow", {"a", "b", "c"}, {50.0, -50.5, 10.0});
    auto r = filter_variables({c}, default_thresholds());
    CHECK(r.targets[0].selected == std::vector<std::string>{"b"});

    ThresholdMap zero{{TargetKind::Speed, 0.0}, {TargetKind::Occupancy, 0.0}, {TargetKind::Flow, 0.0}};
    auto all = filter_variables({coeffs("After_up_occupancy", {"a", "b"}, {0.1, -0.2})}, zero);
    CHECK(all.targets[0].selected.size() == 2);
    CHECK_FALSE(all.targets[0].fallback);

    auto none = filter_variables({coeffs("After_up_occupancy", {"a", "b"}, {0.1, -0.2})}, default_thresholds());
    CHECK(none.targets[0].fallback);
    CHECK(none.targets[0].selected.size() == 2);
    CHECK(none.warnings.size() == 1);
}

TEST_CASE("selection does not depend on coefficient table order") {
    std::vector<std::string> cols{"a", "b", "c", "d", "e"};
    std::vector<double> vals{0.7, -0.1, 2.0, -0.9, 0.5};
    auto base = filter_variables({coeffs("After_up_mean_speed", cols, vals)}, default_thresholds());
    std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    std::vector<std::string> pc;
    std::vector<double> pv;
    for (auto i : perm) {
        pc.push_back(cols[i]);
        pv.push_back(vals[i]);
    }
    auto shuffled = filter_variables({coeffs("After_up_mean_speed", pc, pv)}, default_thresholds());
    auto a = base.targets[0].selected, b = shuffled.targets[0].selected;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(a == std::vector<std::string>{"a", "c", "d"});
}

TEST_CASE("selection JSON and coefficient table round-trip") {
    auto r = filter_variables({coeffs("After_up_mean_speed", {"a", "b"}, {1.98, 0.41}),
                               coeffs("After_up_flow", {"a", "b"}, {120.0, 3.0})},
                              default_thresholds());
    auto back = selection_from_json(selection_to_json(r));
    REQUIRE(back.targets.size() == 2);
    CHECK(back.find("After_up_flow")->selected == std::vector<std::string>{"a"});
    CHECK(back.find("After_up_mean_speed")->coefficients == std::vector<double>{1.98, 0.41});
    CHECK(back.find("nope") == nullptr);
    std::ostringstream table;
    write_coefficient_table(table, r);
    CHECK(table.str().find("1.98") != std::string::npos);
    CHECK(table.str().rfind("variable", 0) == 0);
}
