#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ramp/transfer.hpp"

using namespace ramp;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

TransferConfig small_config() {
    TransferConfig c;
    c.steps = 4;
    c.folds = 3;
    c.n_estimators = 8;
    c.max_depth = 3;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("cosine similarity of simple vectors") {
    Eigen::RowVectorXd a(2), b(2), c(2);
    a << 1, 0;
    b << 0, 1;
    c << 2, 0;
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, -c) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, Eigen::RowVectorXd::Zero(2)) == 0.0);
}

TEST_CASE("orthogonal source rows qualify for any non-negative threshold") {
    // Standardized by source statistics the rows become (+-0.707, 0); the
    // target row stays (0, 1), so every similarity is 0.
    Eigen::MatrixXd S(2, 2), T(1, 2);
    S << 1, 0, -1, 0;
    T << 0, 1;
    Substitute sub = build_substitute(S, T, 0.0);
    CHECK(sub.indices == std::vector<std::size_t>{0, 1});
    CHECK(sub.similarity[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(build_substitute(S, T, 0.5).indices.size() == 2);
    try {
        build_substitute(S, T, -0.5);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptySubstitute);
        CHECK(std::string(e.what()).find("theta") != std::string::npos);
    }
}

TEST_CASE("a source row identical to a target row qualifies only at theta 1") {
    Eigen::MatrixXd S(3, 2), T(1, 2);
    S << 1, 2, 3, 1, 2, 5;
    T << 1, 2;
    Substitute strict = build_substitute(S, T, 0.999);
    CHECK(std::find(strict.indices.begin(), strict.indices.end(), 0) == strict.indices.end());
    Substitute all = build_substitute(S, T, 1.0);
    CHECK(all.indices == std::vector<std::size_t>{0, 1, 2});
    CHECK(all.similarity[0] == doctest::Approx(1.0));
}

TEST_CASE("theta 1 admits every source row") {
    std::mt19937_64 rng(1);
    Eigen::MatrixXd S = oracle::random_matrix(rng, 50, 4), T = oracle::random_matrix(rng, 10, 4);
    CHECK(build_substitute(S, T, 1.0).indices.size() == 50);
}

TEST_CASE("similarity is the maximum over target rows and the comparator flips membership") {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd S = oracle::random_matrix(rng, 40, 3), T = oracle::random_matrix(rng, 6, 3);
    Substitute le = build_substitute(S, T, 0.8, SubstituteComparator::LessEqual);
    // Recompute similarities independently with source standardization.
    Eigen::RowVectorXd mean = S.colwise().mean();
    Eigen::RowVectorXd sd = ((S.rowwise() - mean).array().square().colwise().sum() / 39.0).sqrt();
    std::vector<std::size_t> expect_le, expect_ge;
    for (int j = 0; j < 40; ++j) {
        Eigen::RowVectorXd a = (S.row(j) - mean).cwiseQuotient(sd);
        double best = -1.0;
        for (int i = 0; i < 6; ++i) {
            Eigen::RowVectorXd b = (T.row(i) - mean).cwiseQuotient(sd);
            best = std::max(best, a.dot(b) / (a.norm() * b.norm()));
        }
        CHECK(le.similarity[static_cast<std::size_t>(j)] == doctest::Approx(best).epsilon(1e-12));
        if (best <= 0.8) expect_le.push_back(static_cast<std::size_t>(j));
        if (best >= 0.8) expect_ge.push_back(static_cast<std::size_t>(j));
    }
    CHECK(le.indices == expect_le);
    CHECK(build_substitute(S, T, 0.8, SubstituteComparator::GreaterEqual).indices == expect_ge);
    CHECK(parse_comparator("le") == SubstituteComparator::LessEqual);
    CHECK(parse_comparator("ge") == SubstituteComparator::GreaterEqual);
    CHECK_FALSE(parse_comparator("lt"));
    CHECK(to_string(SubstituteComparator::GreaterEqual) == "ge");
}

TEST_CASE("beta search solves the one-source one-target case") {
    std::vector<double> w{0.5, 0.5}, e{1.0};
    BetaStep s = beta_search(w, 1, 1, 0.75, e);
    CHECK(s.beta == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
    CHECK(s.zero_error_scale == 1.0);
    std::vector<double> v = w;
    apply_beta_step(v, 1, e, s);
    CHECK(target_mass(v, 1) == doctest::Approx(0.75).epsilon(1e-8));
    CHECK(v[0] + v[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("beta search endpoints") {
    std::vector<double> w{0.25, 0.25, 0.25, 0.25}, e{0.3, 1.0, 0.6};
    BetaStep same = beta_search(w, 3, 1, 0.25, e);
    CHECK(same.beta == 1.0);
    BetaStep full = beta_search(w, 3, 1, 1.0, e);
    CHECK(full.beta == 0.0);
    std::vector<double> v = w;
    apply_beta_step(v, 3, e, full);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 0.0);
    CHECK(v[3] == 1.0);
}

TEST_CASE("a goal below the current target mass is a contract violation") {
    std::vector<double> w{0.2, 0.8}, e{0.5};
    try {
        beta_search(w, 1, 1, 0.5, e);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::GoalUnreachable);
    }
}

TEST_CASE("beta search reaches random goals to within 1e-8") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 30, m = 1 + trial % 7;
        std::vector<double> w(n + m), e(n);
        double total = 0.0;
        for (double& x : w) total += (x = 0.1 + u(rng));
        for (double& x : w) x /= total;
        for (double& x : e) x = u(rng);
        if (trial % 5 == 0) e[0] = 0.0;
        const double current = target_mass(w, n);
        const double goal = current + (1.0 - current) * u(rng);
        BetaStep s = beta_search(w, n, m, goal, e);
        CHECK(s.beta >= 0.0);
        CHECK(s.beta <= 1.0);
        apply_beta_step(w, n, e, s);
        CHECK(std::abs(target_mass(w, n) - goal) <= 1e-8);
        double sum = 0.0;
        for (double x : w) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("a goal out of reach by beta alone is met by scaling zero-error rows") {
    // Source errors are all zero, so beta^e = 1 for every beta.
    std::vector<double> w{0.3, 0.3, 0.4}, e{0.0, 0.0};
    BetaStep s = beta_search(w, 2, 1, 0.8, e);
    CHECK(s.zero_error_scale < 1.0);
    apply_beta_step(w, 2, e, s);
    CHECK(target_mass(w, 2) == doctest::Approx(0.8).epsilon(1e-8));
}

TEST_CASE("schedule goals follow the printed formula and clamp to one") {
    // S = 2 and m / (n + m) = 0.2: goal(1) = 0.2 + 1 * 0.8 = 1.
    CHECK(schedule_goal(1, 2, 4, 1) == doctest::Approx(1.0));
    CHECK(schedule_goal(2, 2, 4, 1) == 1.0);
    const double base = 100.0 / 300.0;
    for (int t = 1; t <= 10; ++t) {
        const double expect = std::min(1.0, base + (t / 9.0) * (1.0 - base));
        CHECK(schedule_goal(t, 10, 200, 100) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK(schedule_goal(9, 10, 200, 100) == doctest::Approx(1.0));
}

TEST_CASE("config validation") {
    TransferConfig c;
    CHECK_NOTHROW(c.validate());
    c.steps = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.folds = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.theta = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(TransferConfig{}.steps == 10);
    CHECK(TransferConfig{}.folds == 5);
}

TEST_CASE("two-stage fit records substitute mass on the schedule") {
    std::mt19937_64 rng(7);
    const int n = 60;
    Eigen::MatrixXd X = oracle::random_matrix(rng, n, 2);
    Eigen::VectorXd y = 3.0 * X.col(0) - X.col(1) + 0.2 * oracle::random_matrix(rng, n, 1).col(0);
    std::vector<std::size_t> sub;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); i += 3) sub.push_back(i);
    TransferConfig cfg = small_config();
    TransferModel m = two_stage_fit(X, y, sub, {"a", "b"}, cfg);
    const std::size_t ms = sub.size();
    REQUIRE(m.substitute_mass.size() == static_cast<std::size_t>(cfg.steps));
    CHECK(m.substitute_mass[0] == doctest::Approx(static_cast<double>(ms) / (n + ms)).epsilon(1e-12));
    for (int t = 1; t < cfg.steps; ++t)
        CHECK(std::abs(m.substitute_mass[static_cast<std::size_t>(t)] - schedule_goal(t, cfg.steps, n, ms)) <= 1e-6);
    REQUIRE(m.step_errors.size() == static_cast<std::size_t>(cfg.steps));
    const auto best = std::min_element(m.step_errors.begin(), m.step_errors.end()) - m.step_errors.begin();
    CHECK(m.selected_step == best + 1);
    for (double err : m.step_errors) CHECK(std::isfinite(err));
    CHECK(m.source_rows == static_cast<std::size_t>(n));
    CHECK(m.substitute_rows == ms);
}

TEST_CASE("two-stage fit with S = 2 extinguishes source mass after step one") {
    std::mt19937_64 rng(8);
    Eigen::MatrixXd X = oracle::random_matrix(rng, 20, 2);
    Eigen::VectorXd y = X.col(0);
    TransferConfig cfg = small_config();
    cfg.steps = 2;
    cfg.folds = 2;
    TransferModel m = two_stage_fit(X, y, std::vector<std::size_t>{0, 5, 10, 15, 19}, {"a", "b"}, cfg);
    REQUIRE(m.substitute_mass.size() == 2);
    CHECK(m.substitute_mass[0] == doctest::Approx(0.2));
    CHECK(m.substitute_mass[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching source and substitute with a noiseless linear target is fitted closely") {
    std::mt19937_64 rng(9);
    const int n = 240;
    std::uniform_real_distribution<double> u(0.0, 10.0);
    Eigen::MatrixXd X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = u(rng);
    Eigen::VectorXd y = 4.0 * X.col(0).array() + 2.0;
    const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1));
    TransferConfig cfg;
    cfg.theta = 1.0;
    cfg.n_estimators = 30;
    cfg.seed = 1;
    TransferModel m = two_stage_fit(X, y, all_rows(n), {"x"}, cfg);
    CHECK(m.step_errors[static_cast<std::size_t>(m.selected_step - 1)] < 0.05 * sd);
    CHECK(m.step_errors[static_cast<std::size_t>(m.selected_step - 1)] <= m.step_errors[0]);
}

TEST_CASE("fit and prediction are deterministic and batch equals row-by-row") {
    std::mt19937_64 rng(10);
    const int n = 50;
    Eigen::MatrixXd X = oracle::random_matrix(rng, n, 3);
    Eigen::VectorXd y = X.col(0).cwiseAbs() + X.col(2);
    std::vector<std::size_t> sub{1, 4, 9, 16, 25, 36, 49};
    TransferConfig cfg = small_config();
    TransferModel a = two_stage_fit(X, y, sub, {"a", "b", "c"}, cfg);
    TransferModel b = two_stage_fit(X, y, sub, {"a", "b", "c"}, cfg);
    CHECK(a.selected_step == b.selected_step);
    CHECK(a.step_errors == b.step_errors);
    Eigen::MatrixXd Q = oracle::random_matrix(rng, 20, 3);
    Eigen::VectorXd pa = transfer_predict(a, Q, {"a", "b", "c"});
    Eigen::VectorXd pb = transfer_predict(b, Q, {"a", "b", "c"});
    CHECK(pa == pb);
    for (int i = 0; i < 20; ++i) {
        Eigen::MatrixXd one = Q.row(i);
        CHECK(transfer_predict(a, one, {"a", "b", "c"})(0) == pa(i));
    }
    CHECK(transfer_predict(a, Eigen::MatrixXd(0, 3), {"a", "b", "c"}).size() == 0);
    try {
        transfer_predict(a, Q, {"a", "c", "b"});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RosterMismatch);
    }
}

TEST_CASE("two-stage fit rejects degenerate inputs") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 1);
    Eigen::VectorXd y = X.col(0);
    TransferConfig cfg = small_config();
    CHECK_THROWS_AS(two_stage_fit(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), std::vector<std::size_t>{}, {"x"}, cfg),
                    Error);
    try {
        two_stage_fit(X, y, std::vector<std::size_t>{}, {"x"}, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptySubstitute);
    }
    // Fewer substitute rows than folds.
    CHECK_THROWS_AS(two_stage_fit(X, y, std::vector<std::size_t>{1, 2}, {"x"}, cfg), Error);
    CHECK_THROWS_AS(two_stage_fit(X, y, std::vector<std::size_t>{1, 2, 3}, {"x", "y"}, cfg), Error);
}
