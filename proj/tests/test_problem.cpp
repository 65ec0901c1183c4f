#include "doctest.h"
#include "expode/problem.hpp"

using namespace expode;

namespace {

// y' = A y + g(t,y) with A = [[-2,1],[0,-1]], g = (sin t, y0^2)
OdeProblem make_test_problem() {
    OdeProblem p;
    p.name = "quad2";
    p.dim = 2;
    p.t0 = 0.0;
    p.t_end = 1.0;
    p.y0 = Vec::Constant(2, 0.5);
    Mat A(2, 2);
    A << -2.0, 1.0, 0.0, -1.0;
    p.lin_op = [A]() { return A; };
    p.rhs = [A](double t, const Vec& y) {
        Vec g(2);
        g << std::sin(t), y(0) * y(0);
        return Vec(A * y + g);
    };
    p.jacobian = [A](double, const Vec& y) {
        Mat J = A;
        J(1, 0) += 2.0 * y(0);
        return J;
    };
    p.jacobian_v = [A](double, const Vec& y, const Vec& v) {
        Mat J = A;
        J(1, 0) += 2.0 * y(0);
        return Vec(J * v);
    };
    p.df_dt = [](double t, const Vec&) {
        Vec v(2);
        v << std::cos(t), 0.0;
        return v;
    };
    return p;
}

} // namespace

TEST_CASE("problem invariants") {
    OdeProblem p = make_test_problem();
    CHECK_NOTHROW(p.check());

    OdeProblem bad = p;
    bad.dim = 0;
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = p;
    bad.y0 = Vec::Zero(3);
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = p;
    bad.t_end = bad.t0;
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = p;
    bad.rhs = nullptr;
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = p;
    bad.output_times = {0.1, 0.5}; // must start at t0
    CHECK_THROWS_AS(bad.check(), ValidationError);
    bad.output_times = {0.0, 0.6, 0.4};
    CHECK_THROWS_AS(bad.check(), ValidationError);
    bad.output_times = {0.0, 0.5, 1.5};
    CHECK_THROWS_AS(bad.check(), ValidationError);
    bad.output_times = {0.0, 0.5, 1.0};
    CHECK_NOTHROW(bad.check());
}

TEST_CASE("rhs evaluation counts and checks dimensions") {
    OdeProblem p = make_test_problem();
    StatsCounters stats;
    OdeFunctions f(p, stats);

    Vec y = Vec::Zero(2);
    Vec r = f.rhs(0.0, y);
    CHECK(r(0) == 0.0); // sin(0) + A*0
    CHECK(r(1) == 0.0);
    CHECK(stats.n_rhs_evals == 1);
    f.rhs(0.3, p.y0);
    CHECK(stats.n_rhs_evals == 2);

    CHECK_THROWS_WITH_AS(f.rhs(0.0, Vec::Zero(1)),
                         doctest::Contains("dimension mismatch"), ValidationError);
}

TEST_CASE("jacobian and jacobian_v agree columnwise") {
    OdeProblem p = make_test_problem();
    StatsCounters stats;
    OdeFunctions f(p, stats);

    Vec y(2);
    y << 0.7, -0.2;
    Mat J = f.jacobian(0.4, y);
    CHECK(stats.n_jac_evals == 1);
    for (Eigen::Index k = 0; k < 2; ++k) {
        Vec e = Vec::Zero(2);
        e(k) = 1.0;
        Vec col = f.jacobian_v(0.4, y, e);
        CHECK((col - J.col(k)).lpNorm<Eigen::Infinity>() <=
              1e-12 * (1.0 + J.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("jacobian reconstructed from the product form") {
    OdeProblem p = make_test_problem();
    Mat J_full = p.jacobian(0.4, p.y0);
    p.jacobian = nullptr; // only jacobian_v remains
    StatsCounters stats;
    OdeFunctions f(p, stats);
    CHECK(f.has_jacobian());
    CHECK_FALSE(f.has_jacobian_matrix());
    Mat J = f.jacobian(0.4, p.y0);
    CHECK((J - J_full).lpNorm<Eigen::Infinity>() == 0.0);

    p.jacobian_v = nullptr;
    StatsCounters stats2;
    OdeFunctions g(p, stats2);
    CHECK_FALSE(g.has_jacobian());
    CHECK_THROWS_WITH_AS(g.jacobian(0.0, p.y0), doctest::Contains("jacobian unavailable"),
                         ValidationError);
}

TEST_CASE("linear part and the g fallback") {
    OdeProblem p = make_test_problem();
    StatsCounters stats;
    OdeFunctions f(p, stats);
    REQUIRE(f.has_lin_op());

    const Mat& A = f.lin_op();
    CHECK(A(0, 0) == -2.0);
    CHECK(&A == &f.lin_op()); // cached, same object

    // g derived from the full right hand side
    Vec y(2);
    y << 0.3, 0.9;
    Vec g = f.g(0.25, y);
    CHECK(g(0) == doctest::Approx(std::sin(0.25)).epsilon(1e-15));
    CHECK(g(1) == doctest::Approx(0.09).epsilon(1e-14));

    // explicit g_fcn takes precedence and is not counted as an rhs call
    long before = stats.n_rhs_evals;
    p.g_fcn = [](double t, const Vec& y2) {
        Vec g2(2);
        g2 << std::sin(t), y2(0) * y2(0);
        return g2;
    };
    StatsCounters stats2;
    OdeFunctions f2(p, stats2);
    Vec g2 = f2.g(0.25, y);
    CHECK((g2 - g).lpNorm<Eigen::Infinity>() <= 1e-15);
    CHECK(stats2.n_rhs_evals == 0);
    CHECK(stats.n_rhs_evals == before);
}

TEST_CASE("df_dt dispatch") {
    OdeProblem p = make_test_problem();
    StatsCounters stats;
    OdeFunctions f(p, stats);
    CHECK(f.has_df_dt());
    CHECK(f.df_dt(0.0, p.y0)(0) == 1.0);

    p.df_dt = nullptr;
    StatsCounters stats2;
    OdeFunctions g(p, stats2);
    CHECK_FALSE(g.has_df_dt());
    CHECK_THROWS_AS(g.df_dt(0.0, p.y0), ValidationError);
}

TEST_CASE("counters only ever grow") {
    OdeProblem p = make_test_problem();
    StatsCounters stats;
    OdeFunctions f(p, stats);
    long last_rhs = 0, last_jac = 0;
    for (int i = 0; i < 5; ++i) {
        f.rhs(0.1 * i, p.y0);
        f.jacobian(0.1 * i, p.y0);
        f.g(0.1 * i, p.y0);
        CHECK(stats.n_rhs_evals >= last_rhs);
        CHECK(stats.n_jac_evals >= last_jac);
        last_rhs = stats.n_rhs_evals;
        last_jac = stats.n_jac_evals;
    }
    CHECK(stats.n_rhs_evals == 10); // 5 direct + 5 via the g fallback
    CHECK(stats.n_jac_evals == 5);
}
