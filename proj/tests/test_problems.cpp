#include "doctest.h"
#include "expode/driver.hpp"
#include "expode/problems.hpp"

#include <cmath>
#include <random>

using namespace expode;

namespace {

OptionsSet merged(const BundledProblem& bp, const std::string& integrator) {
    OptionsSet o(integrator);
    for (const auto& [k, v] : bp.options.entries())
        o.set(k, v);
    return o;
}

Mat fd_jacobian(const OdeProblem& p, double t, const Vec& y) {
    Mat J(p.dim, p.dim);
    double d = 1e-6;
    for (Eigen::Index j = 0; j < p.dim; ++j) {
        Vec yp = y, ym = y;
        yp(j) += d;
        ym(j) -= d;
        J.col(j) = (p.rhs(t, yp) - p.rhs(t, ym)) / (2.0 * d);
    }
    return J;
}

} // namespace

TEST_CASE("heat1d stencil structure") {
    BundledProblem bp = heat1d(0.1, 0.1, 20);
    CHECK_NOTHROW(bp.problem.check());
    Mat A = bp.problem.lin_op();
    REQUIRE(A.rows() == 20);
    for (Eigen::Index i = 0; i < 20; ++i) {
        double rs = A.row(i).sum();
        if (i == 0 || i == 19)
            CHECK(rs < 0.0); // boundary-adjacent rows lose one neighbour
        else
            CHECK(std::abs(rs) <= 1e-10 * std::abs(A(i, i)));
    }
    // jacobian of the full rhs is the linear part itself
    CHECK((bp.problem.jacobian(0.3, bp.problem.y0) - A).norm() == 0.0);
}

TEST_CASE("heat1d eigenmode decay without source") {
    Eigen::Index N = 30;
    BundledProblem bp = heat1d(0.1, 0.0, N);
    REQUIRE(bool(bp.problem.exact));
    double dx = 1.0 / double(N + 1);
    double mu = 0.1 * 2.0 / (dx * dx) * (1.0 - std::cos(M_PI * dx));
    // the factory's exact() agrees with the closed-form decay rate
    Vec want = std::exp(-mu * 0.7) * bp.problem.y0;
    CHECK((bp.problem.exact(0.7) - want).lpNorm<Eigen::Infinity>() <= 1e-14);

    OptionsSet o = merged(bp, "exprb");
    o.set("AbsTol", 1e-10);
    o.set("RelTol", 1e-10);
    Solution sol = integrate(bp.problem, o);
    Vec err = sol.y.row(sol.y.rows() - 1).transpose() - bp.problem.exact(1.0);
    CHECK(err.lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("heat1d default parameters run under defaults") {
    BundledProblem bp = heat1d();
    CHECK(bp.problem.dim == 100);
    Solution sol = integrate(bp.problem, merged(bp, "exprb"));
    CHECK(sol.t.back() == 1.0);
    CHECK(sol.y.row(sol.y.rows() - 1).lpNorm<Eigen::Infinity>() < 2.0);
    CHECK(sol.stats.n_steps > 0);
}

TEST_CASE("heat1d parameter validation") {
    CHECK_THROWS_AS(heat1d(0.1, 0.1, 2), ValidationError);
    CHECK_THROWS_AS(heat1d(0.0, 0.1, 10), ValidationError);
    CHECK_THROWS_AS(semi1(2), ValidationError);
}

TEST_CASE("semi1 exactness is built in") {
    BundledProblem bp = semi1(40);
    const OdeProblem& p = bp.problem;
    CHECK_NOTHROW(p.check());
    CHECK((p.exact(0.0) - p.y0).lpNorm<Eigen::Infinity>() == 0.0);

    // y*' = -y*, so the defect of the manufactured solution vanishes
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        double t = U(rng);
        Vec ys = p.exact(t);
        Vec defect = p.rhs(t, ys) + ys;
        CHECK(defect.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("semi1 integrates to its exact solution") {
    BundledProblem bp = semi1(50);

    SUBCASE("adaptive rosenbrock at tight tolerance") {
        OptionsSet o = merged(bp, "exprb");
        o.set("AbsTol", 1e-10);
        o.set("RelTol", 1e-10);
        Solution sol = integrate(bp.problem, o);
        Vec err = sol.y.row(sol.y.rows() - 1).transpose() - bp.problem.exact(1.0);
        CHECK(err.lpNorm<Eigen::Infinity>() <= 1e-8);
    }
    SUBCASE("krogstad at a fixed small step") {
        OptionsSet o = merged(bp, "exprk");
        o.set("Scheme", std::string("krogstad"));
        o.set("StepSize", 1e-3);
        Solution sol = integrate(bp.problem, o);
        Vec err = sol.y.row(sol.y.rows() - 1).transpose() - bp.problem.exact(1.0);
        CHECK(err.lpNorm<Eigen::Infinity>() <= 1e-6);
    }
    SUBCASE("multistep semilinear") {
        OptionsSet o = merged(bp, "expmssemi");
        o.set("kStep", 2.0);
        o.set("StepSize", 2e-3);
        Solution sol = integrate(bp.problem, o);
        Vec err = sol.y.row(sol.y.rows() - 1).transpose() - bp.problem.exact(1.0);
        CHECK(err.lpNorm<Eigen::Infinity>() <= 1e-5);
    }
}

TEST_CASE("factory jacobians match finite differences") {
    std::mt19937 rng(11);
    std::normal_distribution<double> G(0.0, 0.3);
    for (const std::string name : problem_names()) {
        CAPTURE(name);
        std::map<std::string, double> params;
        if (name != "minex")
            params["N"] = 10.0;
        BundledProblem bp = make_problem(name, params);
        const OdeProblem& p = bp.problem;
        for (int k = 0; k < 3; ++k) {
            Vec y = p.y0;
            for (Eigen::Index i = 0; i < y.size(); ++i)
                y(i) += G(rng);
            double t = 0.1 + 0.2 * k;
            Mat J = p.jacobian(t, y);
            Mat Jfd = fd_jacobian(p, t, y);
            double scale = 1.0 + J.lpNorm<Eigen::Infinity>();
            CHECK((J - Jfd).lpNorm<Eigen::Infinity>() <= 5e-6 * scale);
        }
    }
}

TEST_CASE("the minimal example runs under every integrator's defaults") {
    BundledProblem bp = minimal_example();
    CHECK_NOTHROW(bp.problem.check());

    OptionsSet tight("exprb");
    tight.set("AbsTol", 1e-12);
    tight.set("RelTol", 1e-11);
    Solution ref = integrate(bp.problem, tight);
    Vec want = ref.y.row(ref.y.rows() - 1).transpose();

    for (const std::string name : {"exprk", "exprb", "expmssemi", "expms", "exp4"}) {
        CAPTURE(name);
        Solution sol = integrate(bp.problem, merged(bp, name));
        CHECK(sol.t.back() == 1.0);
        Vec got = sol.y.row(sol.y.rows() - 1).transpose();
        CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-2);
    }
}

TEST_CASE("factory lookup and parameters") {
    CHECK_THROWS_AS(make_problem("lorenz"), ValidationError);
    CHECK_THROWS_AS(make_problem("heat1d", {{"nu", 1.0}}), ValidationError);
    BundledProblem bp = make_problem("heat1d", {{"N", 17.0}, {"epsilon", 0.2}});
    CHECK(bp.problem.dim == 17);
    CHECK(make_problem("semi1", {{"N", 12.0}}).problem.dim == 12);
    CHECK(make_problem("minex").problem.dim == 2);
    CHECK(problem_names().size() == 3);
}
