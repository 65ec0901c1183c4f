#include "doctest.h"
#include "expode/matfun.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <random>

using namespace expode;

namespace {

OperatorAccess constant_operator(const Mat& M) {
    OperatorAccess op;
    op.n = M.rows();
    op.matrix = [M](double, const Vec&) { return M; };
    op.apply = [M](double, const Vec&, const Vec& v) { return Vec(M * v); };
    return op;
}

OperatorAccess product_only(const Mat& M) {
    OperatorAccess op = constant_operator(M);
    op.matrix = nullptr;
    return op;
}

JobTable exprb_style_table() {
    JobTable t;
    t.job_functions = {{1, 1.0}, {2, 1.0}, {3, 1.0}, {4, 1.0}, {1, 0.5}, {2, 0.5}};
    Mat F(2, 6);
    F << 1, 0, 0, 0, 0, 0, //
        0, 0, 1, 0, 0, 0;
    t.jobs["F"] = F;
    Mat v(1, 6);
    v << 0, 1, 0, 0, 0, 0;
    t.jobs["v"] = v;
    return t;
}

NormalizedOptions default_opts(double abstol = 1e-6, int test_index = 1) {
    OptionsSet o("exprb");
    o.set("AbsTol", abstol);
    o.set("KrylovTestIndex", double(test_index));
    return validate(o);
}

// phi_1(A) b through the block-matrix exponential identity
// exp([A b; 0 0]) = [e^A  phi_1(A)b; 0  1], an independent evaluation path.
Vec phi1_oracle(const Mat& A, const Vec& b) {
    Eigen::Index n = A.rows();
    Mat B = Mat::Zero(n + 1, n + 1);
    B.topLeftCorner(n, n) = A;
    B.topRightCorner(n, 1) = b;
    Mat E = B.exp();
    return E.topRightCorner(n, 1);
}

Mat random_symmetric_tridiagonal(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Mat M = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        M(i, i) = -2.0 + 0.3 * uni(rng);
        if (i + 1 < n) {
            double off = 1.0 + 0.2 * uni(rng);
            M(i, i + 1) = off;
            M(i + 1, i) = off;
        }
    }
    return M;
}

} // namespace

TEST_CASE("job table validation") {
    JobTable t = exprb_style_table();
    CHECK_NOTHROW(t.check());

    JobTable empty;
    CHECK_THROWS_AS(empty.check(), ValidationError);

    JobTable bad = exprb_style_table();
    bad.jobs["F"] = Mat::Zero(1, 5); // width mismatch
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = exprb_style_table();
    bad.job_functions[0].index = 99;
    CHECK_THROWS_AS(bad.check(), ValidationError);

    bad = exprb_style_table();
    bad.jobs.clear();
    CHECK_THROWS_AS(bad.check(), ValidationError);
}

TEST_CASE("direct: scalar and diagonal cases defer to the scalar kernel") {
    auto ev = make_direct_evaluator();

    SUBCASE("n = 1") {
        Mat M(1, 1);
        M << -0.8;
        ev->init(constant_operator(M), default_opts());
        ev->register_jobs(exprb_style_table());
        ev->init_step(0.0, Vec::Zero(1), 0.5);
        Vec v = Vec::Constant(1, 1.0);
        Mat r = ev->evaluate("F", v);
        REQUIRE(r.cols() == 2);
        CHECK(r(0, 0) == doctest::Approx(phi(1, 0.5 * -0.8)).epsilon(1e-13));
        CHECK(r(0, 1) == doctest::Approx(phi(3, 0.5 * -0.8)).epsilon(1e-13));
    }

    SUBCASE("diagonal matrix acts componentwise") {
        Vec d(3);
        d << -2.0, -0.5, 1.3;
        Mat M = d.asDiagonal();
        ev->init(constant_operator(M), default_opts());
        ev->register_jobs(exprb_style_table());
        double h = 0.7;
        ev->init_step(0.0, Vec::Zero(3), h);
        Vec v(3);
        v << 1.0, -2.0, 0.25;
        Mat r = ev->evaluate("v", v);
        REQUIRE(r.cols() == 1);
        for (int i = 0; i < 3; ++i)
            CHECK(r(i, 0) == doctest::Approx(phi(2, h * d(i)) * v(i)).epsilon(1e-13));
    }

    SUBCASE("h = 0 gives phi_k(0) exactly") {
        Mat M = random_symmetric_tridiagonal(5, 7);
        ev->init(constant_operator(M), default_opts());
        ev->register_jobs(exprb_style_table());
        ev->init_step(0.0, Vec::Zero(5), 0.0);
        Vec v = Vec::LinSpaced(5, 1.0, 5.0);
        Mat r = ev->evaluate("F", v);
        CHECK((r.col(0) - v).lpNorm<Eigen::Infinity>() <= 1e-13);           // phi_1(0)=1
        CHECK((r.col(1) - v / 6.0).lpNorm<Eigen::Infinity>() <= 1e-13);     // phi_3(0)=1/6
    }
}

TEST_CASE("direct: matches the block-exponential oracle for phi_1") {
    Mat M = random_symmetric_tridiagonal(12, 3);
    auto ev = make_direct_evaluator();
    ev->init(constant_operator(M), default_opts());
    JobTable t;
    t.job_functions = {{1, 1.0}};
    t.jobs["F"] = Mat::Constant(1, 1, 1.0);
    ev->register_jobs(t);
    double h = 0.35;
    ev->init_step(0.0, Vec::Zero(12), h);
    Vec v = Vec::LinSpaced(12, -1.0, 1.0);
    Vec got = ev->evaluate("F", v).col(0);
    Vec ref = phi1_oracle(h * M, v);
    CHECK((got - ref).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + ref.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("direct: diagonalization and evaluation counters") {
    Mat M = random_symmetric_tridiagonal(6, 11);
    auto ev = make_direct_evaluator();
    ev->init(constant_operator(M), default_opts());
    ev->register_jobs(exprb_style_table());
    Vec y = Vec::Zero(6);
    Vec v = Vec::Ones(6);

    ev->init_step(0.0, y, 0.1);
    ev->evaluate("F", v);
    ev->evaluate("v", v);
    StatsCounters s;
    ev->collect_stats(s);
    CHECK(s.matfun["NofDiag"] == 1);
    CHECK(s.matfun["NofMFEv"] == 2);

    // same (t, y), smaller h: the rejected-step retry keeps the factors
    ev->init_step(0.0, y, 0.05);
    ev->evaluate("F", v);
    ev->collect_stats(s);
    CHECK(s.matfun["NofDiag"] == 1);
    CHECK(s.matfun["NofMFEv"] == 3);

    // new linearization point diagonalizes again
    ev->init_step(0.1, Vec::Ones(6), 0.05);
    ev->evaluate("F", v);
    ev->collect_stats(s);
    CHECK(s.matfun["NofDiag"] == 2);
    CHECK(s.matfun["NofMFEv"] == 4);

    CHECK(ev->statistics().find("NofDiag = 2") != std::string::npos);
}

TEST_CASE("direct: capability and conditioning errors") {
    auto ev = make_direct_evaluator();
    Mat M = random_symmetric_tridiagonal(4, 1);
    CHECK_THROWS_AS(ev->init(product_only(M), default_opts()), ValidationError);

    // Jordan block: eigenvector basis is numerically rank deficient
    Mat J(2, 2);
    J << 1.0, 1.0, 0.0, 1.0;
    auto ev2 = make_direct_evaluator();
    ev2->init(constant_operator(J), default_opts());
    ev2->register_jobs(exprb_style_table());
    CHECK_THROWS_WITH_AS(ev2->init_step(0.0, Vec::Zero(2), 0.1),
                         doctest::Contains("arnoldi"), IntegrationError);
}

TEST_CASE("direct: reuse returns bitwise identical results") {
    Mat M = random_symmetric_tridiagonal(8, 23);
    auto ev = make_direct_evaluator();
    ev->init(constant_operator(M), default_opts());
    ev->register_jobs(exprb_style_table());
    Vec v = Vec::LinSpaced(8, 0.5, 2.0);
    ev->init_step(0.0, Vec::Zero(8), 0.2);
    Mat a = ev->evaluate("F", v, /*reusable=*/true, /*reuse=*/false);
    Mat b = ev->evaluate("F", v, /*reusable=*/false, /*reuse=*/true);
    CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("protocol violations") {
    Mat M = random_symmetric_tridiagonal(4, 5);
    auto ev = make_direct_evaluator();
    ev->init(constant_operator(M), default_opts());
    CHECK_THROWS_AS(ev->init_step(0.0, Vec::Zero(4), 0.1), ValidationError); // no jobs yet
    ev->register_jobs(exprb_style_table());
    ev->init_step(0.0, Vec::Zero(4), 0.1);
    CHECK_THROWS_WITH_AS(ev->evaluate("G", Vec::Ones(4)),
                         doctest::Contains("unknown job flag"), ValidationError);
    CHECK_THROWS_AS(ev->evaluate("F", Vec::Ones(3)), ValidationError);
    CHECK_THROWS_AS(ev->evaluate("F", Vec::Ones(4), false, false, 3), ValidationError);
}

TEST_CASE("arnoldi agrees with direct on a symmetric tridiagonal") {
    Mat M = random_symmetric_tridiagonal(30, 17);
    Vec v = Vec::LinSpaced(30, -1.0, 2.0);
    double h = 0.4;

    auto dir = make_direct_evaluator();
    dir->init(constant_operator(M), default_opts(1e-12));
    dir->register_jobs(exprb_style_table());
    dir->init_step(0.0, Vec::Zero(30), h);
    Mat want_F = dir->evaluate("F", v);
    Mat want_v = dir->evaluate("v", v);

    auto arn = make_arnoldi_evaluator();
    auto caps = arn->init(product_only(M), default_opts(1e-12));
    CHECK_FALSE(caps.need_jac_explicit);
    arn->register_jobs(exprb_style_table());
    arn->init_step(0.0, Vec::Zero(30), h);
    Mat got_F = arn->evaluate("F", v);
    Mat got_v = arn->evaluate("v", v);

    CHECK((got_F - want_F).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK((got_v - want_v).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("arnoldi: happy breakdown on an invariant subspace") {
    // v an eigenvector: the exact result lives in a 1-dimensional subspace
    Mat M = Mat::Zero(10, 10);
    M.diagonal() = Vec::LinSpaced(10, -3.0, -0.5);
    Vec v = Vec::Unit(10, 4);
    auto arn = make_arnoldi_evaluator();
    arn->init(product_only(M), default_opts(1e-12, 5));
    JobTable t;
    t.job_functions = {{1, 1.0}};
    t.jobs["F"] = Mat::Constant(1, 1, 1.0);
    arn->register_jobs(t);
    arn->init_step(0.0, Vec::Zero(10), 0.5);
    Mat r = arn->evaluate("F", v);
    CHECK(r(4, 0) == doctest::Approx(phi(1, 0.5 * M(4, 4))).epsilon(1e-13));
    CHECK(r.col(0).lpNorm<Eigen::Infinity>() ==
          doctest::Approx(std::abs(r(4, 0))).epsilon(1e-13));
}

TEST_CASE("linearity of evaluate") {
    Mat M = random_symmetric_tridiagonal(20, 9);
    Vec u = Vec::Random(20), w = Vec::Random(20);
    double a = 0.7, b = -1.3;
    for (bool krylov : {false, true}) {
        auto ev = krylov ? make_arnoldi_evaluator() : make_direct_evaluator();
        ev->init(constant_operator(M), default_opts(1e-13));
        ev->register_jobs(exprb_style_table());
        ev->init_step(0.0, Vec::Zero(20), 0.3);
        Mat lhs = ev->evaluate("F", Vec(a * u + b * w));
        Mat rhs = a * ev->evaluate("F", u) + b * ev->evaluate("F", w);
        double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
        CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-11 * scale);
    }
}

TEST_CASE("arnoldi: non-convergence requests a step reduction") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Mat M(120, 120);
    for (int i = 0; i < 120; ++i)
        for (int j = 0; j < 120; ++j)
            M(i, j) = uni(rng);
    auto arn = make_arnoldi_evaluator();
    arn->init(product_only(M), default_opts(1e-14));
    JobTable t;
    t.job_functions = {{1, 1.0}};
    t.jobs["F"] = Mat::Constant(1, 1, 1.0);
    arn->register_jobs(t);
    arn->init_step(0.0, Vec::Zero(120), 40.0); // hopeless step size
    CHECK_THROWS_AS(arn->evaluate("F", Vec::Ones(120)), StepReductionRequest);
}

TEST_CASE("arnoldi: subspace reuse across a rejected step") {
    Mat M = random_symmetric_tridiagonal(25, 31);
    Vec v = Vec::LinSpaced(25, 0.1, 1.5);
    auto arn = make_arnoldi_evaluator();
    arn->init(product_only(M), default_opts(1e-11));
    JobTable t;
    t.job_functions = {{1, 1.0}};
    t.jobs["F"] = Mat::Constant(1, 1, 1.0);
    arn->register_jobs(t);

    arn->init_step(0.0, Vec::Zero(25), 0.8);
    arn->evaluate("F", v, /*reusable=*/true, /*reuse=*/false);

    // retry at the same point with half the step
    arn->init_step(0.0, Vec::Zero(25), 0.4);
    Mat got = arn->evaluate("F", v, false, /*reuse=*/true);

    auto dir = make_direct_evaluator();
    dir->init(constant_operator(M), default_opts(1e-11));
    dir->register_jobs(t);
    dir->init_step(0.0, Vec::Zero(25), 0.4);
    Mat want = dir->evaluate("F", v);
    CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("facs returns the products at 1h, 2h, 3h") {
    Mat M = random_symmetric_tridiagonal(10, 13);
    Vec v = Vec::LinSpaced(10, -0.5, 0.5);
    JobTable t;
    t.job_functions = {{1, 1.0}};
    t.jobs["F"] = Mat::Constant(1, 1, 1.0);
    double h = 0.15;
    for (bool krylov : {false, true}) {
        auto ev = krylov ? make_arnoldi_evaluator() : make_direct_evaluator();
        ev->init(constant_operator(M), default_opts(1e-12));
        ev->register_jobs(t);
        ev->init_step(0.0, Vec::Zero(10), h);
        Mat packed = ev->evaluate("F", v, false, false, 3);
        REQUIRE(packed.cols() == 3);
        for (int j = 1; j <= 3; ++j) {
            Vec ref = phi1_oracle(j * h * M, v);
            CHECK((packed.col(j - 1) - ref).lpNorm<Eigen::Infinity>() <= 1e-10);
        }
    }
}

TEST_CASE("cleanup is idempotent and statistics render before any work") {
    auto ev = make_arnoldi_evaluator();
    Mat M = random_symmetric_tridiagonal(4, 2);
    ev->init(product_only(M), default_opts());
    CHECK(ev->statistics().find("no matrix function evaluations") != std::string::npos);
    CHECK_NOTHROW(ev->cleanup());
    CHECK_NOTHROW(ev->cleanup());

    auto dv = make_direct_evaluator();
    dv->init(constant_operator(M), default_opts());
    CHECK(dv->statistics().find("NofDiag = 0") != std::string::npos);
    CHECK(dv->statistics().find("NofMFEv = 0") != std::string::npos);
}

TEST_CASE("evaluator selection through the options") {
    OptionsSet o("exprb");
    CHECK(make_evaluator(validate(o))->description() == "directly by diagonalisation");
    o.set("MatrixFunctions", std::string("arnoldi"));
    CHECK(make_evaluator(validate(o))->description() == "using a Krylov subspace method");

    std::shared_ptr<MatrixFunctionEvaluator> custom = make_direct_evaluator();
    OptionsSet p("exprb");
    p.set("MatrixFunctions", Handle{custom});
    CHECK(make_evaluator(validate(p)) == custom);
}
