#include "expode/problems.hpp"

#include <cmath>

namespace expode {

namespace {

// (1/dx^2) tridiag(1, -2, 1) on n interior points of (0,1)
Mat laplacian(Eigen::Index n) {
    double dx = 1.0 / double(n + 1);
    Mat L = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        L(i, i) = -2.0;
        if (i > 0)
            L(i, i - 1) = 1.0;
        if (i + 1 < n)
            L(i, i + 1) = 1.0;
    }
    return L / (dx * dx);
}

Vec interior_grid(Eigen::Index n) {
    double dx = 1.0 / double(n + 1);
    Vec x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x(i) = double(i + 1) * dx;
    return x;
}

} // namespace

BundledProblem heat1d(double epsilon, double gamma, Eigen::Index N) {
    if (epsilon <= 0.0)
        throw ValidationError("heat1d: epsilon must be positive");
    if (N < 3)
        throw ValidationError("heat1d: N must be at least 3");

    double dx = 1.0 / double(N + 1);
    Mat A = epsilon * laplacian(N);
    Vec x = interior_grid(N);
    Vec mode = (M_PI * x.array()).sin();

    OdeProblem p;
    p.name = "heat1d";
    p.dim = N;
    p.t0 = 0.0;
    p.t_end = 1.0;
    p.y0 = mode;
    p.rhs = [A, mode, gamma](double t, const Vec& y) {
        return Vec(A * y + gamma * std::cos(t) * mode);
    };
    p.lin_op = [A]() { return A; };
    p.jacobian = [A](double, const Vec&) { return A; };
    p.g_fcn = [mode, gamma](double t, const Vec&) {
        return Vec(gamma * std::cos(t) * mode);
    };
    p.g_jacobian = [N](double, const Vec&) { return Mat(Mat::Zero(N, N)); };
    p.df_dt = [mode, gamma](double t, const Vec&) {
        return Vec(-gamma * std::sin(t) * mode);
    };
    if (gamma == 0.0) {
        // sin(pi x) is an eigenvector of the discrete laplacian
        double mu = epsilon * 2.0 / (dx * dx) * (1.0 - std::cos(M_PI * dx));
        p.exact = [mode, mu](double t) { return Vec(std::exp(-mu * t) * mode); };
    }

    OptionsSet opts;
    if (gamma != 0.0)
        opts.set("NonAutonomous", true);
    return {std::move(p), std::move(opts)};
}

BundledProblem semi1(Eigen::Index N) {
    if (N < 3)
        throw ValidationError("semi1: N must be at least 3");

    Mat L = laplacian(N);
    Vec x = interior_grid(N);
    Vec w = (x.array() * (1.0 - x.array())).matrix(); // spatial profile x(1-x)
    Vec Lw = L * w;
    Vec w2 = w.array().square().matrix();

    // f(t) makes y*(t) = e^{-t} w solve y' = L y + y.^2 + f(t) exactly
    auto f = [w, Lw, w2](double t) {
        double e = std::exp(-t);
        return Vec(-e * w - e * Lw - e * e * w2);
    };
    auto df = [w, Lw, w2](double t) {
        double e = std::exp(-t);
        return Vec(e * w + e * Lw + 2.0 * e * e * w2);
    };

    OdeProblem p;
    p.name = "semi1";
    p.dim = N;
    p.t0 = 0.0;
    p.t_end = 1.0;
    p.y0 = w;
    p.rhs = [L, f](double t, const Vec& y) {
        return Vec(L * y + y.array().square().matrix() + f(t));
    };
    p.lin_op = [L]() { return L; };
    p.jacobian = [L](double, const Vec& y) {
        Mat J = L;
        J.diagonal() += 2.0 * y;
        return J;
    };
    p.g_fcn = [f](double t, const Vec& y) {
        return Vec(y.array().square().matrix() + f(t));
    };
    p.g_jacobian = [N](double, const Vec& y) {
        Mat J = Mat::Zero(N, N);
        J.diagonal() = 2.0 * y;
        return J;
    };
    p.df_dt = [df](double t, const Vec&) { return df(t); };
    p.exact = [w](double t) { return Vec(std::exp(-t) * w); };

    OptionsSet opts;
    opts.set("NonAutonomous", true);
    return {std::move(p), std::move(opts)};
}

BundledProblem minimal_example() {
    // The smallest sensible demo: a stiff diagonal linear part with a
    // mild quadratic coupling,
    //   y' = A y + 0.05 y.^2,   A = diag(-2, -100).
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = -2.0;
    A(1, 1) = -100.0;

    OdeProblem p;
    p.name = "minex";
    p.dim = 2;
    p.t0 = 0.0;
    p.t_end = 1.0;
    // start away from the origin so both components move
    p.y0 = Vec(2);
    p.y0 << 1.0, 0.5;
    // full right hand side: linear part plus nonlinearity
    p.rhs = [A](double, const Vec& y) {
        return Vec(A * y + 0.05 * y.array().square().matrix());
    };
    // the semilinear split, for exprk / expmssemi
    p.lin_op = [A]() { return A; };
    p.g_fcn = [](double, const Vec& y) {
        return Vec(0.05 * y.array().square().matrix());
    };
    // the linearization, for exprb / expms / exp4
    p.jacobian = [A](double, const Vec& y) {
        Mat J = A;
        J.diagonal() += 0.1 * y;
        return J;
    };
    p.g_jacobian = [](double, const Vec& y) {
        Mat J = Mat::Zero(2, 2);
        J.diagonal() = 0.1 * y;
        return J;
    };
    return {std::move(p), OptionsSet()};
}

const std::vector<std::string>& problem_names() {
    static const std::vector<std::string> names = {"heat1d", "semi1", "minex"};
    return names;
}

BundledProblem make_problem(const std::string& name,
                            const std::map<std::string, double>& params) {
    auto get = [&params](const char* key, double dflt) {
        auto it = params.find(key);
        return it == params.end() ? dflt : it->second;
    };
    auto reject_unknown = [&params](std::initializer_list<const char*> known,
                                    const std::string& pname) {
        for (const auto& [k, v] : params) {
            (void)v;
            bool ok = false;
            for (const char* kn : known)
                ok = ok || k == kn;
            if (!ok)
                throw ValidationError("problem " + pname + ": unknown parameter " + k);
        }
    };
    if (name == "heat1d") {
        reject_unknown({"epsilon", "gamma", "N"}, name);
        return heat1d(get("epsilon", 0.1), get("gamma", 0.1),
                      Eigen::Index(get("N", 100.0)));
    }
    if (name == "semi1") {
        reject_unknown({"N"}, name);
        return semi1(Eigen::Index(get("N", 50.0)));
    }
    if (name == "minex") {
        reject_unknown({}, name);
        return minimal_example();
    }
    throw ValidationError("unknown problem: " + name);
}

} // namespace expode
