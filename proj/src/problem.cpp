#include "expode/problem.hpp"

#include <algorithm>
#include <cmath>

namespace expode {

void OdeProblem::check() const {
    if (dim < 1)
        throw ValidationError("problem " + name + ": dim must be at least 1");
    if (y0.size() != dim)
        throw ValidationError("problem " + name + ": y0 has length " +
                              std::to_string(y0.size()) + ", expected " + std::to_string(dim));
    if (t0 == t_end)
        throw ValidationError("problem " + name + ": empty integration interval");
    if (!rhs)
        throw ValidationError("problem " + name + ": right hand side missing");
    if (!output_times.empty()) {
        if (output_times.front() != t0)
            throw ValidationError("problem " + name + ": output times must start at t0");
        double lo = std::min(t0, t_end), hi = std::max(t0, t_end);
        double dir = t_end > t0 ? 1.0 : -1.0;
        for (size_t i = 0; i < output_times.size(); ++i) {
            if (output_times[i] < lo || output_times[i] > hi)
                throw ValidationError("problem " + name +
                                      ": output time outside the integration interval");
            if (i > 0 && dir * (output_times[i] - output_times[i - 1]) <= 0.0)
                throw ValidationError("problem " + name + ": output times not monotone");
        }
    }
}

OdeFunctions::OdeFunctions(const OdeProblem& problem, StatsCounters& stats)
    : problem_(&problem), stats_(&stats) {
    problem.check();
}

void OdeFunctions::check_dim(const Vec& y, const char* what) const {
    if (y.size() != problem_->dim)
        throw ValidationError(std::string(what) + ": dimension mismatch (got " +
                              std::to_string(y.size()) + ", expected " +
                              std::to_string(problem_->dim) + ")");
}

Vec OdeFunctions::rhs(double t, const Vec& y) const {
    check_dim(y, "rhs");
    ++stats_->n_rhs_evals;
    return problem_->rhs(t, y);
}

bool OdeFunctions::has_jacobian() const {
    return bool(problem_->jacobian) || bool(problem_->jacobian_v);
}

Mat OdeFunctions::jacobian(double t, const Vec& y) const {
    check_dim(y, "jacobian");
    ++stats_->n_jac_evals;
    if (problem_->jacobian)
        return problem_->jacobian(t, y);
    if (problem_->jacobian_v) {
        // column-by-column reconstruction from the product form
        Mat J(problem_->dim, problem_->dim);
        Vec e = Vec::Zero(problem_->dim);
        for (Eigen::Index k = 0; k < problem_->dim; ++k) {
            e(k) = 1.0;
            J.col(k) = problem_->jacobian_v(t, y, e);
            e(k) = 0.0;
        }
        return J;
    }
    throw ValidationError("problem " + problem_->name + ": jacobian unavailable");
}

Vec OdeFunctions::jacobian_v(double t, const Vec& y, const Vec& v) const {
    check_dim(y, "jacobian_v");
    if (problem_->jacobian_v)
        return problem_->jacobian_v(t, y, v);
    return jacobian(t, y) * v;
}

bool OdeFunctions::has_lin_op() const {
    return bool(problem_->lin_op) || bool(problem_->lin_op_v);
}

const Mat& OdeFunctions::lin_op() const {
    if (!lin_op_cache_) {
        if (!problem_->lin_op)
            throw ValidationError("problem " + problem_->name + ": linear part unavailable");
        lin_op_cache_ = problem_->lin_op();
        if (lin_op_cache_->rows() != problem_->dim || lin_op_cache_->cols() != problem_->dim)
            throw ValidationError("problem " + problem_->name +
                                  ": linear part has wrong shape");
    }
    return *lin_op_cache_;
}

Vec OdeFunctions::lin_op_v(const Vec& v) const {
    if (problem_->lin_op_v)
        return problem_->lin_op_v(v);
    return lin_op() * v;
}

Vec OdeFunctions::g(double t, const Vec& y) const {
    check_dim(y, "g");
    if (problem_->g_fcn)
        return problem_->g_fcn(t, y);
    return rhs(t, y) - lin_op_v(y);
}

Vec OdeFunctions::df_dt(double t, const Vec& y) const {
    check_dim(y, "df_dt");
    if (!problem_->df_dt)
        throw ValidationError("problem " + problem_->name + ": df_dt unavailable");
    return problem_->df_dt(t, y);
}

} // namespace expode
