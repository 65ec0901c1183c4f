#pragma once

#include "expode/types.hpp"

#include <any>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace expode {

/// Problem description for y' = F(t,y) = A y + g(t,y). Only `rhs`, the
/// interval and y0 are mandatory; integrators state which of the optional
/// callbacks they need. Values are immutable after construction and safe
/// to share.
struct OdeProblem {
    std::string name;
    Eigen::Index dim = 0;
    double t0 = 0.0;
    double t_end = 1.0;
    Vec y0;
    std::vector<double> output_times; // empty: report accepted steps

    std::function<Vec(double, const Vec&)> rhs;
    std::function<Mat(double, const Vec&)> jacobian;
    std::function<Vec(double, const Vec&, const Vec&)> jacobian_v;
    std::function<Mat()> lin_op;            // semilinear A
    std::function<Vec(const Vec&)> lin_op_v;
    std::function<Vec(double, const Vec&)> g_fcn;
    std::function<Mat(double, const Vec&)> g_jacobian;
    std::function<Vec(double, const Vec&, const Vec&)> g_jacobian_v;
    std::function<Vec(double, const Vec&)> df_dt; // dF/dt, non-autonomous
    std::function<Vec(double)> exact;

    /// Opaque user payload; the bundled problem factories park their
    /// parameters here, callbacks capture what they need.
    std::any user_context;

    /// Throws ValidationError when the invariants are violated.
    void check() const;
};

struct StatsCounters {
    long n_steps = 0;
    long n_rejected = 0;
    long n_rhs_evals = 0;
    long n_jac_evals = 0;
    std::map<std::string, long> matfun; // evaluator-specific tallies
};

/// One accepted step's dense-output payload; `data` layout is owned by
/// the generator that wrote it.
struct DenseSegment {
    double t0 = 0.0;
    double h = 0.0;
    Vec y_left, y_right;
    std::vector<Vec> data;
};

/// Evaluates a segment at relative position theta in [0,1].
using DenseGenerator = std::function<Vec(const DenseSegment&, double theta)>;

struct Solution {
    std::vector<double> t; // accepted times or the requested output grid
    Mat y;                 // one row per time
    std::vector<DenseSegment> dense;
    DenseGenerator dense_generator; // empty unless dense output was active
    StatsCounters stats;
    std::string integrator;
    std::shared_ptr<void> internal; // run context, kept when ClearInternalData off
};

/// Counted access to a problem's callbacks: every evaluation bumps the
/// attached statistics, missing callbacks are synthesized where a
/// fallback exists and rejected otherwise.
class OdeFunctions {
public:
    OdeFunctions(const OdeProblem& problem, StatsCounters& stats);

    const OdeProblem& problem() const { return *problem_; }
    Eigen::Index dim() const { return problem_->dim; }

    Vec rhs(double t, const Vec& y) const;

    bool has_jacobian() const;
    bool has_jacobian_matrix() const { return bool(problem_->jacobian); }
    Mat jacobian(double t, const Vec& y) const;
    Vec jacobian_v(double t, const Vec& y, const Vec& v) const;

    bool has_lin_op() const;
    bool has_lin_op_matrix() const { return bool(problem_->lin_op); }
    const Mat& lin_op() const; // evaluated once, cached
    Vec lin_op_v(const Vec& v) const;

    /// g(t,y); falls back to F(t,y) - A y when only the full RHS is given.
    Vec g(double t, const Vec& y) const;

    bool has_df_dt() const { return bool(problem_->df_dt); }
    Vec df_dt(double t, const Vec& y) const;

private:
    void check_dim(const Vec& y, const char* what) const;

    const OdeProblem* problem_;
    StatsCounters* stats_;
    mutable std::optional<Mat> lin_op_cache_;
};

} // namespace expode
