#pragma once

#include "expode/options.hpp"
#include "expode/phi.hpp"
#include "expode/problem.hpp"
#include "expode/types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace expode {

/// How the evaluator reaches the operator it takes functions of (the
/// Jacobian at (t,y), or the constant linear part). The driver refreshes
/// these closures for every run; the callables may be null when the
/// respective access path does not exist for the problem.
struct OperatorAccess {
    Eigen::Index n = 0;
    std::function<Mat(double, const Vec&)> matrix;
    std::function<Vec(double, const Vec&, const Vec&)> apply;
};

/// The jobs an integrator wants evaluated: flag -> coefficient matrix.
/// Row r of jobs[flag] describes one output column, its entry in column m
/// weighting job_functions[m] (a phi index with an h-scale).
struct JobTable {
    std::vector<PhiDescriptor> job_functions;
    std::map<std::string, Mat> jobs;

    void check() const; // throws ValidationError
};

struct EvaluatorCaps {
    bool need_jac_explicit = false;
    bool need_gjac_explicit = false;
    std::string description;
};

/// Matrix function evaluator lifecycle:
///   init -> register_jobs -> (init_step -> evaluate...)* -> cleanup
/// register_jobs may be called again mid-run (multistep methods swap in
/// their full table once the startup phase is over).
class MatrixFunctionEvaluator {
public:
    virtual ~MatrixFunctionEvaluator() = default;

    virtual EvaluatorCaps init(const OperatorAccess& op, const NormalizedOptions& opts) = 0;
    virtual void register_jobs(JobTable jobs) = 0;

    /// Prepare for several evaluations with the same t, y and h.
    virtual void init_step(double t, const Vec& y, double h) = 0;

    /// Returns an n x rows matrix, column r holding
    ///   sum_m jobs[flag](r,m) * phi_{fm}(fm.scale * h * M) * v.
    /// With facs > 1 the flag must have exactly one row and the result is
    /// n x facs, column j-1 evaluated at argument j*h*M.
    /// reusable: save per-flag state; reuse: consume it (same t, y, v).
    virtual Mat evaluate(const std::string& flag, const Vec& v, bool reusable = false,
                         bool reuse = false, int facs = 1) = 0;

    virtual void cleanup() = 0;
    virtual std::string description() const = 0;
    virtual std::string statistics() const = 0;
    virtual void collect_stats(StatsCounters& stats) const = 0;
};

/// Dense diagonalization backend; needs explicit matrix access.
std::unique_ptr<MatrixFunctionEvaluator> make_direct_evaluator();

/// Krylov subspace backend; works with product-only access.
std::unique_ptr<MatrixFunctionEvaluator> make_arnoldi_evaluator();

/// Dispatches on the MatrixFunctions option; a function_handle value must
/// hold a shared_ptr<MatrixFunctionEvaluator>.
std::shared_ptr<MatrixFunctionEvaluator> make_evaluator(const NormalizedOptions& opts);

} // namespace expode
