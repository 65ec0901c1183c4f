#pragma once

#include "expode/matfun.hpp"
#include "expode/options.hpp"
#include "expode/problem.hpp"
#include "expode/scheme.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

namespace expode {

/// Tolerance-scaled error measure supplied by the driver; a step is
/// acceptable when the returned value is <= 1.
using ErrorNorm = std::function<double(const Vec& err, const Vec& y_old, const Vec& y_new)>;

struct IntegratorSetup {
    int order = 1;
    int error_order = 0; // 0: no embedded estimate, constant steps only
    int multi_step = 1;
    bool semilin = false;
    bool provides_dense = false;
};

struct StepResult {
    Vec y_new;
    double norm_err = 0.0; // 0 for constant-step methods
    double h_out = 0.0;    // < h when the evaluator forced a reduction
    std::optional<DenseSegment> dense;
};

/// One integrator class bound to a single run. Lifecycle:
///   setup -> begin -> (step -> [accept])* ; step is speculative, the
/// driver commits it with accept or retries with reuse = true.
class Integrator {
public:
    virtual ~Integrator() = default;

    virtual IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                                  const NormalizedOptions& opts, ErrorNorm error_norm) = 0;

    /// Seeds the history with the initial point (one RHS evaluation).
    virtual void begin(double t0, const Vec& y0) = 0;

    virtual StepResult step(double t, const Vec& y, double h, bool reuse) = 0;

    /// Commits an accepted step; caches the RHS at the new point.
    virtual void accept(double t_new, const Vec& y_new) = 0;

    /// Cached (F, G) values, newest at steps_back = 0; G is empty for
    /// non-semilinear methods. Never re-evaluates.
    virtual std::pair<Vec, Vec> get_old_f(int steps_back) const = 0;

    /// Dense-output formula for this method's segments; empty when the
    /// method has none of its own.
    virtual DenseGenerator dense_generator() const { return {}; }
};

std::unique_ptr<Integrator> make_integrator(const std::string& name);

} // namespace expode
