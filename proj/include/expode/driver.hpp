#pragma once

#include "expode/integrators.hpp"
#include "expode/matfun.hpp"
#include "expode/options.hpp"
#include "expode/problem.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace expode {

/// Step-size control state derived from the tolerance options.
struct StepController {
    Vec abs_tol;              // length 1 or n
    double rel_tol = 1e-3;
    bool norm_control = false;
    double h_min = 0.0;
    double h_max = 0.0;
    double h_initial = 0.0;
    bool h_constant = false;
    double safety = 0.9;
    double shrink = 0.2;
    double growth = 5.0;
    int error_order = 1;
};

/// Tolerance-scaled error measure; a step is acceptable at <= 1.
double error_norm(const StepController& ctrl, const Vec& err, const Vec& y_old,
                  const Vec& y_new);

/// Acceptance decision plus the next step size (clamped to the bounds).
std::pair<bool, double> propose_step(const StepController& ctrl, double h, double err_norm);

/// Log channels; each can be routed to a stream or ignored independently.
enum class LogChannel { verbose, status, statistics, jac, step, matfun, warning, error };

class Logger {
public:
    Logger(); // all channels silent
    void route(LogChannel ch, std::ostream* sink);
    void route_all(std::ostream* sink);
    void line(LogChannel ch, const std::string& text);

private:
    std::ostream* sinks_[8];
    int run_id_;
};

/// The run's bookkeeping, kept on the Solution when ClearInternalData is
/// off.
struct RunContext {
    std::string integrator;
    double t0 = 0.0;
    double T = 0.0;
    double duration = 0.0;
    double t_dir = 1.0;
    Vec y0;
    Eigen::Index ylen = 0;
    NormalizedOptions options;
    IntegratorSetup meta;
    StepController controller;
    std::string evaluator_description;
    std::string evaluator_statistics;
};

/// Runs the whole integration: validation, setup, step loop, dense
/// output, statistics. The options decide the integrator unless the
/// OptionsSet already names one.
Solution integrate(const OdeProblem& problem, const OptionsSet& options,
                   Logger* log = nullptr);

/// Evaluates the dense output at t (and its time derivative).
std::pair<Vec, Vec> dense_eval(const Solution& sol, double t);
std::pair<Mat, Mat> dense_eval(const Solution& sol, const std::vector<double>& ts);

/// Inserts refine-1 dense-output points into every step of the solution.
Solution refine_output(const Solution& sol, int refine);

/// Per-step output callback type for the OutputFcn option handle.
using OutputFcn = std::function<void(double t, const Vec& y_selected)>;

} // namespace expode
