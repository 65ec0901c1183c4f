#include "expode/driver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

namespace expode {

namespace {

std::atomic<long> next_run_id{1};

std::string fmt(const char* format, ...) {
    char buf[256];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

} // namespace

Logger::Logger() : run_id_(int(next_run_id.fetch_add(1))) {
    for (auto& s : sinks_)
        s = nullptr;
}

void Logger::route(LogChannel ch, std::ostream* sink) { sinks_[int(ch)] = sink; }

void Logger::route_all(std::ostream* sink) {
    for (auto& s : sinks_)
        s = sink;
}

void Logger::line(LogChannel ch, const std::string& text) {
    std::ostream* s = sinks_[int(ch)];
    if (!s)
        return;
    (*s) << "run " << run_id_ << ": " << text << "\n";
}

double error_norm(const StepController& ctrl, const Vec& err, const Vec& y_old,
                  const Vec& y_new) {
    if (ctrl.norm_control) {
        double at = ctrl.abs_tol.minCoeff();
        return err.norm() / (at + ctrl.rel_tol * std::max(y_old.norm(), y_new.norm()));
    }
    double worst = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        double at = ctrl.abs_tol(ctrl.abs_tol.size() == 1 ? 0 : i);
        double scale = at + ctrl.rel_tol * std::max(std::abs(y_old(i)), std::abs(y_new(i)));
        worst = std::max(worst, std::abs(err(i)) / scale);
    }
    return worst;
}

std::pair<bool, double> propose_step(const StepController& ctrl, double h, double err_norm) {
    if (ctrl.h_constant)
        return {true, h};
    bool accept = err_norm <= 1.0;
    double factor = ctrl.growth;
    if (err_norm > 0.0)
        factor = std::clamp(ctrl.safety * std::pow(err_norm, -1.0 / ctrl.error_order),
                            ctrl.shrink, ctrl.growth);
    double h_next = std::clamp(h * factor, ctrl.h_min, ctrl.h_max);
    return {accept, h_next};
}

// ---------------------------------------------------------------------------
// dense output

namespace {

// Cubic hermite on one step from the endpoint values and slopes;
// data = { F(t0, y_left), F(t0+h, y_right) }.
Vec hermite_segment(const DenseSegment& s, double th) {
    double t2 = th * th, t3 = t2 * th;
    return (2 * t3 - 3 * t2 + 1) * s.y_left + (t3 - 2 * t2 + th) * s.h * s.data[0] +
           (-2 * t3 + 3 * t2) * s.y_right + (t3 - t2) * s.h * s.data[1];
}

const DenseSegment& locate_segment(const Solution& sol, double t) {
    if (!sol.dense_generator || sol.dense.empty())
        throw IntegrationError("dense output is not available; enable DOGenerator");
    const auto& segs = sol.dense;
    double dir = segs.front().h >= 0 ? 1.0 : -1.0;
    double lo = segs.front().t0;
    double hi = segs.back().t0 + segs.back().h;
    double slack = 1e-10 * (std::abs(hi - lo) + 1.0);
    if (dir * (t - lo) < -slack || dir * (t - hi) > slack)
        throw IntegrationError(fmt("dense output query at t = %g is outside [%g, %g]", t,
                                   std::min(lo, hi), std::max(lo, hi)));
    auto it = std::upper_bound(segs.begin(), segs.end(), t,
                               [dir](double tv, const DenseSegment& s) {
                                   return dir * tv < dir * s.t0;
                               });
    size_t idx = it == segs.begin() ? 0 : size_t(it - segs.begin()) - 1;
    return segs[idx];
}

} // namespace

std::pair<Vec, Vec> dense_eval(const Solution& sol, double t) {
    const DenseSegment& s = locate_segment(sol, t);
    double th = std::clamp((t - s.t0) / s.h, 0.0, 1.0);
    Vec y = sol.dense_generator(s, th);
    // Five-point stencil in theta; the built-in generators are low-degree
    // polynomials in theta, so this is exact up to roundoff.
    const double d = 1e-3;
    Vec dy = (sol.dense_generator(s, th - 2 * d) - 8.0 * sol.dense_generator(s, th - d) +
              8.0 * sol.dense_generator(s, th + d) - sol.dense_generator(s, th + 2 * d)) /
             (12.0 * d * s.h);
    return {std::move(y), std::move(dy)};
}

std::pair<Mat, Mat> dense_eval(const Solution& sol, const std::vector<double>& ts) {
    Eigen::Index n = sol.y.cols();
    Mat y(Eigen::Index(ts.size()), n), dy(Eigen::Index(ts.size()), n);
    for (size_t i = 0; i < ts.size(); ++i) {
        auto [yi, di] = dense_eval(sol, ts[i]);
        y.row(Eigen::Index(i)) = yi.transpose();
        dy.row(Eigen::Index(i)) = di.transpose();
    }
    return {std::move(y), std::move(dy)};
}

Solution refine_output(const Solution& sol, int refine) {
    if (refine < 1)
        throw ValidationError("Refine must be a positive integer");
    if (refine == 1)
        return sol;
    if (!sol.dense_generator || sol.dense.empty())
        throw IntegrationError("Refine > 1 needs dense output; enable DOGenerator");

    Solution out = sol;
    out.t.clear();
    std::vector<Vec> rows;
    for (const DenseSegment& s : sol.dense) {
        out.t.push_back(s.t0);
        rows.push_back(s.y_left);
        for (int i = 1; i < refine; ++i) {
            double th = double(i) / refine;
            out.t.push_back(s.t0 + th * s.h);
            rows.push_back(sol.dense_generator(s, th));
        }
    }
    const DenseSegment& last = sol.dense.back();
    out.t.push_back(last.t0 + last.h);
    rows.push_back(last.y_right);

    out.y.resize(Eigen::Index(rows.size()), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
        out.y.row(Eigen::Index(i)) = rows[i].transpose();
    return out;
}

// ---------------------------------------------------------------------------
// integrate

namespace {

// Largest step size <= h_want that divides all the given gaps (to fp
// accuracy), so a constant-step run lands on every target point.
double common_step(const std::vector<double>& gaps, double h_want) {
    double g = std::numeric_limits<double>::infinity();
    for (double gap : gaps)
        g = std::min(g, std::abs(gap));
    auto divides = [&](double hh) {
        for (double gap : gaps) {
            double m = std::abs(gap) / hh;
            if (std::abs(m - std::round(m)) > 1e-8 * std::max(1.0, m))
                return false;
        }
        return true;
    };
    double d = 0.0;
    for (int m = 1; m <= 4096; ++m) {
        if (divides(g / m)) {
            d = g / m;
            break;
        }
    }
    if (d == 0.0)
        throw ValidationError("output times are not commensurable with a constant step size");
    return d / std::ceil(d / h_want - 1e-9);
}

} // namespace

Solution integrate(const OdeProblem& problem, const OptionsSet& options, Logger* log) {
    Logger silent;
    if (!log)
        log = &silent;

    problem.check();
    NormalizedOptions n = validate(options);
    if (n.flag("Complex"))
        throw ValidationError("complex phase space is not supported");
    auto has_opt = [&n](const char* name) { return n.raw.count(name) != 0; };

    auto ctx = std::make_shared<RunContext>();
    ctx->integrator = n.integrator;
    ctx->t0 = problem.t0;
    ctx->T = problem.t_end;
    ctx->duration = std::abs(problem.t_end - problem.t0);
    ctx->t_dir = problem.t_end > problem.t0 ? 1.0 : -1.0;
    ctx->y0 = problem.y0;
    ctx->ylen = problem.dim;
    ctx->options = n;

    Solution sol;
    sol.integrator = n.integrator;
    OdeFunctions f(problem, sol.stats);
    std::shared_ptr<MatrixFunctionEvaluator> evaluator = make_evaluator(n);
    std::unique_ptr<Integrator> integ = make_integrator(n.integrator);

    auto ctrl = std::make_shared<StepController>();
    ctrl->abs_tol = n.numbers("AbsTol");
    if (ctrl->abs_tol.size() != 1 && ctrl->abs_tol.size() != problem.dim)
        throw ValidationError("AbsTol vector length does not match the problem dimension");
    ctrl->rel_tol = n.number("RelTol");
    ctrl->norm_control = n.flag("NormControl");
    ErrorNorm en = [ctrl](const Vec& e, const Vec& yo, const Vec& yn) {
        return error_norm(*ctrl, e, yo, yn);
    };

    IntegratorSetup meta = integ->setup(f, *evaluator, n, en);
    ctx->meta = meta;
    log->line(LogChannel::status,
              "Matrix functions evaluated " + evaluator->description() + ".");

    const double tdir = ctx->t_dir;
    const double dur = ctx->duration;
    const double T = ctx->T;
    const double eps_t = 1e-12 * std::max(1.0, dur);
    const double grid_tol = 1e-9 * std::max(1.0, dur);
    bool variable = meta.error_order > 0 && !n.constant_step;
    bool h_const = variable && has_opt("hConstant") && n.flag("hConstant");

    double t = problem.t0;
    Vec y = problem.y0;
    integ->begin(t, y);

    const std::vector<double>& grid = problem.output_times;
    bool use_grid = !grid.empty();

    double h; // step size magnitude the controller works with
    if (variable || h_const) {
        ctrl->h_max = has_opt("MaxStep") && !n.is_auto("MaxStep") ? n.number("MaxStep") : dur;
        ctrl->h_min = has_opt("MinStep") && !n.is_auto("MinStep")
                          ? n.number("MinStep")
                          : 16.0 * std::numeric_limits<double>::epsilon() * dur;
        if (ctrl->h_min > ctrl->h_max)
            throw ValidationError("MinStep exceeds MaxStep");
        if (!n.is_auto("InitialStep")) {
            h = n.number("InitialStep");
        } else {
            double fn = integ->get_old_f(0).first.lpNorm<Eigen::Infinity>();
            double at = ctrl->abs_tol.minCoeff();
            h = 1e-2 * dur * std::pow(at / (fn + at), 1.0 / meta.order);
        }
        h = std::clamp(h, ctrl->h_min, ctrl->h_max);
    } else {
        // Constant-step integrator class: round the step so the run lands
        // on T (and on every output time) with one unchanging h.
        double h_want = n.is_auto("InitialStep") ? dur / 100.0 : n.number("InitialStep");
        if (n.is_auto("InitialStep"))
            log->line(LogChannel::warning,
                      fmt("StepSize not given, using %g", h_want));
        std::vector<double> gaps;
        if (use_grid) {
            for (size_t i = 1; i < grid.size(); ++i)
                gaps.push_back(grid[i] - grid[i - 1]);
            if (std::abs(grid.back() - T) > eps_t)
                gaps.push_back(T - grid.back());
        } else {
            gaps.push_back(dur);
        }
        h = common_step(gaps, h_want);
        ctrl->h_min = ctrl->h_max = h;
    }
    ctrl->h_initial = h;
    ctrl->h_constant = h_const || !variable;
    ctrl->error_order = variable ? meta.error_order : 1;
    ctx->controller = *ctrl;

    // dense output selection
    DenseGenerator gen;
    if (const Handle* hg = n.handle("DOGenerator")) {
        try {
            gen = std::any_cast<DenseGenerator>(hg->value);
        } catch (const std::bad_any_cast&) {
            throw ValidationError("DOGenerator handle must hold a DenseGenerator");
        }
    } else if (n.flag("DOGenerator")) {
        gen = meta.provides_dense ? integ->dense_generator() : DenseGenerator(hermite_segment);
    }
    bool collect_dense = bool(gen);

    // output callback
    OutputFcn out_fcn;
    if (const Handle* hf = n.handle("OutputFcn")) {
        try {
            out_fcn = std::any_cast<OutputFcn>(hf->value);
        } catch (const std::bad_any_cast&) {
            throw ValidationError("OutputFcn handle must hold an output callback");
        }
    }
    std::vector<Eigen::Index> sel;
    if (!n.is_auto("OutputSel")) {
        Vec s = n.numbers("OutputSel");
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            auto idx = Eigen::Index(s(i));
            if (idx < 1 || idx > problem.dim)
                throw ValidationError("OutputSel index out of range");
            sel.push_back(idx - 1);
        }
    }
    auto select = [&sel](const Vec& v) {
        if (sel.empty())
            return v;
        Vec out(Eigen::Index(sel.size()));
        for (size_t i = 0; i < sel.size(); ++i)
            out(Eigen::Index(i)) = v(sel[i]);
        return out;
    };

    bool stats_on = n.flag("Stats");
    bool mf_stats_on = n.flag("MatrixFunctionStats");
    bool step_stats_on = has_opt("StepStats") && n.flag("StepStats");
    bool jac_stats_on = has_opt("JacobianStats") && n.flag("JacobianStats");
    bool lin_stats_on = has_opt("LinOpStats") && n.flag("LinOpStats");
    bool waitbar = n.flag("Waitbar");
    int next_pct = 10;

    // result rows; in grid mode with dense output the rows are produced
    // from the segments after the loop instead
    bool grid_from_dense = use_grid && collect_dense;
    bool grid_truncate = use_grid && !collect_dense && (variable || h_const);
    std::vector<double> ts;
    std::vector<Vec> rows;
    auto record = [&](double tt, const Vec& yy) {
        ts.push_back(tt);
        rows.push_back(yy);
    };
    if (!grid_from_dense)
        record(use_grid ? grid.front() : t, y);
    size_t gi = 1; // next grid index to hit / record
    if (out_fcn)
        out_fcn(t, select(y));

    long k_const = 0; // accepted steps, for drift-free constant-step times
    const double t0 = t;
    bool rejected_last = false;
    int consecutive_rejects = 0;

    while (tdir * (T - t) > eps_t) {
        double h_mag = std::clamp(h, ctrl->h_min, ctrl->h_max);
        double remaining = tdir * (T - t);
        bool hit_end = false;
        double h_use = h_mag;
        if (h_use >= remaining - eps_t) {
            h_use = remaining;
            hit_end = true;
        }
        bool hit_grid = false;
        if (grid_truncate && gi < grid.size()) {
            double to_next = tdir * (grid[gi] - t);
            if (to_next > eps_t && to_next <= h_use + eps_t) {
                h_use = to_next;
                hit_end = false;
                hit_grid = true;
            }
        }

        StepResult r = integ->step(t, y, tdir * h_use, rejected_last);
        double h_eff = std::abs(r.h_out);
        bool reduced = h_eff < h_use * (1.0 - 1e-12);
        bool truncated = !reduced && (hit_end || hit_grid);

        bool accept;
        double h_next;
        if (variable) {
            std::tie(accept, h_next) = propose_step(*ctrl, h_eff, r.norm_err);
        } else {
            accept = true;
            h_next = h_mag;
        }
        if (step_stats_on)
            log->line(LogChannel::step,
                      fmt("t = %.6g  h = %.6g  err = %.3g  %s", t, tdir * h_eff,
                          r.norm_err, accept ? "accepted" : "rejected"));

        if (!accept) {
            sol.stats.n_rejected++;
            rejected_last = true;
            if (++consecutive_rejects > 64 || h_eff <= ctrl->h_min * (1.0 + 1e-12)) {
                std::string msg = fmt("step size underflow at t = %g: the controller "
                                      "requires a step below MinStep = %g",
                                      t, ctrl->h_min);
                log->line(LogChannel::error, msg);
                throw IntegrationError(msg);
            }
            h = h_next;
            continue;
        }

        double t_new;
        if (!variable) {
            // steps from the start point, not accumulated, so the constant
            // grid stays exact
            ++k_const;
            t_new = hit_end ? T : t0 + tdir * double(k_const) * h;
        } else if (!reduced && hit_end) {
            t_new = T;
        } else if (!reduced && hit_grid) {
            t_new = grid[gi];
        } else {
            t_new = t + tdir * h_eff;
        }

        Vec f_left;
        if (collect_dense && !r.dense)
            f_left = integ->get_old_f(0).first;
        integ->accept(t_new, r.y_new);
        sol.stats.n_steps++;
        consecutive_rejects = 0;
        rejected_last = false;

        if (collect_dense) {
            if (r.dense) {
                sol.dense.push_back(std::move(*r.dense));
            } else {
                DenseSegment seg;
                seg.t0 = t;
                seg.h = t_new - t;
                seg.y_left = y;
                seg.y_right = r.y_new;
                seg.data = {std::move(f_left), integ->get_old_f(0).first};
                sol.dense.push_back(std::move(seg));
            }
        }

        if (!use_grid) {
            record(t_new, r.y_new);
        } else if (gi < grid.size() && std::abs(t_new - grid[gi]) <= grid_tol) {
            if (!grid_from_dense)
                record(grid[gi], r.y_new);
            ++gi;
        }
        if (out_fcn)
            out_fcn(t_new, select(r.y_new));
        if (waitbar) {
            int pct = int(100.0 * std::abs(t_new - t0) / dur);
            while (pct >= next_pct && next_pct <= 100) {
                log->line(LogChannel::status, fmt("%d%% done", next_pct));
                next_pct += 10;
            }
        }

        t = t_new;
        y = r.y_new;
        if (variable && (!truncated || reduced))
            h = h_next;
    }

    sol.dense_generator = collect_dense ? gen : DenseGenerator();
    if (grid_from_dense) {
        ts.clear();
        rows.clear();
        for (double gp : grid) {
            ts.push_back(gp);
            if (std::abs(gp - t0) <= eps_t)
                rows.push_back(problem.y0);
            else
                rows.push_back(dense_eval(sol, gp).first);
        }
    }
    sol.t = std::move(ts);
    sol.y.resize(Eigen::Index(rows.size()), problem.dim);
    for (size_t i = 0; i < rows.size(); ++i)
        sol.y.row(Eigen::Index(i)) = rows[i].transpose();

    evaluator->collect_stats(sol.stats);
    ctx->evaluator_description = evaluator->description();
    ctx->evaluator_statistics = evaluator->statistics();
    evaluator->cleanup();

    if (stats_on) {
        log->line(LogChannel::statistics, fmt("%ld successful steps", sol.stats.n_steps));
        log->line(LogChannel::statistics, fmt("%ld failed attempts", sol.stats.n_rejected));
        log->line(LogChannel::statistics,
                  fmt("%ld function evaluations", sol.stats.n_rhs_evals));
        log->line(LogChannel::statistics,
                  fmt("%ld partial derivatives", sol.stats.n_jac_evals));
    }
    if (mf_stats_on) {
        std::istringstream lines(ctx->evaluator_statistics);
        for (std::string ln; std::getline(lines, ln);)
            log->line(LogChannel::matfun, ln);
    }
    if (jac_stats_on)
        log->line(LogChannel::jac, fmt("%ld Jacobian evaluations", sol.stats.n_jac_evals));
    if (lin_stats_on)
        log->line(LogChannel::jac, "linear part evaluated once and cached");

    int refine = int(n.number("Refine"));
    if (refine > 1) {
        if (use_grid)
            log->line(LogChannel::warning,
                      "Refine ignored: output times were given explicitly");
        else
            sol = refine_output(sol, refine);
    }

    if (!n.flag("ClearInternalData"))
        sol.internal = ctx;
    return sol;
}

} // namespace expode
