#include "expode/integrators.hpp"

#include "expode/phi.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace expode {

namespace {

// ---------------------------------------------------------------------------
// shared machinery

OperatorAccess jacobian_access(OdeFunctions& f) {
    OperatorAccess op;
    op.n = f.dim();
    if (f.has_jacobian_matrix())
        op.matrix = [&f](double t, const Vec& y) { return f.jacobian(t, y); };
    if (f.has_jacobian())
        op.apply = [&f](double t, const Vec& y, const Vec& v) {
            return f.jacobian_v(t, y, v);
        };
    return op;
}

OperatorAccess lin_op_access(OdeFunctions& f) {
    OperatorAccess op;
    op.n = f.dim();
    if (f.has_lin_op_matrix())
        op.matrix = [&f](double, const Vec&) { return f.lin_op(); };
    if (f.has_lin_op())
        op.apply = [&f](double, const Vec&, const Vec& v) { return f.lin_op_v(v); };
    return op;
}

class IntegratorBase : public Integrator {
public:
    void begin(double t0, const Vec& y0) override {
        hist_.clear();
        push_history(t0, y0);
    }

    void accept(double t_new, const Vec& y_new) override { push_history(t_new, y_new); }

    std::pair<Vec, Vec> get_old_f(int steps_back) const override {
        if (steps_back < 0 || steps_back >= multi_step_ ||
            steps_back >= int(hist_.size()))
            throw ValidationError("getOldF: history index out of range");
        const Hist& h = hist_[size_t(steps_back)];
        return {h.F, h.G};
    }

protected:
    struct Hist {
        double t;
        Vec y;
        Vec F;
        Vec G; // only kept for semilinear methods
    };

    void bind(OdeFunctions& f, MatrixFunctionEvaluator& mf, const NormalizedOptions& opts,
              ErrorNorm norm) {
        f_ = &f;
        mf_ = &mf;
        opts_ = opts;
        norm_ = std::move(norm);
        non_autonomous_ = opts_.flag("NonAutonomous");
        if (non_autonomous_ && !f.has_df_dt())
            throw ValidationError(
                "NonAutonomous is on but the problem provides no df_dt");
    }

    void push_history(double t, const Vec& y) {
        Hist h;
        h.t = t;
        h.y = y;
        h.F = f_->rhs(t, y);
        if (semilin_)
            h.G = h.F - f_->lin_op_v(y);
        hist_.push_front(std::move(h));
        while (int(hist_.size()) > multi_step_)
            hist_.pop_back();
    }

    // RHS at the step's base point, served from the history cache.
    const Vec& current_F(double t, const Vec& y) {
        if (!hist_.empty() && hist_.front().t == t && hist_.front().y.size() == y.size() &&
            hist_.front().y == y)
            return hist_.front().F;
        scratch_F_ = f_->rhs(t, y);
        return scratch_F_;
    }

    OdeFunctions* f_ = nullptr;
    MatrixFunctionEvaluator* mf_ = nullptr;
    NormalizedOptions opts_;
    ErrorNorm norm_;
    bool non_autonomous_ = false;
    bool semilin_ = false;
    int multi_step_ = 1;
    std::deque<Hist> hist_;

private:
    Vec scratch_F_;
};

// Retries an attempt with halved h while the evaluator keeps requesting a
// step size reduction.
template <typename Attempt>
StepResult with_reduction(double h, Attempt&& attempt) {
    for (int tries = 0; tries < 40; ++tries) {
        try {
            return attempt(h, tries > 0);
        } catch (const StepReductionRequest&) {
            h *= 0.5;
        }
    }
    throw IntegrationError("matrix function evaluation kept failing under step reduction");
}

[[noreturn]] void reduction_unsupported(const StepReductionRequest& e) {
    throw IntegrationError(std::string("constant-step method cannot reduce the step size: ") +
                           e.what());
}

// ---------------------------------------------------------------------------
// exprk: exponential Runge-Kutta with constant steps (semilinear)

class ExprkIntegrator final : public IntegratorBase {
public:
    IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                          const NormalizedOptions& opts, ErrorNorm norm) override {
        bind(f, mf, opts, std::move(norm));
        semilin_ = true;
        if (!f.has_lin_op())
            throw ValidationError("exprk: the problem has no linear part (LinOp)");
        if (const Handle* h = opts.handle("Scheme"))
            scheme_ = std::any_cast<RkScheme>(h->value);
        else
            scheme_ = scheme_by_name(opts.list_name("Scheme"));
        scheme_.check();
        zero_ = Vec::Zero(f.dim());
        mf.init(lin_op_access(f), opts);
        build_jobs();

        IntegratorSetup s;
        s.order = scheme_.stages; // bundled schemes: stage count == order
        s.error_order = 0;
        s.multi_step = 1;
        s.semilin = true;
        return s;
    }

    StepResult step(double t, const Vec& y, double h, bool) override {
        try {
            return run_step(t, y, h);
        } catch (const StepReductionRequest& e) {
            reduction_unsupported(e);
        }
    }

private:
    // Column layout of the registered job functions: phi_1..phi_4 for every
    // distinct stage scale plus scale 1 for the weight rows.
    Eigen::Index fun_col(double scale, int phi_index) const {
        for (size_t s = 0; s < scales_.size(); ++s)
            if (scales_[s] == scale)
                return Eigen::Index(4 * s + size_t(phi_index - 1));
        throw ValidationError("exprk: internal scale lookup failure");
    }

    void build_jobs() {
        scales_.clear();
        auto add_scale = [&](double s) {
            if (std::find(scales_.begin(), scales_.end(), s) == scales_.end())
                scales_.push_back(s);
        };
        for (int i = 1; i < scheme_.stages; ++i) {
            bool used = false;
            for (int j = 0; j < i; ++j)
                used = used || scheme_.a[size_t(i)][size_t(j)].size() > 0;
            if (!used)
                continue;
            if (!(scheme_.c(i) > 0.0))
                throw ValidationError("exprk: internal stage with non-positive node");
            add_scale(scheme_.c(i));
        }
        add_scale(1.0);

        JobTable table;
        for (double s : scales_)
            for (int k = 1; k <= 4; ++k)
                table.job_functions.push_back({k, s});

        row_targets_.assign(size_t(scheme_.stages), {});
        Eigen::Index width = Eigen::Index(table.job_functions.size());
        for (int j = 0; j < scheme_.stages; ++j) {
            std::vector<Vec> rows;
            for (int i = j + 1; i < scheme_.stages; ++i) {
                const Vec& a = scheme_.a[size_t(i)][size_t(j)];
                if (a.size() == 0)
                    continue;
                Vec row = Vec::Zero(width);
                for (Eigen::Index k = 0; k < a.size(); ++k)
                    row(fun_col(scheme_.c(i), int(k) + 1)) = a(k);
                rows.push_back(row);
                row_targets_[size_t(j)].push_back(i);
            }
            if (scheme_.b[size_t(j)].size() > 0) {
                const Vec& b = scheme_.b[size_t(j)];
                Vec row = Vec::Zero(width);
                for (Eigen::Index k = 0; k < b.size(); ++k)
                    row(fun_col(1.0, int(k) + 1)) = b(k);
                rows.push_back(row);
                row_targets_[size_t(j)].push_back(-1);
            }
            if (rows.empty())
                continue;
            Mat m(Eigen::Index(rows.size()), width);
            for (size_t r = 0; r < rows.size(); ++r)
                m.row(Eigen::Index(r)) = rows[r];
            table.jobs["S" + std::to_string(j + 1)] = m;
        }
        mf_->register_jobs(table);
    }

    StepResult run_step(double t, const Vec& y, double h) {
        // the linear part is constant: key the evaluator cache on a fixed
        // point so the factorization survives the whole run
        mf_->init_step(0.0, zero_, h);
        Vec Ay = f_->lin_op_v(y);
        std::vector<Vec> stage_acc(size_t(scheme_.stages), Vec::Zero(f_->dim()));
        Vec b_acc = Vec::Zero(f_->dim());
        for (int j = 0; j < scheme_.stages; ++j) {
            if (row_targets_[size_t(j)].empty())
                continue;
            Vec v;
            if (j == 0) {
                v = current_F(t, y); // g(t, u_n) + A u_n
            } else {
                Vec Uj = y + h * stage_acc[size_t(j)];
                v = f_->g(t + scheme_.c(j) * h, Uj) + Ay;
            }
            Mat res = mf_->evaluate("S" + std::to_string(j + 1), v);
            for (size_t r = 0; r < row_targets_[size_t(j)].size(); ++r) {
                int target = row_targets_[size_t(j)][r];
                if (target < 0)
                    b_acc += res.col(Eigen::Index(r));
                else
                    stage_acc[size_t(target)] += res.col(Eigen::Index(r));
            }
        }
        StepResult out;
        out.y_new = y + h * b_acc;
        out.norm_err = 0.0;
        out.h_out = h;
        return out;
    }

    RkScheme scheme_;
    std::vector<double> scales_;
    std::vector<std::vector<int>> row_targets_; // per flag row: stage index or -1 = weights
    Vec zero_;
};

// ---------------------------------------------------------------------------
// exprb: exponential Rosenbrock-type one-step methods with step control

class ExprbIntegrator final : public IntegratorBase {
public:
    IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                          const NormalizedOptions& opts, ErrorNorm norm) override {
        bind(f, mf, opts, std::move(norm));
        if (!f.has_jacobian())
            throw ValidationError("exprb: the problem has no Jacobian");
        order_ = int(opts.list_numeric("Order"));
        mf.init(jacobian_access(f), opts);
        register_table();

        IntegratorSetup s;
        s.order = order_ == 32 ? 3 : 4;
        s.error_order = order_ == 32 ? 3 : 4;
        s.multi_step = 1;
        return s;
    }

    StepResult step(double t, const Vec& y, double h, bool reuse) override {
        return with_reduction(h, [&](double hc, bool retried) {
            return attempt(t, y, hc, reuse || retried);
        });
    }

private:
    void register_table() {
        JobTable table;
        // the fixed exprb function set: phi_1..phi_4 and the half-step pair
        table.job_functions = {{1, 1.0}, {2, 1.0}, {3, 1.0}, {4, 1.0}, {1, 0.5}, {2, 0.5}};
        auto row = [](std::initializer_list<double> v) {
            Vec r = Vec::Zero(6);
            Eigen::Index i = 0;
            for (double x : v)
                r(i++) = x;
            return r;
        };
        auto mat = [](std::initializer_list<Vec> rows) {
            Mat m(Eigen::Index(rows.size()), 6);
            Eigen::Index i = 0;
            for (const Vec& r : rows)
                m.row(i++) = r;
            return m;
        };
        if (order_ == 32) {
            table.jobs["F"] = mat({row({1, 0, 0, 0, 0, 0})});
            table.jobs["D2"] = mat({row({0, 0, 2, 0, 0, 0})});
            if (non_autonomous_)
                table.jobs["v"] = mat({row({0, 1, 0, 0, 0, 0})});
        } else {
            // rows: phi_1(hJ), phi_1(hJ/2)
            table.jobs["F"] = mat({row({1, 0, 0, 0, 0, 0}), row({0, 0, 0, 0, 1, 0})});
            // rows: phi_1 (for U3), the phi_3 part, the phi_4 part
            table.jobs["D2"] = mat({row({1, 0, 0, 0, 0, 0}), row({0, 0, 16, 0, 0, 0}),
                                    row({0, 0, 0, -48, 0, 0})});
            table.jobs["D3"] =
                mat({row({0, 0, -2, 0, 0, 0}), row({0, 0, 0, 12, 0, 0})});
            if (non_autonomous_)
                table.jobs["v"] = mat({row({0, 1, 0, 0, 0, 0}), row({0, 0, 0, 0, 0, 1})});
        }
        mf_->register_jobs(table);
    }

    // product of the step's (frozen) Jacobian with w
    Vec Jw(double t, const Vec& y, const Vec& w) {
        if (f_->has_jacobian_matrix()) {
            if (!J_valid_) {
                J_ = f_->jacobian(t, y);
                J_valid_ = true;
            }
            return J_ * w;
        }
        return f_->jacobian_v(t, y, w);
    }

    StepResult attempt(double t, const Vec& y, double h, bool reuse) {
        J_valid_ = false;
        mf_->init_step(t, y, h);
        const Vec& F = current_F(t, y);
        Vec vn;
        Mat phiv;
        if (non_autonomous_) {
            vn = f_->df_dt(t, y);
            phiv = mf_->evaluate("v", vn, true, reuse);
        }
        Mat phiF = mf_->evaluate("F", F, true, reuse);

        StepResult out;
        out.h_out = h;
        if (order_ == 32) {
            Vec U2 = y + h * phiF.col(0);
            if (non_autonomous_)
                U2 += h * h * phiv.col(0);
            Vec D2 = f_->rhs(t + h, U2) - F - Jw(t, y, U2 - y);
            if (non_autonomous_)
                D2 -= h * vn;
            Vec corr = h * mf_->evaluate("D2", D2).col(0);
            out.y_new = U2 + corr;
            out.norm_err = norm_(corr, y, out.y_new);
        } else {
            Vec U2 = y + 0.5 * h * phiF.col(1);
            if (non_autonomous_)
                U2 += 0.25 * h * h * phiv.col(1);
            Vec D2 = f_->rhs(t + 0.5 * h, U2) - F - Jw(t, y, U2 - y);
            if (non_autonomous_)
                D2 -= 0.5 * h * vn;
            Mat rD2 = mf_->evaluate("D2", D2);
            Vec base = y + h * phiF.col(0);
            if (non_autonomous_)
                base += h * h * phiv.col(0);
            Vec U3 = base + h * rD2.col(0);
            Vec D3 = f_->rhs(t + h, U3) - F - Jw(t, y, U3 - y);
            if (non_autonomous_)
                D3 -= h * vn;
            Mat rD3 = mf_->evaluate("D3", D3);
            out.y_new = base + h * (rD2.col(1) + rD2.col(2) + rD3.col(0) + rD3.col(1));
            Vec err = h * (rD2.col(2) + rD3.col(1));
            out.norm_err = norm_(err, y, out.y_new);
        }
        return out;
    }

    int order_ = 43;
    Mat J_;
    bool J_valid_ = false;
};

// ---------------------------------------------------------------------------
// expmssemi: exponential Adams multistep for semilinear problems

class ExpmssemiIntegrator final : public IntegratorBase {
public:
    IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                          const NormalizedOptions& opts, ErrorNorm norm) override {
        bind(f, mf, opts, std::move(norm));
        semilin_ = true;
        if (!f.has_lin_op())
            throw ValidationError("expmssemi: the problem has no linear part (LinOp)");
        k_ = int(opts.number("kStep"));
        if (k_ > kMaxGammaOrder)
            throw ValidationError("expmssemi: kStep exceeds the supported weight order");
        startup_steps_ = int(opts.number("StartupSteps"));
        multi_step_ = k_;
        zero_ = Vec::Zero(f.dim());
        mf.init(lin_op_access(f), opts);
        full_registered_ = false;
        if (k_ == 1) {
            mf.register_jobs(full_table());
            full_registered_ = true;
        } else {
            mf.register_jobs(startup_table());
        }

        IntegratorSetup s;
        s.order = k_;
        s.error_order = 0;
        s.multi_step = k_;
        s.semilin = true;
        return s;
    }

    StepResult step(double t, const Vec& y, double h, bool) override {
        try {
            return run_step(t, y, h);
        } catch (const StepReductionRequest& e) {
            reduction_unsupported(e);
        }
    }

private:
    JobTable startup_table() const {
        JobTable t;
        t.job_functions = {{1, 1.0}};
        t.jobs["F"] = Mat::Constant(1, 1, 1.0);
        return t;
    }

    JobTable full_table() const {
        JobTable t;
        for (int m = 1; m <= k_; ++m)
            t.job_functions.push_back({m, 1.0});
        Vec frow = Vec::Zero(k_);
        frow(0) = 1.0;
        t.jobs["F"] = frow.transpose();
        for (int j = 1; j < k_; ++j) {
            std::vector<double> c = gamma_phi_coefficients(j);
            Vec row = Vec::Zero(k_);
            for (size_t m = 0; m < c.size(); ++m)
                row(Eigen::Index(m)) = c[m]; // weights phi_{m+1}
            t.jobs["G" + std::to_string(j)] = row.transpose();
        }
        return t;
    }

    StepResult run_step(double t, const Vec& y, double h) {
        StepResult out;
        out.h_out = h;
        out.norm_err = 0.0;
        if (int(hist_.size()) < k_) {
            // startup: exponential Euler sub-steps across one h interval
            double hs = h / startup_steps_;
            mf_->init_step(0.0, zero_, hs);
            Vec u = y;
            double tau = t;
            for (int i = 0; i < startup_steps_; ++i) {
                Vec F = (i == 0) ? current_F(t, y) : f_->rhs(tau, u);
                u += hs * mf_->evaluate("F", F).col(0);
                tau += hs;
            }
            out.y_new = std::move(u);
            return out;
        }
        if (!full_registered_) {
            mf_->register_jobs(full_table());
            full_registered_ = true;
        }
        check_constant_h(h);
        mf_->init_step(0.0, zero_, h);
        Vec y_new = y + h * mf_->evaluate("F", current_F(t, y)).col(0);
        // backward differences of the nonlinearity over the history window
        std::vector<Vec> diff;
        diff.resize(size_t(k_));
        for (int m = 0; m < k_; ++m)
            diff[size_t(m)] = hist_[size_t(m)].G;
        for (int j = 1; j < k_; ++j) {
            for (int m = 0; m < k_ - j; ++m)
                diff[size_t(m)] -= diff[size_t(m) + 1];
            y_new += h * mf_->evaluate("G" + std::to_string(j), diff[0]).col(0);
        }
        out.y_new = std::move(y_new);
        return out;
    }

    void check_constant_h(double h) const {
        if (hist_.size() < 2)
            return;
        double h_prev = hist_[0].t - hist_[1].t;
        if (std::abs(h - h_prev) > 1e-9 * std::abs(h))
            throw ValidationError("expmssemi only supports constant step sizes");
    }

    int k_ = 2;
    int startup_steps_ = 10;
    bool full_registered_ = false;
    Vec zero_;
};

// ---------------------------------------------------------------------------
// expms: linearized exponential multistep

class ExpmsIntegrator final : public IntegratorBase {
public:
    IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                          const NormalizedOptions& opts, ErrorNorm norm) override {
        bind(f, mf, opts, std::move(norm));
        if (!f.has_jacobian())
            throw ValidationError("expms: the problem has no Jacobian");
        k_ = int(opts.number("kStep"));
        if (k_ + 1 > kMaxPhiIndex)
            throw ValidationError("expms: kStep exceeds the supported phi order");
        startup_steps_ = int(opts.number("StartupSteps"));
        multi_step_ = k_;
        mf.init(jacobian_access(f), opts);
        full_registered_ = false;
        if (k_ == 1) {
            mf.register_jobs(full_table());
            full_registered_ = true;
        } else {
            mf.register_jobs(startup_table());
        }

        IntegratorSetup s;
        s.order = k_ + 1;
        s.error_order = 0;
        s.multi_step = k_;
        return s;
    }

    StepResult step(double t, const Vec& y, double h, bool) override {
        try {
            return run_step(t, y, h);
        } catch (const StepReductionRequest& e) {
            reduction_unsupported(e);
        }
    }

private:
    JobTable startup_table() const {
        JobTable t;
        t.job_functions = {{1, 1.0}};
        t.jobs["F"] = Mat::Constant(1, 1, 1.0);
        if (non_autonomous_) {
            t.job_functions.push_back({2, 1.0});
            Mat f(1, 2);
            f << 1.0, 0.0;
            t.jobs["F"] = f;
            Mat v(1, 2);
            v << 0.0, 1.0;
            t.jobs["v"] = v;
        }
        return t;
    }

    // Weight rows for the remainder values R_m = F_m - F_n - J_n (u_m - u_n):
    // interpolate the remainder with a double zero at the step start and
    // values at the m previous points, then integrate against the kernel,
    // which turns monomial theta^p into p! phi_{p+1}(hJ).
    JobTable full_table() const {
        JobTable t;
        int width = std::max(k_ + 1, 2);
        for (int m = 1; m <= width; ++m)
            t.job_functions.push_back({m, 1.0});
        Vec frow = Vec::Zero(width);
        frow(0) = 1.0;
        t.jobs["F"] = frow.transpose();
        if (non_autonomous_) {
            Vec vrow = Vec::Zero(width);
            vrow(1) = 1.0;
            t.jobs["v"] = vrow.transpose();
        }
        for (int m = 1; m < k_; ++m) {
            // polynomial L_m(theta) = theta^2/m^2 * prod_{l != m} (theta+l)/(l-m)
            std::vector<double> poly = {0.0, 0.0, 1.0 / double(m * m)};
            for (int l = 1; l < k_; ++l) {
                if (l == m)
                    continue;
                std::vector<double> next(poly.size() + 1, 0.0);
                double denom = double(l - m);
                for (size_t p = 0; p < poly.size(); ++p) {
                    next[p] += poly[p] * double(l) / denom;
                    next[p + 1] += poly[p] / denom;
                }
                poly = std::move(next);
            }
            Vec row = Vec::Zero(width);
            double pfact = 1.0;
            for (size_t p = 0; p < poly.size(); ++p) {
                if (p > 0)
                    pfact *= double(p);
                row(Eigen::Index(p)) = pfact * poly[p]; // weights phi_{p+1}
            }
            t.jobs["R" + std::to_string(m)] = row.transpose();
        }
        return t;
    }

    Vec Jw(double t, const Vec& y, const Vec& w) {
        if (f_->has_jacobian_matrix()) {
            if (!J_valid_) {
                J_ = f_->jacobian(t, y);
                J_valid_ = true;
            }
            return J_ * w;
        }
        return f_->jacobian_v(t, y, w);
    }

    StepResult run_step(double t, const Vec& y, double h) {
        StepResult out;
        out.h_out = h;
        out.norm_err = 0.0;
        if (int(hist_.size()) < k_) {
            // startup: exponential Rosenbrock-Euler sub-steps
            double hs = h / startup_steps_;
            Vec u = y;
            double tau = t;
            for (int i = 0; i < startup_steps_; ++i) {
                mf_->init_step(tau, u, hs);
                Vec F = (i == 0) ? current_F(t, y) : f_->rhs(tau, u);
                Vec unew = u + hs * mf_->evaluate("F", F).col(0);
                if (non_autonomous_)
                    unew += hs * hs * mf_->evaluate("v", f_->df_dt(tau, u)).col(0);
                u = std::move(unew);
                tau += hs;
            }
            out.y_new = std::move(u);
            return out;
        }
        if (!full_registered_) {
            mf_->register_jobs(full_table());
            full_registered_ = true;
        }
        check_constant_h(h);
        J_valid_ = false;
        mf_->init_step(t, y, h);
        const Vec& F = current_F(t, y);
        Vec y_new = y + h * mf_->evaluate("F", F).col(0);
        Vec vn;
        if (non_autonomous_) {
            vn = f_->df_dt(t, y);
            y_new += h * h * mf_->evaluate("v", vn).col(0);
        }
        for (int m = 1; m < k_; ++m) {
            const Hist& old = hist_[size_t(m)];
            Vec R = old.F - F - Jw(t, y, old.y - y);
            if (non_autonomous_)
                R -= (old.t - t) * vn;
            y_new += h * mf_->evaluate("R" + std::to_string(m), R).col(0);
        }
        out.y_new = std::move(y_new);
        return out;
    }

    void check_constant_h(double h) const {
        if (hist_.size() < 2)
            return;
        double h_prev = hist_[0].t - hist_[1].t;
        if (std::abs(h - h_prev) > 1e-9 * std::abs(h))
            throw ValidationError("expms only supports constant step sizes");
    }

    int k_ = 2;
    int startup_steps_ = 10;
    bool full_registered_ = false;
    Mat J_;
    bool J_valid_ = false;
};

// ---------------------------------------------------------------------------
// exp4: adaptive linearized method built from phi_1 products at h/3 steps

class Exp4Integrator final : public IntegratorBase {
public:
    IntegratorSetup setup(OdeFunctions& f, MatrixFunctionEvaluator& mf,
                          const NormalizedOptions& opts, ErrorNorm norm) override {
        bind(f, mf, opts, std::move(norm));
        if (!f.has_jacobian())
            throw ValidationError("exp4: the problem has no Jacobian");
        mf.init(jacobian_access(f), opts);
        JobTable t;
        t.job_functions = {{1, 1.0}, {2, 1.0}};
        Mat p1(1, 2), p2(1, 2);
        p1 << 1.0, 0.0;
        p2 << 0.0, 1.0;
        t.jobs["phi1"] = p1;
        if (non_autonomous_)
            t.jobs["phi2"] = p2;
        mf.register_jobs(t);
        dense_on_ = opts.flag("DOGenerator") || opts.handle("DOGenerator") != nullptr;

        IntegratorSetup s;
        s.order = 4;
        s.error_order = 3;
        s.multi_step = 1;
        s.provides_dense = dense_on_;
        return s;
    }

    StepResult step(double t, const Vec& y, double h, bool reuse) override {
        return with_reduction(h, [&](double hc, bool retried) {
            return attempt(t, y, hc, reuse || retried);
        });
    }

    DenseGenerator dense_generator() const override {
        return [](const DenseSegment& seg, double theta) {
            const Vec& k1 = seg.data[1];
            const Vec& k2 = seg.data[2];
            const Vec& k3 = seg.data[3];
            const Vec& k4 = seg.data[4];
            const Vec& k5 = seg.data[5];
            const Vec& k6 = seg.data[6];
            const Vec& k7 = seg.data[7];
            // quadratic through the phi_1 stages at nodes 1/3, 2/3, 1
            double l1 = 4.5 * (theta - 2.0 / 3.0) * (theta - 1.0);
            double l2 = -9.0 * (theta - 1.0 / 3.0) * (theta - 1.0);
            double l3 = 4.5 * (theta - 1.0 / 3.0) * (theta - 2.0 / 3.0);
            Vec lc = l1 * k1 + l2 * k2 + l3 * k3;
            Vec tail = k4 - (4.0 / 3.0) * k5 + k6 + (1.0 / 6.0) * k7;
            return Vec(seg.y_left + theta * seg.h * lc + theta * theta * seg.h * tail);
        };
    }

private:
    Vec Jw(double t, const Vec& y, const Vec& w) {
        if (f_->has_jacobian_matrix()) {
            if (!J_valid_) {
                J_ = f_->jacobian(t, y);
                J_valid_ = true;
            }
            return J_ * w;
        }
        return f_->jacobian_v(t, y, w);
    }

    StepResult attempt(double t, const Vec& y, double h, bool reuse) {
        J_valid_ = false;
        double h3 = h / 3.0;
        mf_->init_step(t, y, h3);
        const Vec& fn = current_F(t, y);
        Mat K = mf_->evaluate("phi1", fn, true, reuse, 3);
        Vec vn;
        Mat P2;
        if (non_autonomous_) {
            vn = f_->df_dt(t, y);
            P2 = mf_->evaluate("phi2", vn, true, reuse, 3);
        }
        auto stage = [&](int i) { // k_i = phi_1(c_i h J) f_n (+ c_i h phi_2 v_n)
            Vec k = K.col(i - 1);
            if (non_autonomous_)
                k += (i * h / 3.0) * P2.col(i - 1);
            return k;
        };
        Vec k1 = stage(1), k2 = stage(2), k3 = stage(3);

        Vec w4 = (-7.0 / 300.0) * k1 + (97.0 / 150.0) * k2 - (37.0 / 300.0) * k3;
        Vec u4 = y + h * w4;
        Vec d4 = f_->rhs(t + 0.5 * h, u4) - fn - h * Jw(t, y, w4);
        if (non_autonomous_)
            d4 -= 0.5 * h * vn;
        Mat K2 = mf_->evaluate("phi1", d4, false, false, 3);
        Vec k4 = K2.col(0), k5 = K2.col(1), k6 = K2.col(2);

        Vec w7 = (59.0 / 300.0) * k1 - (7.0 / 75.0) * k2 + (269.0 / 300.0) * k3 +
                 (2.0 / 3.0) * (k4 + k5 + k6);
        Vec u7 = y + h * w7;
        Vec d7 = f_->rhs(t + h, u7) - fn - h * Jw(t, y, w7);
        if (non_autonomous_)
            d7 -= h * vn;
        Vec k7 = mf_->evaluate("phi1", d7).col(0);

        StepResult out;
        out.h_out = h;
        out.y_new = y + h * (k3 + k4 - (4.0 / 3.0) * k5 + k6 + (1.0 / 6.0) * k7);
        Vec err = (h / 6.0) * k7;
        out.norm_err = norm_(err, y, out.y_new);
        if (dense_on_) {
            DenseSegment seg;
            seg.t0 = t;
            seg.h = h;
            seg.y_left = y;
            seg.y_right = out.y_new;
            seg.data = {fn, k1, k2, k3, k4, k5, k6, k7};
            out.dense = std::move(seg);
        }
        return out;
    }

    bool dense_on_ = true;
    Mat J_;
    bool J_valid_ = false;
};

} // namespace

std::unique_ptr<Integrator> make_integrator(const std::string& name) {
    if (name == "exprk")
        return std::make_unique<ExprkIntegrator>();
    if (name == "exprb")
        return std::make_unique<ExprbIntegrator>();
    if (name == "expmssemi")
        return std::make_unique<ExpmssemiIntegrator>();
    if (name == "expms")
        return std::make_unique<ExpmsIntegrator>();
    if (name == "exp4")
        return std::make_unique<Exp4Integrator>();
    throw ValidationError("unknown integrator: " + name);
}

} // namespace expode
