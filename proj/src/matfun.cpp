#include "expode/matfun.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <sstream>

namespace expode {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

void JobTable::check() const {
    if (job_functions.empty())
        throw ValidationError("job table: empty jobFunctions list");
    for (const auto& f : job_functions) {
        if (f.index < 0 || f.index > kMaxPhiIndex)
            throw ValidationError("job table: phi index out of range");
        if (!(f.scale > 0.0))
            throw ValidationError("job table: non-positive h-scale");
    }
    if (jobs.empty())
        throw ValidationError("job table: no flags registered");
    for (const auto& [flag, m] : jobs) {
        if (m.rows() < 1)
            throw ValidationError("job table: flag " + flag + " has no rows");
        if (m.cols() != Eigen::Index(job_functions.size()))
            throw ValidationError("job table: flag " + flag + " has " +
                                  std::to_string(m.cols()) + " columns, expected " +
                                  std::to_string(job_functions.size()));
    }
}

namespace {

double min_abstol(const NormalizedOptions& opts) {
    Vec at = opts.numbers("AbsTol");
    return at.minCoeff();
}

// combo of the registered phi functions at z, row r of the flag's table
std::complex<double> row_combo(const Mat& job, Eigen::Index r,
                               const std::vector<PhiDescriptor>& funs,
                               std::complex<double> z) {
    std::vector<double> coeffs(size_t(job.cols()));
    for (Eigen::Index m = 0; m < job.cols(); ++m)
        coeffs[size_t(m)] = job(r, m);
    return phi_combo(coeffs, funs, z);
}

// ---------------------------------------------------------------------------
// direct backend: dense eigendecomposition, phi applied on eigenvalues

class DirectEvaluator final : public MatrixFunctionEvaluator {
public:
    EvaluatorCaps init(const OperatorAccess& op, const NormalizedOptions& opts) override {
        if (!op.matrix)
            throw ValidationError(
                "matrix functions 'direct': the operator is only available as a "
                "product; use MatrixFunctions 'arnoldi'");
        op_ = op;
        (void)opts;
        n_diag_ = 0;
        n_eval_ = 0;
        have_factors_ = false;
        saves_.clear();
        table_ = JobTable{};
        EvaluatorCaps caps;
        caps.need_jac_explicit = true;
        caps.need_gjac_explicit = true;
        caps.description = description();
        return caps;
    }

    void register_jobs(JobTable jobs) override {
        jobs.check();
        table_ = std::move(jobs);
        saves_.clear();
    }

    void init_step(double t, const Vec& y, double h) override {
        if (table_.jobs.empty())
            throw ValidationError("matrix functions: init_step before register_jobs");
        h_ = h;
        if (have_factors_ && t == t_ && y.size() == y_.size() && y == y_)
            return; // same linearization point: keep the factors (rejected-step retry)
        t_ = t;
        y_ = y;
        Mat M = op_.matrix(t, y);
        Eigen::EigenSolver<Mat> eig(M);
        if (eig.info() != Eigen::Success)
            throw IntegrationError("matrix functions 'direct': eigendecomposition failed");
        lambda_ = eig.eigenvalues();
        S_ = eig.eigenvectors();
        Eigen::JacobiSVD<CMat> svd(S_);
        double smin = svd.singularValues().minCoeff();
        double smax = svd.singularValues().maxCoeff();
        if (smin <= 0.0 ||
            smax / smin > 1.0 / (100.0 * std::numeric_limits<double>::epsilon()))
            throw IntegrationError(
                "matrix functions 'direct': eigenvector basis too ill-conditioned; "
                "use MatrixFunctions 'arnoldi'");
        lu_.compute(S_);
        have_factors_ = true;
        saves_.clear();
        ++n_diag_;
    }

    Mat evaluate(const std::string& flag, const Vec& v, bool reusable, bool reuse,
                 int facs) override {
        auto it = table_.jobs.find(flag);
        if (it == table_.jobs.end())
            throw ValidationError("matrix functions: unknown job flag " + flag);
        const Mat& job = it->second;
        if (facs < 1 || (facs > 1 && job.rows() != 1))
            throw ValidationError("matrix functions: facs > 1 needs a single-row job");
        if (v.size() != op_.n)
            throw ValidationError("matrix functions: vector has wrong length");
        if (!have_factors_)
            throw ValidationError("matrix functions: evaluate before init_step");
        ++n_eval_;

        CVec c;
        if (reuse && saves_.count(flag)) {
            c = saves_.at(flag);
        } else {
            c = lu_.solve(v.cast<std::complex<double>>());
        }
        if (reusable)
            saves_[flag] = c;

        Eigen::Index cols = facs > 1 ? facs : job.rows();
        Mat out(op_.n, cols);
        CVec scaled(op_.n);
        for (Eigen::Index col = 0; col < cols; ++col) {
            Eigen::Index r = facs > 1 ? 0 : col;
            double fac = facs > 1 ? double(col + 1) : 1.0;
            for (Eigen::Index i = 0; i < op_.n; ++i)
                scaled(i) = row_combo(job, r, table_.job_functions, fac * h_ * lambda_(i)) *
                            c(i);
            out.col(col) = (S_ * scaled).real();
        }
        return out;
    }

    void cleanup() override {
        have_factors_ = false;
        saves_.clear();
    }

    std::string description() const override { return "directly by diagonalisation"; }

    std::string statistics() const override {
        std::ostringstream out;
        out << "NofDiag = " << n_diag_ << "\n";
        out << "NofMFEv = " << n_eval_ << "\n";
        return out.str();
    }

    void collect_stats(StatsCounters& stats) const override {
        stats.matfun["NofDiag"] = n_diag_;
        stats.matfun["NofMFEv"] = n_eval_;
    }

private:
    OperatorAccess op_;
    JobTable table_;
    double t_ = 0.0, h_ = 0.0;
    Vec y_;
    bool have_factors_ = false;
    CVec lambda_;
    CMat S_;
    Eigen::PartialPivLU<CMat> lu_;
    std::map<std::string, CVec> saves_; // eD.matFun.save.(flag) analog
    long n_diag_ = 0;
    long n_eval_ = 0;
};

// ---------------------------------------------------------------------------
// arnoldi backend: Krylov subspace approximation, product access only

constexpr int kMaxKrylovDim = 36;

struct KrylovState {
    Mat V;      // n x (m+1) orthonormal basis
    Mat H;      // (m+1) x m Hessenberg
    int m = 0;
    double beta = 0.0;
    bool exact = false; // happy breakdown hit
};

class ArnoldiEvaluator final : public MatrixFunctionEvaluator {
public:
    EvaluatorCaps init(const OperatorAccess& op, const NormalizedOptions& opts) override {
        if (!op.apply && !op.matrix)
            throw ValidationError("matrix functions 'arnoldi': no operator access");
        op_ = op;
        test_index_ = Eigen::Index(opts.number("KrylovTestIndex")) - 1;
        if (test_index_ < 0 || test_index_ >= op.n)
            throw ValidationError("KrylovTestIndex out of range for this problem");
        tol_ = min_abstol(opts);
        saves_.clear();
        stats_.clear();
        table_ = JobTable{};
        EvaluatorCaps caps;
        caps.need_jac_explicit = false;
        caps.need_gjac_explicit = false;
        caps.description = description();
        return caps;
    }

    void register_jobs(JobTable jobs) override {
        jobs.check();
        table_ = std::move(jobs);
        saves_.clear();
    }

    void init_step(double t, const Vec& y, double h) override {
        if (table_.jobs.empty())
            throw ValidationError("matrix functions: init_step before register_jobs");
        if (!(have_point_ && t == t_ && y.size() == y_.size() && y == y_))
            saves_.clear(); // new linearization point invalidates saved subspaces
        t_ = t;
        y_ = y;
        h_ = h;
        have_point_ = true;
    }

    Mat evaluate(const std::string& flag, const Vec& v, bool reusable, bool reuse,
                 int facs) override {
        auto it = table_.jobs.find(flag);
        if (it == table_.jobs.end())
            throw ValidationError("matrix functions: unknown job flag " + flag);
        const Mat& job = it->second;
        if (facs < 1 || (facs > 1 && job.rows() != 1))
            throw ValidationError("matrix functions: facs > 1 needs a single-row job");
        if (v.size() != op_.n)
            throw ValidationError("matrix functions: vector has wrong length");
        if (!have_point_)
            throw ValidationError("matrix functions: evaluate before init_step");

        FlagStats& fs = stats_[flag];
        ++fs.evals;

        KrylovState st;
        bool built = false;
        if (reuse && saves_.count(flag)) {
            // a subspace built for the same (t, y, v) serves any h
            st = saves_.at(flag);
            built = converged_result(st, job).second;
        }
        if (!built) {
            st = build_subspace(v, job);
            built = true;
        }
        if (reusable)
            saves_[flag] = st;
        fs.dims += st.m;
        fs.max_dim = std::max(fs.max_dim, long(st.m));

        Eigen::Index cols = facs > 1 ? facs : job.rows();
        Mat out(op_.n, cols);
        for (Eigen::Index col = 0; col < cols; ++col) {
            Eigen::Index r = facs > 1 ? 0 : col;
            double fac = facs > 1 ? double(col + 1) : 1.0;
            out.col(col) = assemble(st, job, r, fac * h_, st.m);
        }
        return out;
    }

    void cleanup() override {
        saves_.clear();
        have_point_ = false;
    }

    std::string description() const override { return "using a Krylov subspace method"; }

    std::string statistics() const override {
        std::ostringstream out;
        if (stats_.empty())
            out << "no matrix function evaluations\n";
        for (const auto& [flag, fs] : stats_) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "flag %s: %ld evaluations, avg Krylov dimension %.1f, max %ld\n",
                          flag.c_str(), fs.evals,
                          fs.evals ? double(fs.dims) / double(fs.evals) : 0.0, fs.max_dim);
            out << buf;
        }
        return out.str();
    }

    void collect_stats(StatsCounters& stats) const override {
        long evals = 0, dims = 0, maxd = 0;
        for (const auto& [flag, fs] : stats_) {
            (void)flag;
            evals += fs.evals;
            dims += fs.dims;
            maxd = std::max(maxd, fs.max_dim);
        }
        stats.matfun["NofMFEv"] = evals;
        stats.matfun["KrylovDims"] = dims;
        stats.matfun["KrylovMaxDim"] = maxd;
    }

private:
    struct FlagStats {
        long evals = 0;
        long dims = 0;
        long max_dim = 0;
    };

    Vec apply_op(const Vec& w) const {
        if (op_.apply)
            return op_.apply(t_, y_, w);
        if (!op_matrix_valid_ || t_ != mt_ || y_ != my_) {
            op_matrix_cache_ = op_.matrix(t_, y_);
            mt_ = t_;
            my_ = y_;
            op_matrix_valid_ = true;
        }
        return op_matrix_cache_ * w;
    }

    // phi-combo of the m x m Hessenberg block times beta*e1, lifted back.
    Vec assemble(const KrylovState& st, const Mat& job, Eigen::Index row, double h,
                 int m) const {
        Mat Hm = st.H.topLeftCorner(m, m);
        Eigen::EigenSolver<Mat> eig(Hm);
        CVec lam = eig.eigenvalues();
        CMat S = eig.eigenvectors();
        CVec e1 = CVec::Zero(m);
        e1(0) = st.beta;
        CVec c = S.partialPivLu().solve(e1);
        for (int i = 0; i < m; ++i)
            c(i) *= row_combo(job, row, table_.job_functions, h * lam(i));
        return (st.V.leftCols(m) * (S * c).real()).eval();
    }

    // Convergence test on the first job row at the current h: compares the
    // m and m-1 dimensional results at the watched component and adds a
    // residual-style term from the next subdiagonal entry.
    std::pair<Vec, bool> converged_result(const KrylovState& st, const Mat& job) const {
        Vec um = assemble(st, job, 0, h_, st.m);
        if (st.exact)
            return {um, true};
        if (st.m < 2)
            return {um, false};
        Vec um1 = assemble(st, job, 0, h_, st.m - 1);
        double diff = std::abs(um(test_index_) - um1(test_index_));
        double resid =
            st.beta * std::abs(h_) * st.H(st.m, st.m - 1) * krylov_corner(st, job, st.m);
        return {um, diff <= tol_ && resid <= tol_};
    }

    KrylovState build_subspace(const Vec& v, const Mat& job) {
        KrylovState st;
        st.beta = v.norm();
        int mmax = int(std::min<Eigen::Index>(op_.n, kMaxKrylovDim));
        st.V = Mat::Zero(op_.n, mmax + 1);
        st.H = Mat::Zero(mmax + 1, mmax);
        if (st.beta == 0.0) {
            st.m = 1;
            st.exact = true;
            st.V.col(0).setZero();
            return st;
        }
        st.V.col(0) = v / st.beta;
        double last_test = std::numeric_limits<double>::infinity();
        for (int m = 1; m <= mmax; ++m) {
            Vec w = apply_op(st.V.col(m - 1));
            // modified Gram-Schmidt with one reorthogonalization pass
            for (int pass = 0; pass < 2; ++pass)
                for (int j = 0; j < m; ++j) {
                    double hij = st.V.col(j).dot(w);
                    if (pass == 0)
                        st.H(j, m - 1) = hij;
                    else
                        st.H(j, m - 1) += hij;
                    w -= hij * st.V.col(j);
                }
            double hnext = w.norm();
            st.H(m, m - 1) = hnext;
            st.m = m;
            double hscale = st.H.topLeftCorner(m, m).lpNorm<Eigen::Infinity>();
            if (hnext <= 1e-14 * std::max(1.0, hscale)) {
                st.exact = true; // happy breakdown: result exact in this subspace
                return st;
            }
            Vec um = assemble(st, job, 0, h_, m);
            double test = um(test_index_);
            if (m >= 2) {
                double diff = std::abs(test - last_test);
                double resid =
                    st.beta * std::abs(h_) * hnext * krylov_corner(st, job, m);
                if (diff <= tol_ && resid <= tol_)
                    return st;
            }
            last_test = test;
            st.V.col(m) = w / hnext;
        }
        throw StepReductionRequest(
            "Krylov iteration did not converge at the maximal subspace dimension");
    }

    // |e_m^T phi-combo(hH_m) e_1|: the classical generalized-residual factor.
    double krylov_corner(const KrylovState& st, const Mat& job, int m) const {
        Mat Hm = st.H.topLeftCorner(m, m);
        Eigen::EigenSolver<Mat> eig(Hm);
        CVec lam = eig.eigenvalues();
        CMat S = eig.eigenvectors();
        CVec e1 = CVec::Zero(m);
        e1(0) = 1.0;
        CVec c = S.partialPivLu().solve(e1);
        for (int i = 0; i < m; ++i)
            c(i) *= row_combo(job, 0, table_.job_functions, h_ * lam(i));
        return std::abs((S.row(m - 1) * c).value().real());
    }

    OperatorAccess op_;
    JobTable table_;
    Eigen::Index test_index_ = 0;
    double tol_ = 1e-6;
    double t_ = 0.0, h_ = 0.0;
    Vec y_;
    bool have_point_ = false;
    mutable Mat op_matrix_cache_;
    mutable double mt_ = 0.0;
    mutable Vec my_;
    mutable bool op_matrix_valid_ = false;
    std::map<std::string, KrylovState> saves_;
    std::map<std::string, FlagStats> stats_;
};

} // namespace

std::unique_ptr<MatrixFunctionEvaluator> make_direct_evaluator() {
    return std::make_unique<DirectEvaluator>();
}

std::unique_ptr<MatrixFunctionEvaluator> make_arnoldi_evaluator() {
    return std::make_unique<ArnoldiEvaluator>();
}

std::shared_ptr<MatrixFunctionEvaluator> make_evaluator(const NormalizedOptions& opts) {
    if (const Handle* h = opts.handle("MatrixFunctions")) {
        auto user = std::any_cast<std::shared_ptr<MatrixFunctionEvaluator>>(h->value);
        if (!user)
            throw ValidationError("MatrixFunctions: null custom evaluator");
        return user;
    }
    switch (opts.list_index("MatrixFunctions")) {
    case 0: return make_direct_evaluator();
    case 1: return make_arnoldi_evaluator();
    default: throw ValidationError("MatrixFunctions: unknown method");
    }
}

} // namespace expode
