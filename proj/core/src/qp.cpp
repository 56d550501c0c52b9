#include "ddpc/qp.hpp"

#include "ddpc/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace ddpc {

namespace {

double inf_norm(const Vector& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

Matrix select_rows(const Matrix& A, const std::vector<Index>& rows)
{
    Matrix out(static_cast<Index>(rows.size()), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Index>(i)) = A.row(rows[i]);
    }
    return out;
}

Matrix select_rows(const Matrix& A, const std::vector<Index>& rows, Index cols)
{
    Matrix out(static_cast<Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Index>(i)) = A.row(rows[i]);
    }
    return out;
}

}  // namespace

void QuadProgram::normalize()
{
    const Index d = P.rows();
    require(P.cols() == d, "QuadProgram: P must be square");
    require(f.size() == d, "QuadProgram: f has wrong length");
    if (A_eq.size() == 0 && A_eq.cols() != d) {
        A_eq.resize(0, d);
    }
    if (A_in.size() == 0 && A_in.cols() != d) {
        A_in.resize(0, d);
    }
    require(A_eq.cols() == d && A_eq.rows() == b_eq.size(), "QuadProgram: equality block shape mismatch");
    require(A_in.cols() == d && A_in.rows() == b_in.size(), "QuadProgram: inequality block shape mismatch");
    const double scale = 1.0 + (d > 0 ? P.cwiseAbs().maxCoeff() : 0.0);
    require(d == 0 || (P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, "QuadProgram: P is not symmetric");
}

std::string to_string(QpStatus status)
{
    switch (status) {
    case QpStatus::optimal:
        return "optimal";
    case QpStatus::infeasible:
        return "infeasible";
    case QpStatus::max_iter:
        return "max_iter";
    case QpStatus::nonconvex:
        return "nonconvex";
    }
    return "unknown";
}

bool KktReport::holds(double tol) const
{
    return stationarity <= tol && eq_residual <= tol && in_violation <= tol && min_multiplier >= -tol &&
           complementarity <= tol;
}

KktReport kkt_residuals(const QuadProgram& program, const QpSolution& s)
{
    KktReport rep;
    Vector grad = program.P * s.x + program.f;
    if (program.A_eq.rows() > 0) {
        grad += program.A_eq.transpose() * s.lambda_eq;
        rep.eq_residual = inf_norm(program.A_eq * s.x - program.b_eq) / (1.0 + inf_norm(program.b_eq));
    }
    if (program.A_in.rows() > 0) {
        grad += program.A_in.transpose() * s.mu_in;
        const Vector slack = program.b_in - program.A_in * s.x;
        rep.in_violation = std::max(0.0, -slack.minCoeff()) / (1.0 + inf_norm(program.b_in));
        rep.min_multiplier = s.mu_in.minCoeff();
        rep.complementarity = s.mu_in.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    rep.stationarity = inf_norm(grad) / (1.0 + inf_norm(program.f));
    return rep;
}

std::vector<Index> independent_rows(const Matrix& A, double tol, double reference)
{
    std::vector<Index> rows;
    if (A.rows() == 0 || A.cols() == 0 || A.cwiseAbs().maxCoeff() == 0.0) {
        return rows;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(A.transpose());
    const Vector pivots = qr.matrixQR().diagonal().cwiseAbs();
    const double cut = tol * std::max(reference, pivots(0));
    const auto& perm = qr.colsPermutation().indices();
    for (Index i = 0; i < pivots.size() && pivots(i) > cut; ++i) {
        rows.push_back(perm(i));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

EqualityQpFactor::EqualityQpFactor(const Matrix& P, const Matrix& A, bool allow_semidefinite)
    : d_(P.rows()), rows_(A.rows()), P_(P), semidefinite_(allow_semidefinite)
{
    require(P.cols() == d_, "EqualityQpFactor: P must be square");
    require(A.rows() == 0 || A.cols() == d_, "EqualityQpFactor: constraint width mismatch");
    kept_ = independent_rows(A);
    const Index e = static_cast<Index>(kept_.size());
    Matrix reduced;
    if (e == 0) {
        Q1_.resize(d_, 0);
        R_.resize(0, 0);
        reduced = P_;
    } else {
        const Matrix At = select_rows(A, kept_).transpose();
        Eigen::HouseholderQR<Matrix> qr(At);
        const Matrix Q = qr.householderQ();
        Q1_ = Q.leftCols(e);
        Q2_ = Q.rightCols(d_ - e);
        R_ = qr.matrixQR().topRows(e).triangularView<Eigen::Upper>();
        reduced = Q2_.transpose() * P_ * Q2_;
    }
    if (reduced.rows() == 0) {
        return;
    }
    reduced = 0.5 * (reduced + reduced.transpose());
    reduced_llt_.compute(reduced);
    bool definite = reduced_llt_.info() == Eigen::Success;
    if (definite) {
        const Vector diag = Matrix(reduced_llt_.matrixL()).diagonal();
        definite = diag.minCoeff() > 1e-7 * diag.maxCoeff();
    }
    if (!definite) {
        if (!allow_semidefinite) {
            ok_ = false;
            return;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(reduced);
        const Vector& ev = es.eigenvalues();
        // scale by P too: a reduced Hessian made only of rounding noise is treated as zero
        const double cut = 1e-10 * std::max({ev.cwiseAbs().maxCoeff(), P_.cwiseAbs().maxCoeff(), 1e-300});
        Vector inv = Vector::Zero(ev.size());
        for (Index i = 0; i < ev.size(); ++i) {
            if (ev(i) > cut) {
                inv(i) = 1.0 / ev(i);
            } else if (ev(i) < -cut) {
                ok_ = false;
                return;
            }
        }
        reduced_pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
        reduced_llt_ = Eigen::LLT<Matrix>();
    } else {
        semidefinite_ = false;
    }
}

Matrix EqualityQpFactor::solve_x(const Matrix& f, const Matrix& b) const
{
    if (!ok_) {
        throw NumericalError("EqualityQpFactor: reduced Hessian is not positive definite");
    }
    require(f.rows() == d_, "EqualityQpFactor: f has wrong row count");
    require(b.rows() == rows_ && (rows_ == 0 || b.cols() == f.cols()), "EqualityQpFactor: b has wrong shape");
    const Index k = f.cols();
    const Index e = static_cast<Index>(kept_.size());
    Matrix x = Matrix::Zero(d_, k);
    if (e > 0) {
        const Matrix bk = select_rows(b, kept_, k);
        const Matrix y1 = R_.transpose().triangularView<Eigen::Lower>().solve(bk);
        x = Q1_ * y1;
    }
    if (e == d_) {
        return x;
    }
    const Matrix grad = f + P_ * x;
    auto apply_inverse = [&](const Matrix& rhs) -> Matrix {
        if (semidefinite_) {
            return reduced_pinv_ * rhs;
        }
        return reduced_llt_.solve(rhs);
    };
    if (e == 0) {
        return x - apply_inverse(grad);
    }
    return x - Q2_ * apply_inverse(Q2_.transpose() * grad);
}

Matrix EqualityQpFactor::multipliers(const Matrix& x, const Matrix& f) const
{
    Matrix lambda = Matrix::Zero(rows_, x.cols());
    if (kept_.empty()) {
        return lambda;
    }
    const Matrix grad = P_ * x + f;
    const Matrix lk = -R_.triangularView<Eigen::Upper>().solve(Q1_.transpose() * grad);
    for (std::size_t i = 0; i < kept_.size(); ++i) {
        lambda.row(kept_[i]) = lk.row(static_cast<Index>(i));
    }
    return lambda;
}

std::size_t EqualityQpFactor::stored_entries() const
{
    return entries(P_) + entries(Q1_) + entries(Q2_) + entries(R_) + entries(reduced_pinv_) +
           static_cast<std::size_t>(reduced_llt_.matrixLLT().size());
}

QpSolution solve_eq_qp(const Matrix& P, const Vector& f, const Matrix& A_eq, const Vector& b_eq)
{
    QuadProgram prog{P, f, A_eq, b_eq, Matrix(), Vector()};
    prog.normalize();
    QpSolution sol;
    sol.mu_in.resize(0);
    EqualityQpFactor factor(prog.P, prog.A_eq);
    if (!factor.ok()) {
        sol.status = QpStatus::nonconvex;
        sol.x = Vector::Zero(prog.dim());
        sol.lambda_eq = Vector::Zero(prog.A_eq.rows());
        return sol;
    }
    sol.x = factor.solve_x(prog.f, prog.b_eq);
    sol.lambda_eq = factor.multipliers(sol.x, prog.f);
    if (prog.A_eq.rows() > 0 &&
        inf_norm(prog.A_eq * sol.x - prog.b_eq) > 1e-8 * (1.0 + inf_norm(prog.b_eq)) * (1.0 + inf_norm(sol.x))) {
        sol.status = QpStatus::infeasible;
    }
    sol.objective = 0.5 * sol.x.dot(prog.P * sol.x) + prog.f.dot(sol.x);
    return sol;
}

DenseQpSolver::DenseQpSolver(const Matrix& P, const Matrix& A_eq, const Matrix& A_in)
    : d_(P.rows()), P_(P), A_eq_(A_eq), A_in_(A_in)
{
    require(P.cols() == d_, "DenseQpSolver: P must be square");
    if (A_eq_.size() == 0) {
        A_eq_.resize(A_eq.rows(), d_);
    }
    if (A_in_.size() == 0) {
        A_in_.resize(A_in.rows(), d_);
    }
    require(A_eq_.cols() == d_ && A_in_.cols() == d_, "DenseQpSolver: constraint width mismatch");
    if (d_ == 0) {
        return;
    }
    llt_.compute(P_);
    if (llt_.info() != Eigen::Success) {
        convex_ = false;
        return;
    }
    const Vector diag = llt_.matrixLLT().diagonal();
    if (diag.minCoeff() <= 1e-10 * diag.maxCoeff()) {
        convex_ = false;
        return;
    }
    eq_kept_ = independent_rows(A_eq_);
    const Matrix Aeq_kept = select_rows(A_eq_, eq_kept_, d_);
    Y_eq_ = llt_.matrixL().solve(Aeq_kept.transpose());
    Y_in_ = llt_.matrixL().solve(A_in_.transpose());
}

std::size_t DenseQpSolver::stored_entries() const
{
    return entries(P_) + entries(A_eq_) + entries(A_in_) + entries(Y_eq_) + entries(Y_in_) +
           static_cast<std::size_t>(llt_.matrixLLT().size());
}

QpSolution DenseQpSolver::polish(const Vector& f, const Vector& b_eq, const Vector& b_in,
                                 const std::vector<Index>& active) const
{
    // Range-space solve of the equality QP on the working set with the cached factor.
    const Index e = static_cast<Index>(eq_kept_.size());
    const Index a = static_cast<Index>(active.size());
    Matrix Y(d_, e + a);
    Vector b(e + a);
    for (Index i = 0; i < e; ++i) {
        Y.col(i) = Y_eq_.col(i);
        b(i) = b_eq(eq_kept_[static_cast<std::size_t>(i)]);
    }
    for (Index i = 0; i < a; ++i) {
        Y.col(e + i) = Y_in_.col(active[static_cast<std::size_t>(i)]);
        b(e + i) = b_in(active[static_cast<std::size_t>(i)]);
    }
    const Vector ft = llt_.matrixL().solve(f);
    Vector nu = Vector::Zero(e + a);
    if (e + a > 0) {
        // Y'Y nu = -b - Y' ft with Y = Q R
        Eigen::HouseholderQR<Matrix> qr(Y);
        const Index k = e + a;
        const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        const Vector qf = (qr.householderQ().transpose() * ft).head(k);
        const Vector w = R.transpose().triangularView<Eigen::Lower>().solve(b);
        nu = -R.triangularView<Eigen::Upper>().solve(w + qf);
    }
    QpSolution sol;
    sol.x = -llt_.matrixU().solve(ft + Y * nu);
    sol.lambda_eq = Vector::Zero(A_eq_.rows());
    for (Index i = 0; i < e; ++i) {
        sol.lambda_eq(eq_kept_[static_cast<std::size_t>(i)]) = nu(i);
    }
    sol.mu_in = Vector::Zero(A_in_.rows());
    for (Index i = 0; i < a; ++i) {
        sol.mu_in(active[static_cast<std::size_t>(i)]) = nu(e + i);
    }
    sol.active_set = active;
    return sol;
}

Matrix DenseQpSolver::solve_equality(const Matrix& F, const Matrix& B_eq) const
{
    if (!convex_) {
        throw NumericalError("DenseQpSolver: Hessian is not positive definite");
    }
    require(F.rows() == d_ && B_eq.rows() == A_eq_.rows(), "DenseQpSolver::solve_equality: shape mismatch");
    const Index k = F.cols();
    const Matrix Ft = llt_.matrixL().solve(F);
    const Index e = static_cast<Index>(eq_kept_.size());
    if (e == 0) {
        return -llt_.matrixU().solve(Ft);
    }
    Matrix B(e, k);
    for (Index i = 0; i < e; ++i) {
        B.row(i) = B_eq.row(eq_kept_[static_cast<std::size_t>(i)]);
    }
    Eigen::HouseholderQR<Matrix> qr(Y_eq_);
    const Matrix R = qr.matrixQR().topRows(e).triangularView<Eigen::Upper>();
    const Matrix qf = (qr.householderQ().transpose() * Ft).topRows(e);
    const Matrix w = R.transpose().triangularView<Eigen::Lower>().solve(B);
    const Matrix nu = -R.triangularView<Eigen::Upper>().solve(w + qf);
    return -llt_.matrixU().solve(Ft + Y_eq_ * nu);
}

QpSolution DenseQpSolver::solve(const Vector& f, const Vector& b_eq, const Vector& b_in, int max_iter) const
{
    require(f.size() == d_, "DenseQpSolver::solve: f has wrong length");
    require(b_eq.size() == A_eq_.rows() && b_in.size() == A_in_.rows(), "DenseQpSolver::solve: rhs length mismatch");
    QpSolution out;
    out.lambda_eq = Vector::Zero(A_eq_.rows());
    out.mu_in = Vector::Zero(A_in_.rows());
    if (d_ == 0) {
        out.x = Vector();
        const bool feasible = (b_eq.size() == 0 || inf_norm(b_eq) <= 1e-12) && (b_in.size() == 0 || b_in.minCoeff() >= -1e-12);
        out.status = feasible ? QpStatus::optimal : QpStatus::infeasible;
        return out;
    }
    if (!convex_) {
        out.x = Vector::Zero(d_);
        out.status = QpStatus::nonconvex;
        return out;
    }
    const Index c = A_in_.rows();
    if (max_iter < 0) {
        max_iter = static_cast<int>(10 * (d_ + c + A_eq_.rows()));
        max_iter = std::max(max_iter, 10);
    }

    // Active entries: equalities carry a sign and are never dropped.
    struct Entry {
        bool equality;
        Index index;
        double sign;  // constraint reads sign * a' x >= sign * b for equalities, -a' x >= -b otherwise
    };
    std::vector<Entry> work;
    std::vector<double> u;
    std::vector<char> in_active(static_cast<std::size_t>(c), 0);

    Vector x = -llt_.solve(f);
    int iterations = 0;

    auto normal_t = [&](const Entry& en) -> Vector {
        if (en.equality) {
            return en.sign * Y_eq_.col(en.index);
        }
        return -Y_in_.col(en.index);
    };
    auto slack = [&](const Entry& en) -> double {
        if (en.equality) {
            const Index row = eq_kept_[static_cast<std::size_t>(en.index)];
            return en.sign * (A_eq_.row(row).dot(x) - b_eq(row));
        }
        return b_in(en.index) - A_in_.row(en.index).dot(x);
    };

    // Returns false on infeasibility; throws nothing.
    enum class AddResult { added, infeasible, max_iter };
    auto add_constraint = [&](Entry p) -> AddResult {
        const Vector np = normal_t(p);
        double up = 0.0;
        while (true) {
            if (++iterations > max_iter) {
                return AddResult::max_iter;
            }
            const Index nw = static_cast<Index>(work.size());
            Vector r = Vector::Zero(nw);
            Vector zt = np;
            if (nw > 0) {
                Matrix N(d_, nw);
                for (Index j = 0; j < nw; ++j) {
                    N.col(j) = normal_t(work[static_cast<std::size_t>(j)]);
                }
                r = N.colPivHouseholderQr().solve(np);
                zt = np - N * r;
            }
            const double zz = zt.squaredNorm();
            const double sp = slack(p);
            double t1 = kInf;
            Index drop = -1;
            for (Index j = 0; j < nw; ++j) {
                const Entry& en = work[static_cast<std::size_t>(j)];
                if (en.equality || r(j) <= 1e-12) {
                    continue;
                }
                const double ratio = u[static_cast<std::size_t>(j)] / r(j);
                if (ratio < t1) {
                    t1 = ratio;
                    drop = j;
                }
            }
            const bool zero_step = zz <= 1e-24 * std::max(1.0, np.squaredNorm());
            const double t2 = zero_step ? kInf : std::max(0.0, -sp) / zz;
            const double t = std::min(t1, t2);
            if (!std::isfinite(t)) {
                return AddResult::infeasible;
            }
            if (!zero_step) {
                x += t * llt_.matrixU().solve(zt);
            }
            for (Index j = 0; j < nw; ++j) {
                u[static_cast<std::size_t>(j)] -= t * r(j);
            }
            up += t;
            if (t2 <= t1) {
                work.push_back(p);
                u.push_back(up);
                if (!p.equality) {
                    in_active[static_cast<std::size_t>(p.index)] = 1;
                }
                return AddResult::added;
            }
            const Entry dropped = work[static_cast<std::size_t>(drop)];
            in_active[static_cast<std::size_t>(dropped.index)] = 0;
            work.erase(work.begin() + drop);
            u.erase(u.begin() + drop);
        }
    };

    auto finish = [&](QpStatus status) {
        std::vector<Index> active;
        for (const auto& en : work) {
            if (!en.equality) {
                active.push_back(en.index);
            }
        }
        std::sort(active.begin(), active.end());
        QpSolution sol = polish(f, b_eq, b_in, active);
        sol.status = status;
        sol.iterations = iterations;
        if (status == QpStatus::optimal && A_eq_.rows() > 0 &&
            inf_norm(A_eq_ * sol.x - b_eq) > 1e-8 * (1.0 + inf_norm(b_eq)) * (1.0 + inf_norm(sol.x))) {
            sol.status = QpStatus::infeasible;
        }
        sol.objective = 0.5 * sol.x.dot(P_ * sol.x) + f.dot(sol.x);
        return sol;
    };

    for (Index i = 0; i < static_cast<Index>(eq_kept_.size()); ++i) {
        const Index row = eq_kept_[static_cast<std::size_t>(i)];
        const double s = A_eq_.row(row).dot(x) - b_eq(row);
        const AddResult res = add_constraint(Entry{true, i, s > 0.0 ? -1.0 : 1.0});
        if (res == AddResult::infeasible) {
            return finish(QpStatus::infeasible);
        }
        if (res == AddResult::max_iter) {
            return finish(QpStatus::max_iter);
        }
    }
    const double xscale = 1.0;
    while (true) {
        Index worst = -1;
        double worst_val = 0.0;
        const double xn = inf_norm(x);
        for (Index j = 0; j < c; ++j) {
            if (in_active[static_cast<std::size_t>(j)]) {
                continue;
            }
            const double s = b_in(j) - A_in_.row(j).dot(x);
            const double tol = 1e-11 * (xscale + std::abs(b_in(j)) + A_in_.row(j).cwiseAbs().maxCoeff() * xn);
            if (s < -tol && s < worst_val) {
                worst_val = s;
                worst = j;
            }
        }
        if (worst < 0) {
            return finish(QpStatus::optimal);
        }
        const AddResult res = add_constraint(Entry{false, worst, -1.0});
        if (res == AddResult::infeasible) {
            return finish(QpStatus::infeasible);
        }
        if (res == AddResult::max_iter) {
            return finish(QpStatus::max_iter);
        }
    }
}

QpSolution solve_qp_active_set(const QuadProgram& program, int max_iter)
{
    QuadProgram prog = program;
    prog.normalize();
    DenseQpSolver solver(prog.P, prog.A_eq, prog.A_in);
    return solver.solve(prog.f, prog.b_eq, prog.b_in, max_iter);
}

}  // namespace ddpc
