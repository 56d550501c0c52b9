#pragma once

#include "ddpc/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <optional>
#include <string>
#include <vector>

namespace ddpc {

/// min 1/2 x'Px + f'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QuadProgram {
    Matrix P;
    Vector f;
    Matrix A_eq;
    Vector b_eq;
    Matrix A_in;
    Vector b_in;

    Index dim() const { return P.rows(); }
    /// Fills empty constraint blocks with correctly shaped zero-row matrices and checks shapes.
    void normalize();
};

enum class QpStatus { optimal, infeasible, max_iter, nonconvex };

std::string to_string(QpStatus status);

/// Multipliers follow P x + f + A_eq' lambda + A_in' mu = 0 with mu >= 0.
struct QpSolution {
    Vector x;
    Vector lambda_eq;
    Vector mu_in;
    std::vector<Index> active_set;  // indices into the inequality rows
    QpStatus status = QpStatus::optimal;
    int iterations = 0;
    double objective = 0.0;
};

struct KktReport {
    double stationarity = 0.0;    // |P x + f + A_eq' lambda + A_in' mu| / (1 + |f|)
    double eq_residual = 0.0;     // |A_eq x - b_eq| / (1 + |b_eq|)
    double in_violation = 0.0;    // max(A_in x - b_in)_+ / (1 + |b_in|)
    double min_multiplier = 0.0;  // min(mu), 0 when there are no inequalities
    double complementarity = 0.0; // max |mu_i (b - A x)_i|

    bool holds(double tol = 1e-8) const;
};

KktReport kkt_residuals(const QuadProgram& program, const QpSolution& solution);

/// Null-space solver for equality-constrained QPs. Dependent constraint rows are pruned.
/// With allow_semidefinite the reduced Hessian may be singular; the minimum-norm solution is then returned.
class EqualityQpFactor {
public:
    EqualityQpFactor(const Matrix& P, const Matrix& A, bool allow_semidefinite = false);

    /// False when the reduced Hessian is not positive definite (strict mode only).
    bool ok() const { return ok_; }
    Index dim() const { return d_; }
    const std::vector<Index>& kept_rows() const { return kept_; }

    /// Columnwise solves; f is d x k, b has one row per original constraint row.
    Matrix solve_x(const Matrix& f, const Matrix& b) const;
    /// Multipliers for the kept rows of the last solve_x inputs (zero for pruned rows).
    Matrix multipliers(const Matrix& x, const Matrix& f) const;

    std::size_t stored_entries() const;

private:
    Index d_ = 0;
    Index rows_ = 0;
    std::vector<Index> kept_;
    Matrix P_;
    Matrix Q1_, Q2_;
    Matrix R_;  // upper triangular, A_kept' = Q1 R
    Eigen::LLT<Matrix> reduced_llt_;
    Matrix reduced_pinv_;
    bool semidefinite_ = false;
    bool ok_ = true;
};

QpSolution solve_eq_qp(const Matrix& P, const Vector& f, const Matrix& A_eq, const Vector& b_eq);

/// Dual active-set solver for strictly convex QPs. Factorizes P and the constraint
/// normals once; solve() accepts new right-hand sides.
class DenseQpSolver {
public:
    DenseQpSolver(const Matrix& P, const Matrix& A_eq, const Matrix& A_in);

    Index dim() const { return d_; }
    Index equality_rows() const { return A_eq_.rows(); }
    Index inequality_rows() const { return A_in_.rows(); }
    bool convex() const { return convex_; }

    QpSolution solve(const Vector& f, const Vector& b_eq, const Vector& b_in, int max_iter = -1) const;
    /// Equality-only minimizers, one per column of F and B_eq; inequalities are ignored.
    Matrix solve_equality(const Matrix& F, const Matrix& B_eq) const;

    std::size_t stored_entries() const;

private:
    QpSolution polish(const Vector& f, const Vector& b_eq, const Vector& b_in, const std::vector<Index>& active) const;

    Index d_ = 0;
    Matrix P_;
    Matrix A_eq_;
    Matrix A_in_;
    std::vector<Index> eq_kept_;
    Eigen::LLT<Matrix> llt_;
    Matrix Y_eq_;  // L^{-1} A_eq'
    Matrix Y_in_;  // L^{-1} A_in'
    bool convex_ = true;
};

QpSolution solve_qp_active_set(const QuadProgram& program, int max_iter = -1);

/// Indices of a maximal set of linearly independent rows, in ascending order. Pivots at or below
/// tol * max(reference, largest pivot) count as dependent; a reference guards against rows that are
/// numerically zero relative to a larger surrounding matrix.
std::vector<Index> independent_rows(const Matrix& A, double tol = kDefaultRankTol, double reference = 0.0);

}  // namespace ddpc
