#pragma once

#include "ddpc/datamat.hpp"
#include "ddpc/qp.hpp"
#include "ddpc/types.hpp"

#include <memory>
#include <vector>

namespace ddpc {

/// Block-diagonal horizon weights: Q is (p N) x (p N), R is (m N) x (m N).
struct CostWeights {
    Matrix Q;
    Matrix R;

    static CostWeights uniform(Index m, Index p, Index horizon, double q = 1.0, double r = 1.0);
    void validate(Index m, Index p, Index horizon) const;
};

/// Pointwise bounds applied at every prediction step. Components may be infinite.
struct BoxConstraints {
    Vector u_min, u_max;
    Vector y_min, y_max;

    static BoxConstraints none(Index m, Index p);
    static BoxConstraints inputs(const Vector& u_min, const Vector& u_max, Index p);
    bool empty() const;
    void validate(Index m, Index p) const;
};

/// One bound on the stacked trajectory: sign * v[row] <= sign * bound.
struct BoxRow {
    Index row;
    double sign;
    double bound;
};

/// Box rows over the future segments, all u rows first, then all y rows;
/// per step and component the upper bound precedes the lower one. Infinite bounds are skipped.
std::vector<BoxRow> box_rows(const BlockLayout& layout, const BoxConstraints& constraints);

/// Output of every predictive controller step.
struct PredictiveSolution {
    Vector decision;
    Vector u;        // m N
    Vector y;        // p N
    Vector sigma_u;  // m T_ini
    Vector sigma_y;  // p T_ini
    double objective = 0.0;
    double solve_seconds = 0.0;
    std::vector<Index> active_set;  // indices into box_rows()
    Vector mu;                      // multipliers of the active rows, same order
    QpStatus status = QpStatus::optimal;
    int iterations = 0;
};

/// Treatment of the past rows in the stacked cost.
struct PastPenalty {
    bool u_hard = true;
    bool y_hard = true;
    double lambda_u = 0.0;
    double lambda_y = 0.0;
};

/// QP over a linear image of the behavior, v = M z + v0 in the stacked layout:
///   min (v - t)' W (v - t) + z' Wreg z  subject to hard past rows and box rows,
/// with t = (u_ini, y_ini, 0, r) and W = diag(lambda_u, lambda_y, R, Q).
/// Hard rows are pruned to an independent subset; consistency is checked after the solve.
class TrajectoryImageQp {
public:
    TrajectoryImageQp(const BlockLayout& layout, Matrix M, const Matrix& Wreg, const CostWeights& weights,
                      const PastPenalty& past, const BoxConstraints& constraints);

    PredictiveSolution solve(const Vector& v0, const Vector& u_ini, const Vector& y_ini, const Vector& r,
                             double objective_offset = 0.0) const;

    /// Minimizer without inequalities, z = Z_p (u_ini; y_ini) + Z_r r, for v0 = 0.
    struct LinearResponse {
        Matrix from_past;
        Matrix from_reference;
    };
    LinearResponse unconstrained_response() const;

    const BlockLayout& layout() const { return layout_; }
    const Matrix& image() const { return M_; }
    Index decision_dim() const { return M_.cols(); }
    const std::vector<BoxRow>& rows() const { return rows_; }
    /// True when the Hessian needed a null-space completion (singular regularizer and image).
    bool completed() const { return completed_; }
    std::size_t stored_entries() const;

private:
    Vector target(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Vector linear_term(const Vector& d) const;

    BlockLayout layout_;
    Matrix M_;
    Matrix Wreg_;
    CostWeights weights_;
    PastPenalty past_;
    double rho_ = 1.0;
    std::vector<Index> hard_rows_;
    std::vector<Index> hard_kept_;
    std::vector<BoxRow> rows_;
    std::unique_ptr<DenseQpSolver> solver_;
    bool completed_ = false;
};

}  // namespace ddpc
