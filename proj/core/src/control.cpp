#include "ddpc/control.hpp"

#include "ddpc/error.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace ddpc {

CostWeights CostWeights::uniform(Index m, Index p, Index horizon, double q, double r)
{
    CostWeights w;
    w.Q = q * Matrix::Identity(p * horizon, p * horizon);
    w.R = r * Matrix::Identity(m * horizon, m * horizon);
    return w;
}

void CostWeights::validate(Index m, Index p, Index horizon) const
{
    require(Q.rows() == p * horizon && Q.cols() == p * horizon, "CostWeights: Q must be (p N) x (p N)");
    require(R.rows() == m * horizon && R.cols() == m * horizon, "CostWeights: R must be (m N) x (m N)");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.cwiseAbs().maxCoeff()) ||
        (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff())) {
        throw ConfigError("CostWeights: Q and R must be symmetric");
    }
    if (Eigen::LLT<Matrix>(Q).info() != Eigen::Success || Eigen::LLT<Matrix>(R).info() != Eigen::Success) {
        throw ConfigError("CostWeights: Q and R must be positive definite");
    }
}

BoxConstraints BoxConstraints::none(Index m, Index p)
{
    BoxConstraints c;
    c.u_min = Vector::Constant(m, -kInf);
    c.u_max = Vector::Constant(m, kInf);
    c.y_min = Vector::Constant(p, -kInf);
    c.y_max = Vector::Constant(p, kInf);
    return c;
}

BoxConstraints BoxConstraints::inputs(const Vector& u_min, const Vector& u_max, Index p)
{
    BoxConstraints c = none(u_min.size(), p);
    c.u_min = u_min;
    c.u_max = u_max;
    return c;
}

bool BoxConstraints::empty() const
{
    auto all_inf = [](const Vector& v) { return v.size() == 0 || v.array().isInf().all(); };
    return all_inf(u_min) && all_inf(u_max) && all_inf(y_min) && all_inf(y_max);
}

void BoxConstraints::validate(Index m, Index p) const
{
    require(u_min.size() == m && u_max.size() == m, "BoxConstraints: input bounds must have m entries");
    require(y_min.size() == p && y_max.size() == p, "BoxConstraints: output bounds must have p entries");
    if ((u_min.array() > u_max.array()).any() || (y_min.array() > y_max.array()).any()) {
        throw ConfigError("BoxConstraints: lower bound exceeds upper bound");
    }
}

std::vector<BoxRow> box_rows(const BlockLayout& layout, const BoxConstraints& c)
{
    c.validate(layout.m, layout.p);
    std::vector<BoxRow> rows;
    auto add = [&](Index offset, const Vector& lo, const Vector& hi) {
        const Index w = lo.size();
        for (Index k = 0; k < layout.horizon; ++k) {
            for (Index i = 0; i < w; ++i) {
                const Index row = offset + k * w + i;
                if (std::isfinite(hi(i))) {
                    rows.push_back({row, 1.0, hi(i)});
                }
                if (std::isfinite(lo(i))) {
                    rows.push_back({row, -1.0, lo(i)});
                }
            }
        }
    };
    add(layout.u_future(), c.u_min, c.u_max);
    add(layout.y_future(), c.y_min, c.y_max);
    return rows;
}

TrajectoryImageQp::TrajectoryImageQp(const BlockLayout& layout, Matrix M, const Matrix& Wreg,
                                     const CostWeights& weights, const PastPenalty& past,
                                     const BoxConstraints& constraints)
    : layout_(layout), M_(std::move(M)), Wreg_(Wreg), weights_(weights), past_(past)
{
    const Index d = M_.cols();
    require(M_.rows() == layout_.rows(), "TrajectoryImageQp: image rows do not match the layout");
    require(Wreg_.size() == 0 || (Wreg_.rows() == d && Wreg_.cols() == d), "TrajectoryImageQp: regularizer shape");
    if (Wreg_.size() == 0) {
        Wreg_ = Matrix::Zero(d, d);
    }
    weights_.validate(layout_.m, layout_.p, layout_.horizon);
    if (past_.lambda_u < 0.0 || past_.lambda_y < 0.0) {
        throw ConfigError("TrajectoryImageQp: past penalties must be nonnegative");
    }
    rows_ = box_rows(layout_, constraints);

    rho_ = std::max({1.0, weights_.Q.diagonal().maxCoeff(), weights_.R.diagonal().maxCoeff(), past_.lambda_u,
                     past_.lambda_y});
    const Index mt = layout_.m * layout_.t_ini;
    const Index pt = layout_.p * layout_.t_ini;
    if (past_.u_hard) {
        for (Index i = 0; i < mt; ++i) {
            hard_rows_.push_back(layout_.u_past() + i);
        }
    }
    if (past_.y_hard) {
        for (Index i = 0; i < pt; ++i) {
            hard_rows_.push_back(layout_.y_past() + i);
        }
    }
    Matrix Mh(static_cast<Index>(hard_rows_.size()), d);
    for (std::size_t i = 0; i < hard_rows_.size(); ++i) {
        Mh.row(static_cast<Index>(i)) = M_.row(hard_rows_[i]);
    }
    const auto kept_local = independent_rows(Mh, kDefaultRankTol, M_.size() > 0 ? M_.rowwise().norm().maxCoeff() : 0.0);
    Matrix A_eq(static_cast<Index>(kept_local.size()), d);
    for (std::size_t i = 0; i < kept_local.size(); ++i) {
        hard_kept_.push_back(hard_rows_[static_cast<std::size_t>(kept_local[i])]);
        A_eq.row(static_cast<Index>(i)) = M_.row(hard_kept_.back());
    }

    // Hessian 2 (M' W M + Wreg) with the hard rows weighted by rho (zero on the feasible set)
    Matrix WM(M_.rows(), d);
    const double wu = past_.u_hard ? rho_ : past_.lambda_u;
    const double wy = past_.y_hard ? rho_ : past_.lambda_y;
    WM.middleRows(layout_.u_past(), mt) = wu * M_.middleRows(layout_.u_past(), mt);
    WM.middleRows(layout_.y_past(), pt) = wy * M_.middleRows(layout_.y_past(), pt);
    const Index mn = layout_.m * layout_.horizon;
    const Index pn = layout_.p * layout_.horizon;
    WM.middleRows(layout_.u_future(), mn) = weights_.R * M_.middleRows(layout_.u_future(), mn);
    WM.middleRows(layout_.y_future(), pn) = weights_.Q * M_.middleRows(layout_.y_future(), pn);
    Matrix H = 2.0 * (M_.transpose() * WM + Wreg_);
    H = 0.5 * (H + H.transpose());

    if (d > 0) {
        Eigen::LLT<Matrix> llt(H);
        bool definite = llt.info() == Eigen::Success;
        if (definite) {
            const Vector diag = llt.matrixLLT().diagonal();
            definite = diag.minCoeff() > 1e-6 * diag.maxCoeff();
        }
        if (!definite) {
            // Directions that move neither v nor the regularizer get the mean curvature. They are found
            // from [M; Wreg] rather than the Hessian, whose spectrum is the square of the image's.
            Matrix stacked(M_.rows() + d, d);
            stacked << M_, Wreg_;
            Eigen::BDCSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
            const Vector& sv = svd.singularValues();
            const double cut = kDefaultRankTol * (sv.size() > 0 ? sv(0) : 0.0);
            const double gamma = std::max(H.trace() / static_cast<double>(d), 1e-12);
            for (Index i = 0; i < d; ++i) {
                if (i >= sv.size() || sv(i) <= cut) {
                    H.noalias() += gamma * svd.matrixV().col(i) * svd.matrixV().col(i).transpose();
                    completed_ = true;
                }
            }
            H = 0.5 * (H + H.transpose());
        }
    }

    Matrix A_in(static_cast<Index>(rows_.size()), d);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        A_in.row(static_cast<Index>(i)) = rows_[i].sign * M_.row(rows_[i].row);
    }
    solver_ = std::make_unique<DenseQpSolver>(H, A_eq, A_in);
    if (!solver_->convex()) {
        throw NumericalError("TrajectoryImageQp: Hessian is not positive definite");
    }
}

Vector TrajectoryImageQp::target(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    require(u_ini.size() == layout_.m * layout_.t_ini && y_ini.size() == layout_.p * layout_.t_ini,
            "TrajectoryImageQp: initial trajectory has wrong length");
    require(r.size() == layout_.p * layout_.horizon, "TrajectoryImageQp: reference has wrong length");
    Vector t = Vector::Zero(layout_.rows());
    t.segment(layout_.u_past(), u_ini.size()) = u_ini;
    t.segment(layout_.y_past(), y_ini.size()) = y_ini;
    t.segment(layout_.y_future(), r.size()) = r;
    return t;
}

Vector TrajectoryImageQp::linear_term(const Vector& dv) const
{
    const Index mt = layout_.m * layout_.t_ini;
    const Index pt = layout_.p * layout_.t_ini;
    const Index mn = layout_.m * layout_.horizon;
    const Index pn = layout_.p * layout_.horizon;
    Vector wd(dv.size());
    wd.segment(layout_.u_past(), mt) = (past_.u_hard ? rho_ : past_.lambda_u) * dv.segment(layout_.u_past(), mt);
    wd.segment(layout_.y_past(), pt) = (past_.y_hard ? rho_ : past_.lambda_y) * dv.segment(layout_.y_past(), pt);
    wd.segment(layout_.u_future(), mn) = weights_.R * dv.segment(layout_.u_future(), mn);
    wd.segment(layout_.y_future(), pn) = weights_.Q * dv.segment(layout_.y_future(), pn);
    return 2.0 * (M_.transpose() * wd);
}

PredictiveSolution TrajectoryImageQp::solve(const Vector& v0, const Vector& u_ini, const Vector& y_ini,
                                            const Vector& r, double objective_offset) const
{
    require(v0.size() == layout_.rows(), "TrajectoryImageQp: offset has wrong length");
    const Vector t = target(u_ini, y_ini, r);
    const Vector dv = v0 - t;
    const Vector f = linear_term(dv);
    Vector b_eq(static_cast<Index>(hard_kept_.size()));
    for (std::size_t i = 0; i < hard_kept_.size(); ++i) {
        b_eq(static_cast<Index>(i)) = -dv(hard_kept_[i]);
    }
    Vector b_in(static_cast<Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        b_in(static_cast<Index>(i)) = rows_[i].sign * (rows_[i].bound - v0(rows_[i].row));
    }
    const QpSolution qp = solver_->solve(f, b_eq, b_in);
    if (qp.status == QpStatus::infeasible) {
        throw InfeasibleProblem("predictive QP: constraint set is empty");
    }
    if (qp.status != QpStatus::optimal) {
        throw NumericalError("predictive QP: solver ended with status " + to_string(qp.status));
    }
    const Vector v = M_ * qp.x + v0;
    if (!hard_rows_.empty()) {
        double worst = 0.0;
        double scale = 1.0;
        for (Index row : hard_rows_) {
            worst = std::max(worst, std::abs(v(row) - t(row)));
            scale = std::max({scale, std::abs(t(row)), std::abs(v0(row))});
        }
        if (worst > 1e-6 * scale) {
            throw InfeasibleProblem("predictive QP: initial trajectory is not consistent with the data (residual " +
                                    std::to_string(worst) + ")");
        }
    }

    PredictiveSolution sol;
    sol.decision = qp.x;
    const Index mt = layout_.m * layout_.t_ini;
    const Index pt = layout_.p * layout_.t_ini;
    const Index mn = layout_.m * layout_.horizon;
    const Index pn = layout_.p * layout_.horizon;
    sol.u = v.segment(layout_.u_future(), mn);
    sol.y = v.segment(layout_.y_future(), pn);
    sol.sigma_u = past_.u_hard ? Vector::Zero(mt) : Vector(v.segment(layout_.u_past(), mt) - u_ini);
    sol.sigma_y = v.segment(layout_.y_past(), pt) - y_ini;
    const Vector ey = sol.y - r;
    double obj = ey.dot(weights_.Q * ey) + sol.u.dot(weights_.R * sol.u) + qp.x.dot(Wreg_ * qp.x);
    if (!past_.u_hard) {
        obj += past_.lambda_u * sol.sigma_u.squaredNorm();
    }
    if (!past_.y_hard) {
        obj += past_.lambda_y * sol.sigma_y.squaredNorm();
    }
    sol.objective = obj + objective_offset;
    sol.active_set = qp.active_set;
    sol.mu.resize(static_cast<Index>(qp.active_set.size()));
    for (std::size_t i = 0; i < qp.active_set.size(); ++i) {
        sol.mu(static_cast<Index>(i)) = qp.mu_in(qp.active_set[i]);
    }
    sol.status = qp.status;
    sol.iterations = qp.iterations;
    return sol;
}

TrajectoryImageQp::LinearResponse TrajectoryImageQp::unconstrained_response() const
{
    const Index mt = layout_.m * layout_.t_ini;
    const Index pt = layout_.p * layout_.t_ini;
    const Index pn = layout_.p * layout_.horizon;
    const Index cols = mt + pt + pn;
    // columns of the target map t = E (u_ini; y_ini; r)
    Matrix E = Matrix::Zero(layout_.rows(), cols);
    E.block(layout_.u_past(), 0, mt, mt).setIdentity();
    E.block(layout_.y_past(), mt, pt, pt).setIdentity();
    E.block(layout_.y_future(), mt + pt, pn, pn).setIdentity();
    Matrix F(decision_dim(), cols);
    for (Index j = 0; j < cols; ++j) {
        F.col(j) = linear_term(-E.col(j));
    }
    Matrix B(static_cast<Index>(hard_kept_.size()), cols);
    for (std::size_t i = 0; i < hard_kept_.size(); ++i) {
        B.row(static_cast<Index>(i)) = E.row(hard_kept_[i]);
    }
    const Matrix Z = solver_->solve_equality(F, B);
    return {Z.leftCols(mt + pt), Z.rightCols(pn)};
}

std::size_t TrajectoryImageQp::stored_entries() const
{
    return entries(M_) + entries(Wreg_) + solver_->stored_entries();
}

}  // namespace ddpc
