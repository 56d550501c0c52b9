#include "ddpc/deepc.hpp"

#include "ddpc/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>

namespace ddpc {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double inf_norm(const Vector& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Past rows of the stacked layout split by treatment, with the soft weights.
struct PastSplit {
    std::vector<Index> hard;
    std::vector<Index> soft;
    Vector weight;
};

PastSplit split_past(const BlockLayout& layout, const PastPenalty& pen)
{
    PastSplit s;
    std::vector<double> w;
    const Index mt = layout.m * layout.t_ini;
    const Index pt = layout.p * layout.t_ini;
    for (Index i = 0; i < mt; ++i) {
        if (pen.u_hard) {
            s.hard.push_back(layout.u_past() + i);
        } else {
            s.soft.push_back(layout.u_past() + i);
            w.push_back(pen.lambda_u);
        }
    }
    for (Index i = 0; i < pt; ++i) {
        if (pen.y_hard) {
            s.hard.push_back(layout.y_past() + i);
        } else {
            s.soft.push_back(layout.y_past() + i);
            w.push_back(pen.lambda_y);
        }
    }
    s.weight = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
    return s;
}

Matrix rows_of(const Matrix& H, const std::vector<Index>& rows)
{
    Matrix out(static_cast<Index>(rows.size()), H.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Index>(i)) = H.row(rows[i]);
    }
    return out;
}

Vector entries_of(const Vector& t, const std::vector<Index>& rows)
{
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out(static_cast<Index>(i)) = t(rows[i]);
    }
    return out;
}

Vector stacked_target(const BlockLayout& layout, const Vector& u_ini, const Vector& y_ini)
{
    require(u_ini.size() == layout.m * layout.t_ini && y_ini.size() == layout.p * layout.t_ini,
            "initial trajectory has wrong length");
    Vector t = Vector::Zero(layout.past_rows());
    t.segment(layout.u_past(), u_ini.size()) = u_ini;
    t.segment(layout.y_past(), y_ini.size()) = y_ini;
    return t;
}

}  // namespace

PastPenalty DeepcConfig::penalty() const
{
    if (past == PastMode::hard) {
        return PastPenalty{true, true, 0.0, 0.0};
    }
    return PastPenalty{!use_input_slack, false, use_input_slack ? lambda_u : 0.0, lambda_y};
}

void DeepcConfig::validate(const BlockLayout& layout) const
{
    if (layout.t_ini != t_ini || layout.horizon != horizon) {
        throw ConfigError("DeepcConfig: T_ini/N do not match the data blocks");
    }
    if (lambda_g < 0.0 || lambda_u < 0.0 || lambda_y < 0.0) {
        throw ConfigError("DeepcConfig: regularization weights must be nonnegative");
    }
    weights.validate(layout.m, layout.p, layout.horizon);
}

DeepcController::DeepcController(const DataBlocks& blocks, const DeepcConfig& config,
                                 const BoxConstraints& constraints)
    : config_(config)
{
    config_.validate(blocks.layout);
    const Index L = blocks.cols();
    qp_ = std::make_unique<TrajectoryImageQp>(blocks.layout, blocks.H, config_.lambda_g * Matrix::Identity(L, L),
                                              config_.weights, config_.penalty(), constraints);
}

PredictiveSolution DeepcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    const auto start = std::chrono::steady_clock::now();
    PredictiveSolution sol = qp_->solve(Vector::Zero(qp_->layout().rows()), u_ini, y_ini, r);
    sol.solve_seconds = seconds_since(start);
    return sol;
}

PredictiveSolution DeepcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return solve(u_ini, y_ini, r);
}

PredictiveSolution deepc_step(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini, const Vector& r,
                              const DeepcConfig& config, const BoxConstraints& constraints)
{
    return DeepcController(blocks, config, constraints).solve(u_ini, y_ini, r);
}

DeepcGains unconstrained_deepc_gains(const DataBlocks& blocks, const DeepcConfig& config)
{
    const BlockLayout& lay = blocks.layout;
    DeepcController ctrl(blocks, config, BoxConstraints::none(lay.m, lay.p));
    const auto response = ctrl.program().unconstrained_response();
    const Matrix UF = blocks.U_F();
    return DeepcGains{UF * response.from_reference, UF * response.from_past};
}

Score scoring_O_m(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini, const Vector& u,
                  const Vector& y, const DeepcConfig& config)
{
    config.validate(blocks.layout);
    const BlockLayout& lay = blocks.layout;
    require(u.size() == lay.m * lay.horizon && y.size() == lay.p * lay.horizon, "scoring_O_m: candidate length");
    const PastSplit split = split_past(lay, config.penalty());
    const Vector t_past = stacked_target(lay, u_ini, y_ini);
    const Index L = blocks.cols();

    const Matrix Hs = rows_of(blocks.H, split.soft);
    const Vector ts = entries_of(t_past, split.soft);
    const Matrix J = config.lambda_g * Matrix::Identity(L, L) + Hs.transpose() * split.weight.asDiagonal() * Hs;
    const Vector h = Hs.transpose() * split.weight.cwiseProduct(ts);

    const Index nh = static_cast<Index>(split.hard.size());
    Matrix E(nh + lay.future_rows(), L);
    E.topRows(nh) = rows_of(blocks.H, split.hard);
    E.bottomRows(lay.future_rows()) = blocks.H.bottomRows(lay.future_rows());
    Vector b(E.rows());
    b.head(nh) = entries_of(t_past, split.hard);
    b.segment(nh, u.size()) = u;
    b.tail(y.size()) = y;

    EqualityQpFactor factor(2.0 * J, E, true);
    Score score;
    if (!factor.ok()) {
        throw NumericalError("scoring_O_m: score Hessian is indefinite");
    }
    score.g = factor.solve_x(-2.0 * h, b);
    const double scale = std::max({1.0, inf_norm(b), E.cwiseAbs().maxCoeff() * inf_norm(score.g)});
    score.feasible = inf_norm(E * score.g - b) <= 1e-8 * scale;
    const Vector rs = Hs * score.g - ts;
    score.value = config.lambda_g * score.g.squaredNorm() + rs.dot(split.weight.cwiseProduct(rs));
    return score;
}

DecomposedController::DecomposedController(const DataBlocks& blocks, const DeepcConfig& config,
                                           const BoxConstraints& constraints)
    : layout_(blocks.layout), config_(config)
{
    config_.validate(layout_);
    const PastSplit split = split_past(layout_, config_.penalty());
    hard_rows_ = split.hard;
    soft_rows_ = split.soft;
    soft_weight_ = split.weight;
    const Index L = blocks.cols();
    const Index nh = static_cast<Index>(hard_rows_.size());
    const Index nv = layout_.future_rows();

    H_soft_ = rows_of(blocks.H, soft_rows_);
    J_ = config_.lambda_g * Matrix::Identity(L, L) + H_soft_.transpose() * soft_weight_.asDiagonal() * H_soft_;
    Matrix E(nh + nv, L);
    E.topRows(nh) = rows_of(blocks.H, hard_rows_);
    E.bottomRows(nv) = blocks.H.bottomRows(nv);

    EqualityQpFactor factor(2.0 * J_, E, true);
    if (!factor.ok()) {
        throw NumericalError("DecomposedController: score Hessian is indefinite");
    }
    const Matrix Gb = factor.solve_x(Matrix::Zero(L, E.rows()), Matrix::Identity(E.rows(), E.rows()));
    G_h_ = Gb.leftCols(nh);
    G_v_ = Gb.rightCols(nv);
    const Index ns = static_cast<Index>(soft_rows_.size());
    G_s_ = factor.solve_x(-2.0 * H_soft_.transpose() * soft_weight_.asDiagonal(), Matrix::Zero(E.rows(), ns));
    S_vv_ = G_v_.transpose() * J_ * G_v_;
    S_vv_ = 0.5 * (S_vv_ + S_vv_.transpose());

    // rows of E that are combinations of the others constrain (t_hard, v)
    Eigen::BDCSVD<Matrix> svd(E, Eigen::ComputeFullU);
    const Vector& s = svd.singularValues();
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > kDefaultRankTol * s(0)) {
            ++rank;
        }
    }
    const Matrix Uperp = svd.matrixU().rightCols(E.rows() - rank);
    feas_h_ = Uperp.topRows(nh).transpose();
    feas_v_ = Uperp.bottomRows(nv).transpose();

    rows_ = box_rows(layout_, constraints);
    Matrix A_in = Matrix::Zero(static_cast<Index>(rows_.size()), nv);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        A_in(static_cast<Index>(i), rows_[i].row - layout_.u_future()) = rows_[i].sign;
    }
    const Index mn = layout_.m * layout_.horizon;
    Matrix P = 2.0 * S_vv_;
    P.topLeftCorner(mn, mn) += 2.0 * config_.weights.R;
    P.bottomRightCorner(nv - mn, nv - mn) += 2.0 * config_.weights.Q;

    // P/2 = A'A with A = [F G_v; sqrt(R) (+) sqrt(Q)] and J = F'F. Nearly dependent data rows make
    // S_vv stiff, so the QP runs in z = R_A v where the Hessian is the identity.
    Matrix F(ns + (config_.lambda_g > 0.0 ? L : 0), L);
    F.topRows(ns) = soft_weight_.cwiseSqrt().asDiagonal() * H_soft_;
    if (config_.lambda_g > 0.0) {
        F.bottomRows(L) = std::sqrt(config_.lambda_g) * Matrix::Identity(L, L);
    }
    const Eigen::LLT<Matrix> llt_r(config_.weights.R), llt_q(config_.weights.Q);
    if (llt_r.info() == Eigen::Success && llt_q.info() == Eigen::Success) {
        Matrix A = Matrix::Zero(F.rows() + nv, nv);
        A.topRows(F.rows()) = F * G_v_;
        A.block(F.rows(), 0, mn, mn) = llt_r.matrixU();
        A.block(F.rows() + mn, mn, nv - mn, nv - mn) = llt_q.matrixU();
        const Eigen::HouseholderQR<Matrix> qr(A);
        const Matrix R_A = qr.matrixQR().topRows(nv).triangularView<Eigen::Upper>();
        const Vector dg = R_A.diagonal().cwiseAbs();
        if (dg.minCoeff() > 1e-12 * dg.maxCoeff()) {
            T_v_ = R_A.triangularView<Eigen::Upper>().solve(Matrix::Identity(nv, nv));
            // the linear term must come from Q_A' a0; going through R_A^{-T} A' a0 squares the conditioning
            Q_A_ = qr.householderQ() * Matrix::Identity(A.rows(), nv);
            Lq_t_ = llt_q.matrixU();
        }
    }
    if (T_v_.size() > 0) {
        solver_ = std::make_unique<DenseQpSolver>(2.0 * Matrix::Identity(nv, nv), feas_v_ * T_v_, A_in * T_v_);
    } else {
        solver_ = std::make_unique<DenseQpSolver>(P, feas_v_, A_in);
    }
    if (!solver_->convex()) {
        throw NumericalError("DecomposedController: Hessian is not positive definite");
    }
}

DecomposedController::Affine DecomposedController::score_terms(const Vector& u_ini, const Vector& y_ini) const
{
    const Vector t_past = stacked_target(layout_, u_ini, y_ini);
    const Vector th = entries_of(t_past, hard_rows_);
    const Vector ts = entries_of(t_past, soft_rows_);
    const Vector c = G_h_ * th + G_s_ * ts;
    const Vector h = H_soft_.transpose() * soft_weight_.cwiseProduct(ts);
    const Vector Jc = J_ * c;
    Affine a;
    a.linear = G_v_.transpose() * (Jc - h);
    a.constant = c.dot(Jc) - 2.0 * c.dot(h) + ts.dot(soft_weight_.cwiseProduct(ts));
    return a;
}

double DecomposedController::score(const Vector& u_ini, const Vector& y_ini, const Vector& v) const
{
    const Vector t_past = stacked_target(layout_, u_ini, y_ini);
    return score_at(coefficients(u_ini, y_ini, v), entries_of(t_past, soft_rows_));
}

double DecomposedController::score_at(const Vector& g, const Vector& t_soft) const
{
    const Vector res = H_soft_ * g - t_soft;
    return res.dot(soft_weight_.cwiseProduct(res)) + config_.lambda_g * g.squaredNorm();
}

Vector DecomposedController::coefficients(const Vector& u_ini, const Vector& y_ini, const Vector& v) const
{
    const Vector t_past = stacked_target(layout_, u_ini, y_ini);
    return G_v_ * v + G_h_ * entries_of(t_past, hard_rows_) + G_s_ * entries_of(t_past, soft_rows_);
}

PredictiveSolution DecomposedController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    const auto start = std::chrono::steady_clock::now();
    const Index mn = layout_.m * layout_.horizon;
    const Index nv = layout_.future_rows();
    require(r.size() == nv - mn, "DecomposedController: reference has wrong length");
    const Vector t_past = stacked_target(layout_, u_ini, y_ini);
    const Vector th = entries_of(t_past, hard_rows_);
    const Vector ts = entries_of(t_past, soft_rows_);
    Vector f;
    if (T_v_.size() > 0) {
        // residual of the whitened least-squares form |A v + a0|^2 at v = 0
        const Vector c = G_h_ * th + G_s_ * ts;
        const Index ns = static_cast<Index>(soft_rows_.size());
        Vector a0 = Vector::Zero(Q_A_.rows());
        a0.head(ns) = soft_weight_.cwiseSqrt().cwiseProduct(H_soft_ * c - ts);
        if (config_.lambda_g > 0.0) {
            a0.segment(ns, c.size()) = std::sqrt(config_.lambda_g) * c;
        }
        a0.tail(nv - mn) = -(Lq_t_ * r);
        f = 2.0 * (Q_A_.transpose() * a0);
    } else {
        const Affine a = score_terms(u_ini, y_ini);
        f = 2.0 * a.linear;
        f.tail(nv - mn) -= 2.0 * (config_.weights.Q * r);
    }
    const Vector b_eq = -feas_h_ * th;
    Vector b_in(static_cast<Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        b_in(static_cast<Index>(i)) = rows_[i].sign * rows_[i].bound;
    }
    QpSolution qp = solver_->solve(f, b_eq, b_in);
    if (qp.status == QpStatus::infeasible) {
        throw InfeasibleProblem("decomposed QP: constraint set is empty");
    }
    if (T_v_.size() > 0) {
        qp.x = T_v_ * qp.x;
    }
    if (qp.status != QpStatus::optimal) {
        throw NumericalError("decomposed QP: solver ended with status " + to_string(qp.status));
    }
    PredictiveSolution sol;
    sol.decision = qp.x;
    sol.u = qp.x.head(mn);
    sol.y = qp.x.tail(nv - mn);
    const Vector g = coefficients(u_ini, y_ini, qp.x);
    const Index mt = layout_.m * layout_.t_ini;
    const Index pt = layout_.p * layout_.t_ini;
    sol.sigma_u = Vector::Zero(mt);
    sol.sigma_y = Vector::Zero(pt);
    const Vector soft_vals = H_soft_ * g;
    for (std::size_t i = 0; i < soft_rows_.size(); ++i) {
        const Index row = soft_rows_[i];
        const double res = soft_vals(static_cast<Index>(i)) - t_past(row);
        if (row < layout_.y_past()) {
            sol.sigma_u(row - layout_.u_past()) = res;
        } else {
            sol.sigma_y(row - layout_.y_past()) = res;
        }
    }
    const Vector ey = sol.y - r;
    sol.objective = ey.dot(config_.weights.Q * ey) + sol.u.dot(config_.weights.R * sol.u) + score_at(g, ts);
    sol.active_set = qp.active_set;
    sol.mu.resize(static_cast<Index>(qp.active_set.size()));
    for (std::size_t i = 0; i < qp.active_set.size(); ++i) {
        sol.mu(static_cast<Index>(i)) = qp.mu_in(qp.active_set[i]);
    }
    sol.status = qp.status;
    sol.iterations = qp.iterations;
    sol.solve_seconds = seconds_since(start);
    return sol;
}

PredictiveSolution DecomposedController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return solve(u_ini, y_ini, r);
}

std::size_t DecomposedController::stored_entries() const
{
    return entries(G_v_) + entries(G_h_) + entries(G_s_) + entries(J_) + entries(H_soft_) + entries(S_vv_) +
           entries(feas_v_) + entries(feas_h_) + entries(T_v_) + entries(Q_A_) + entries(Lq_t_) +
           solver_->stored_entries();
}

PredictiveSolution decomposed_step(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini,
                                   const Vector& r, const DeepcConfig& config, const BoxConstraints& constraints)
{
    return DecomposedController(blocks, config, constraints).solve(u_ini, y_ini, r);
}

}  // namespace ddpc
