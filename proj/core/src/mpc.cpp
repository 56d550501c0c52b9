#include "ddpc/mpc.hpp"

#include "ddpc/error.hpp"

#include <chrono>

namespace ddpc {

MpcController::MpcController(const StateSpaceModel& model, const CostWeights& weights,
                             const BoxConstraints& constraints, Index horizon)
    : model_(model), horizon_(horizon)
{
    require(horizon >= 1, "MpcController: horizon must be positive");
    O_ = observability_matrix(model_, horizon_);
    T_ = impulse_toeplitz(model_, horizon_);
    const Index mn = model_.m() * horizon_;
    const BlockLayout layout{model_.m(), model_.p(), 0, horizon_};
    Matrix M(layout.rows(), mn);
    M.topRows(mn).setIdentity();
    M.bottomRows(T_.rows()) = T_;
    qp_ = std::make_unique<TrajectoryImageQp>(layout, std::move(M), Matrix(), weights, PastPenalty{}, constraints);
}

PredictiveSolution MpcController::step(const Vector& x, const Vector& r) const
{
    require(x.size() == model_.n(), "mpc_step: state has wrong dimension");
    const auto start = std::chrono::steady_clock::now();
    Vector v0 = Vector::Zero(qp_->layout().rows());
    v0.tail(O_.rows()) = O_ * x;
    PredictiveSolution sol = qp_->solve(v0, Vector(), Vector(), r);
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

std::size_t MpcController::stored_entries() const
{
    return entries(O_) + entries(T_) + qp_->stored_entries();
}

PredictiveSolution mpc_step(const StateSpaceModel& model, const Vector& x, const Vector& r, const CostWeights& weights,
                            const BoxConstraints& constraints, Index horizon)
{
    return MpcController(model, weights, constraints, horizon).step(x, r);
}

MpcGains unconstrained_mpc_gains(const StateSpaceModel& model, const CostWeights& weights, Index horizon)
{
    weights.validate(model.m(), model.p(), horizon);
    const Matrix O = observability_matrix(model, horizon);
    const Matrix T = impulse_toeplitz(model, horizon);
    const Matrix TQ = T.transpose() * weights.Q;
    const Matrix H = TQ * T + weights.R;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("unconstrained_mpc_gains: T'QT + R is not positive definite");
    }
    MpcGains g;
    g.K_r = llt.solve(TQ);
    g.K_x = -g.K_r * O;
    return g;
}

}  // namespace ddpc
