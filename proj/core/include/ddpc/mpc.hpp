#pragma once

#include "ddpc/control.hpp"
#include "ddpc/plant.hpp"

#include <memory>

namespace ddpc {

/// Condensed linear MPC over y = O x + T u; the horizon starts at the current sample.
class MpcController {
public:
    MpcController(const StateSpaceModel& model, const CostWeights& weights, const BoxConstraints& constraints,
                  Index horizon);

    PredictiveSolution step(const Vector& x, const Vector& r) const;

    const StateSpaceModel& model() const { return model_; }
    const Matrix& observability() const { return O_; }
    const Matrix& toeplitz() const { return T_; }
    Index horizon() const { return horizon_; }
    Index decision_dim() const { return model_.m() * horizon_; }
    std::size_t stored_entries() const;

private:
    StateSpaceModel model_;
    Index horizon_;
    Matrix O_;
    Matrix T_;
    std::unique_ptr<TrajectoryImageQp> qp_;
};

PredictiveSolution mpc_step(const StateSpaceModel& model, const Vector& x, const Vector& r, const CostWeights& weights,
                            const BoxConstraints& constraints, Index horizon);

/// Unconstrained law u = K_r r + K_x x.
struct MpcGains {
    Matrix K_r;
    Matrix K_x;
};

MpcGains unconstrained_mpc_gains(const StateSpaceModel& model, const CostWeights& weights, Index horizon);

}  // namespace ddpc
