#pragma once

#include "ddpc/control.hpp"
#include "ddpc/datamat.hpp"

#include <memory>
#include <string>

namespace ddpc {

/// soft: past outputs penalized by lambda_y (past inputs too when input slack is on);
/// hard: all past rows are equality constraints.
enum class PastMode { soft, hard };

struct DeepcConfig {
    CostWeights weights;
    double lambda_g = 0.0;
    double lambda_u = 1e3;
    double lambda_y = 1e3;
    Index t_ini = 1;
    Index horizon = 1;
    PastMode past = PastMode::soft;
    bool use_input_slack = false;

    PastPenalty penalty() const;
    void validate(const BlockLayout& layout) const;
};

/// Common interface of the data-driven controllers; inputs are stacked time-major.
class DataDrivenController {
public:
    virtual ~DataDrivenController() = default;
    virtual PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) = 0;
    virtual Index decision_dim() const = 0;
    virtual std::size_t stored_entries() const = 0;
};

/// Regularized DeePC over the Hankel coefficients g.
class DeepcController : public DataDrivenController {
public:
    DeepcController(const DataBlocks& blocks, const DeepcConfig& config, const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override { return qp_->stored_entries(); }

    const TrajectoryImageQp& program() const { return *qp_; }
    const DeepcConfig& config() const { return config_; }

private:
    DeepcConfig config_;
    std::unique_ptr<TrajectoryImageQp> qp_;
};

PredictiveSolution deepc_step(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini, const Vector& r,
                              const DeepcConfig& config, const BoxConstraints& constraints);

/// u = K_r r + K_ini (u_ini; y_ini) without inequality constraints.
struct DeepcGains {
    Matrix K_r;
    Matrix K_ini;
};

DeepcGains unconstrained_deepc_gains(const DataBlocks& blocks, const DeepcConfig& config);

struct Score {
    double value = 0.0;
    bool feasible = true;
    Vector g;
};

/// Smallest slack and regularization cost of any g reproducing the candidate future (u, y).
Score scoring_O_m(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini, const Vector& u,
                  const Vector& y, const DeepcConfig& config);

/// DeePC solved over (u, y) only: control cost plus the closed-form score.
class DecomposedController : public DataDrivenController {
public:
    DecomposedController(const DataBlocks& blocks, const DeepcConfig& config, const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return layout_.future_rows(); }
    std::size_t stored_entries() const override;

    /// Score term of the value function at v = (u; y).
    double score(const Vector& u_ini, const Vector& y_ini, const Vector& v) const;

private:
    struct Affine {
        Vector linear;     // coefficient of v in the score gradient / 2
        double constant;   // score at v = 0
    };
    Affine score_terms(const Vector& u_ini, const Vector& y_ini) const;
    double score_at(const Vector& g, const Vector& t_soft) const;
    Vector coefficients(const Vector& u_ini, const Vector& y_ini, const Vector& v) const;

    BlockLayout layout_;
    DeepcConfig config_;
    std::vector<Index> hard_rows_;  // stacked past rows held as equalities
    std::vector<Index> soft_rows_;
    Vector soft_weight_;
    Matrix G_v_;       // g = G_v v + G_h t_hard + G_s t_soft
    Matrix G_h_;
    Matrix G_s_;
    Matrix J_;         // cost Hessian / 2 of the score in g
    Matrix H_soft_;    // soft past rows of H
    Matrix S_vv_;      // G_v' J G_v
    Matrix feas_v_;    // feasibility rows on v and on t_hard
    Matrix feas_h_;
    Matrix T_v_;       // v = T_v z; the QP runs in z when this is set
    Matrix Q_A_;       // orthonormal factor of the whitened least-squares form
    Matrix Lq_t_;      // Q = Lq_t' Lq_t
    std::vector<BoxRow> rows_;
    std::unique_ptr<DenseQpSolver> solver_;
};

PredictiveSolution decomposed_step(const DataBlocks& blocks, const Vector& u_ini, const Vector& y_ini,
                                   const Vector& r, const DeepcConfig& config, const BoxConstraints& constraints);

}  // namespace ddpc
