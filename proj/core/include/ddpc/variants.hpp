#pragma once

#include "ddpc/deepc.hpp"

#include <memory>

namespace ddpc {

/// Least-squares predictor y = S_ini (u_ini; y_ini) + S_u u.
struct SpcPredictor {
    BlockLayout layout;
    Matrix S_ini;  // pN x qT_ini
    Matrix S_u;    // pN x mN
    Matrix H_ini;  // L x qT_ini
    Matrix H_u;    // L x mN

    Vector predict(const Vector& u_ini, const Vector& y_ini, const Vector& u) const;
};

SpcPredictor fit_spc(const DataBlocks& blocks, double tol = kDefaultRankTol);

/// Predictive control over the future inputs only. In the soft regime the slacks are
/// eliminated by partial minimization of the unconstrained cost.
class SpcController : public DataDrivenController {
public:
    SpcController(const SpcPredictor& predictor, const DeepcConfig& config, const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override;

private:
    Vector offset(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;

    BlockLayout layout_;
    Matrix S_ini_;
    Matrix S_u_;
    std::vector<Index> slack_cols_;  // past entries carrying a slack, as columns of S_ini
    Matrix A_sigma_;                 // sigma* = A_sigma (prediction - r)
    std::unique_ptr<TrajectoryImageQp> qp_;
};

/// g = pinv(H_P) s + Phi z with H_P Phi = 0.
struct NpcParam {
    Matrix pinv_HP;  // L x qT_ini
    Matrix Phi;      // L x (L - r_p), orthonormal columns
    Index r_p = 0;
};

NpcParam build_npc(const DataBlocks& blocks, double tol = kDefaultRankTol);

class NpcController : public DataDrivenController {
public:
    NpcController(const NpcParam& param, const DataBlocks& blocks, const DeepcConfig& config,
                  const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override;

private:
    BlockLayout layout_;
    DeepcConfig config_;
    Matrix HPinv_;  // H pinv(H_P), used for the offset in the hard regime
    Matrix pinv_HP_;
    std::unique_ptr<TrajectoryImageQp> qp_;
};

/// DeePC over the reduced coefficients g'' of the truncated SVD.
class RoDeepcController : public DataDrivenController {
public:
    RoDeepcController(const SvdReduction& reduction, const DeepcConfig& config, const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override { return qp_->stored_entries(); }

private:
    std::unique_ptr<TrajectoryImageQp> qp_;
};

/// Kernel representation of the depth-Z behavior built from a depth-M Hankel matrix.
struct KernelRep {
    Index M = 0;
    Index Z = 0;
    Index n = 0;
    Index m = 0;
    Index p = 0;
    Matrix R_M;      // (pM - n) x qM, interleaved columns
    Matrix Gamma;    // (pZ - n) x qZ, interleaved columns
    Matrix P;        // qZ x (mZ + n), interleaved rows, orthonormal columns
    double gamma_condition = 0.0;
};

/// Throws InsufficientData when the depth-M Hankel is not of rank mM + n and
/// NumericalError when the stacked shifts are ill-conditioned.
KernelRep build_kernel_rep(const std::vector<Trajectory>& data, Index M, Index Z, Index n,
                           double condition_limit = 1e10, double tol = kDefaultRankTol);

class EddpcController : public DataDrivenController {
public:
    EddpcController(const KernelRep& rep, const BlockLayout& layout, const DeepcConfig& config,
                    const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override { return qp_->stored_entries(); }

private:
    std::unique_ptr<TrajectoryImageQp> qp_;
};

struct RangeSpaceData {
    BlockLayout layout;
    Matrix G;     // H Psi^{-1} H', stacked layout
    Matrix Psi;
    Matrix root;  // qK x qK with G = root' root; empty when only G is known
};

RangeSpaceData build_range_space(const DataBlocks& blocks, const Matrix& Psi = Matrix());

/// DeePC with g = Psi^{-1} H' alpha; the regularizer lambda_g |g|^2_Psi becomes lambda_g alpha' G alpha.
/// The QP runs in balanced coordinates alpha = T beta (T invertible) so that it sees the conditioning
/// of H rather than that of G; reported decisions are alpha.
class RsDeepcController : public DataDrivenController {
public:
    RsDeepcController(const RangeSpaceData& data, const DeepcConfig& config, const BoxConstraints& constraints);

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    PredictiveSolution solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const;
    Index decision_dim() const override { return qp_->decision_dim(); }
    std::size_t stored_entries() const override { return qp_->stored_entries() + entries(T_); }

private:
    Matrix T_;
    std::unique_ptr<TrajectoryImageQp> qp_;
};

/// Ratio of extreme nonzero singular values.
double condition_number(const Matrix& A, double tol = kDefaultRankTol);

}  // namespace ddpc
