#pragma once

#include "ddpc/deepc.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <string>

namespace ddpc {

struct DeeneOptions {
    double tol_viol = 1e-8;
    /// Largest |delta w_ini| accepted before a refresh; nonpositive selects 10 |w_ini nominal| (or 10).
    double trust_radius = 0.0;
    int refresh_every = 25;
    /// Above this many Hankel columns the gains stay factorized instead of explicit.
    Index explicit_limit = 2000;
};

/// Sensitivity gains of one nominal DeePC solution, delta g = K1 delta w_ini + K2 delta r,
/// with w_ini = (u_ini; y_ini). Active rows are the pruned hard past rows followed by the
/// active box rows of the nominal.
struct DeeneGains {
    BlockLayout layout;
    Vector g_nominal;
    Vector w_nominal;
    Vector r_nominal;
    std::vector<Index> active_set;  // indices into box_rows()
    Vector mu_nominal;              // active box rows
    Index hard_count = 0;           // leading rows of E that are hard past rows

    bool explicit_gains = true;
    Matrix K1;       // L x q T_ini
    Matrix K2;       // L x p N
    Matrix Kmu_w;    // box rows of the multiplier sensitivity
    Matrix Kmu_r;

    // factorized form, used when K1 and K2 are not stored
    Eigen::LLT<Matrix> J_llt;
    Eigen::LLT<Matrix> S_llt;
    Matrix E;
    Matrix D;        // hard-row right-hand side per unit delta w_ini
    Matrix Y;        // J^{-1} E'
    Matrix J_gw;
    Matrix J_gr;

    double trust_radius = 10.0;

    std::size_t stored_entries() const;
};

/// Multipliers of the active box rows of a nominal solution from its stationarity condition.
/// Empty when no box row is active. Throws NumericalError when the active rows are dependent.
Vector recover_multipliers(const PredictiveSolution& nominal, const DataBlocks& blocks, const DeepcConfig& config,
                           const BoxConstraints& constraints, const Vector& u_ini, const Vector& y_ini,
                           const Vector& r);

/// Throws NumericalError when the cost Hessian in g is not positive definite or the active rows are dependent.
DeeneGains build_deene(const PredictiveSolution& nominal, const DataBlocks& blocks, const DeepcConfig& config,
                       const BoxConstraints& constraints, const Vector& u_ini, const Vector& y_ini, const Vector& r,
                       const DeeneOptions& options = {});

struct DeeneStep {
    Vector g;
    Vector u;
    Vector y;
    Vector mu;  // estimated multipliers of the active box rows
    bool refresh = false;
    std::string reason;
};

DeeneStep deene_step(const DeeneGains& gains, const DataBlocks& blocks, const BoxConstraints& constraints,
                     const Vector& u_ini, const Vector& y_ini, const Vector& r, const DeeneOptions& options = {});

/// DeeNE in closed loop: applies the gains and re-solves DeePC when a refresh is flagged,
/// on the first call and every refresh_every steps.
class DeeneController : public DataDrivenController {
public:
    DeeneController(const DataBlocks& blocks, const DeepcConfig& config, const BoxConstraints& constraints,
                    const DeeneOptions& options = {});

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    Index decision_dim() const override { return blocks_.cols(); }
    std::size_t stored_entries() const override;

    int refreshes() const { return refreshes_; }
    bool last_refreshed() const { return last_refreshed_; }
    const std::optional<DeeneGains>& gains() const { return gains_; }

private:
    PredictiveSolution refresh(const Vector& u_ini, const Vector& y_ini, const Vector& r);

    DataBlocks blocks_;
    DeepcConfig config_;
    BoxConstraints constraints_;
    DeeneOptions options_;
    DeepcController deepc_;
    std::optional<DeeneGains> gains_;
    int since_refresh_ = 0;
    int refreshes_ = 0;
    bool last_refreshed_ = false;
};

}  // namespace ddpc
