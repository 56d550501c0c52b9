#include "ddpc/deene.hpp"

#include "ddpc/error.hpp"

#include <chrono>
#include <cmath>

namespace ddpc {

namespace {

// Derivatives of the DeePC cost in g and the active rows at a nominal solution.
struct Sensitivity {
    Matrix J_gg;  // Hessian
    Matrix J_gw;
    Matrix J_gr;
    Matrix E;     // hard rows first, then sign-scaled active box rows
    Matrix D;     // E delta g = D delta w_ini
    Index hard_count = 0;
};

Sensitivity sensitivity(const DataBlocks& blocks, const DeepcConfig& config, const BoxConstraints& constraints,
                        const std::vector<Index>& active)
{
    const BlockLayout& lay = blocks.layout;
    config.validate(lay);
    const PastPenalty pen = config.penalty();
    const Index L = blocks.cols();
    const Index mt = lay.m * lay.t_ini;
    const Index pt = lay.p * lay.t_ini;
    const Matrix& H = blocks.H;
    const auto U_P = blocks.U_P();
    const auto Y_P = blocks.Y_P();
    const auto U_F = blocks.U_F();
    const auto Y_F = blocks.Y_F();

    Sensitivity s;
    s.J_gg = Y_F.transpose() * config.weights.Q * Y_F + U_F.transpose() * config.weights.R * U_F;
    s.J_gg.diagonal().array() += config.lambda_g;
    s.J_gw = Matrix::Zero(L, mt + pt);
    if (!pen.u_hard) {
        s.J_gg.noalias() += pen.lambda_u * U_P.transpose() * U_P;
        s.J_gw.leftCols(mt) = -2.0 * pen.lambda_u * U_P.transpose();
    }
    if (!pen.y_hard) {
        s.J_gg.noalias() += pen.lambda_y * Y_P.transpose() * Y_P;
        s.J_gw.rightCols(pt) = -2.0 * pen.lambda_y * Y_P.transpose();
    }
    s.J_gg *= 2.0;
    s.J_gg = 0.5 * (s.J_gg + s.J_gg.transpose());
    s.J_gr = -2.0 * Y_F.transpose() * config.weights.Q;

    std::vector<Index> hard;
    if (pen.u_hard) {
        for (Index i = 0; i < mt; ++i) {
            hard.push_back(lay.u_past() + i);
        }
    }
    if (pen.y_hard) {
        for (Index i = 0; i < pt; ++i) {
            hard.push_back(lay.y_past() + i);
        }
    }
    Matrix Eh(static_cast<Index>(hard.size()), L);
    for (std::size_t i = 0; i < hard.size(); ++i) {
        Eh.row(static_cast<Index>(i)) = H.row(hard[i]);
    }
    const auto kept = independent_rows(Eh);
    const auto rows = box_rows(lay, constraints);
    s.hard_count = static_cast<Index>(kept.size());
    const Index e = s.hard_count + static_cast<Index>(active.size());
    s.E.resize(e, L);
    s.D = Matrix::Zero(e, mt + pt);
    for (Index i = 0; i < s.hard_count; ++i) {
        const Index row = hard[static_cast<std::size_t>(kept[static_cast<std::size_t>(i)])];
        s.E.row(i) = H.row(row);
        s.D(i, row) = 1.0;  // past stacked rows coincide with the entries of w_ini
    }
    for (std::size_t k = 0; k < active.size(); ++k) {
        require(active[k] >= 0 && active[k] < static_cast<Index>(rows.size()), "DeeNE: active index out of range");
        const BoxRow& br = rows[static_cast<std::size_t>(active[k])];
        s.E.row(s.hard_count + static_cast<Index>(k)) = br.sign * H.row(br.row);
    }
    if (e > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(s.E.transpose());
        qr.setThreshold(kDefaultRankTol);
        if (qr.rank() < e) {
            throw NumericalError("DeeNE: active constraint rows are linearly dependent");
        }
    }
    return s;
}

Vector stack_w(const Vector& u_ini, const Vector& y_ini)
{
    Vector w(u_ini.size() + y_ini.size());
    w << u_ini, y_ini;
    return w;
}

}  // namespace

std::size_t DeeneGains::stored_entries() const
{
    std::size_t total = entries(g_nominal) + entries(Kmu_w) + entries(Kmu_r);
    if (explicit_gains) {
        return total + entries(K1) + entries(K2);
    }
    total += entries(J_llt.matrixLLT()) + entries(E) + entries(D) + entries(Y) + entries(J_gw) + entries(J_gr);
    return E.rows() > 0 ? total + entries(S_llt.matrixLLT()) : total;
}

Vector recover_multipliers(const PredictiveSolution& nominal, const DataBlocks& blocks, const DeepcConfig& config,
                           const BoxConstraints& constraints, const Vector& u_ini, const Vector& y_ini,
                           const Vector& r)
{
    require(nominal.decision.size() == blocks.cols(), "recover_multipliers: nominal is not a DeePC solution");
    if (nominal.active_set.empty()) {
        return Vector();
    }
    const Sensitivity s = sensitivity(blocks, config, constraints, nominal.active_set);
    const Vector grad = s.J_gg * nominal.decision + s.J_gw * stack_w(u_ini, y_ini) + s.J_gr * r;
    const Matrix EEt = s.E * s.E.transpose();
    const Vector mu = -EEt.llt().solve(s.E * grad);
    return mu.tail(static_cast<Index>(nominal.active_set.size()));
}

DeeneGains build_deene(const PredictiveSolution& nominal, const DataBlocks& blocks, const DeepcConfig& config,
                       const BoxConstraints& constraints, const Vector& u_ini, const Vector& y_ini, const Vector& r,
                       const DeeneOptions& options)
{
    const BlockLayout& lay = blocks.layout;
    require(nominal.decision.size() == blocks.cols(), "build_deene: nominal is not a DeePC solution");
    Sensitivity s = sensitivity(blocks, config, constraints, nominal.active_set);
    const Index L = blocks.cols();

    DeeneGains gains;
    gains.layout = lay;
    gains.g_nominal = nominal.decision;
    gains.w_nominal = stack_w(u_ini, y_ini);
    gains.r_nominal = r;
    gains.active_set = nominal.active_set;
    gains.hard_count = s.hard_count;
    const double wn = gains.w_nominal.norm();
    gains.trust_radius = options.trust_radius > 0.0 ? options.trust_radius : (wn > 0.0 ? 10.0 * wn : 10.0);

    gains.J_llt.compute(s.J_gg);
    bool definite = gains.J_llt.info() == Eigen::Success;
    if (definite && L > 0) {
        const Vector diag = gains.J_llt.matrixLLT().diagonal();
        definite = diag.minCoeff() > 1e-6 * diag.maxCoeff();
    }
    if (!definite) {
        throw NumericalError("DeeNE: cost Hessian in g is not positive definite (convexity fails; raise lambda_g)");
    }

    const Index e = s.E.rows();
    const Matrix X_w = gains.J_llt.solve(-s.J_gw);
    const Matrix X_r = gains.J_llt.solve(-s.J_gr);
    Matrix Kmu_w = Matrix::Zero(e, X_w.cols());
    Matrix Kmu_r = Matrix::Zero(e, X_r.cols());
    Matrix Y(L, e);
    if (e > 0) {
        Y = gains.J_llt.solve(s.E.transpose());
        Matrix S = s.E * Y;
        S = 0.5 * (S + S.transpose());
        gains.S_llt.compute(S);
        if (gains.S_llt.info() != Eigen::Success) {
            throw NumericalError("DeeNE: sensitivity system is singular");
        }
        Kmu_w = gains.S_llt.solve(s.E * X_w - s.D);
        Kmu_r = gains.S_llt.solve(s.E * X_r);
    }

    Vector mu = recover_multipliers(nominal, blocks, config, constraints, u_ini, y_ini, r);
    gains.mu_nominal = mu;
    gains.Kmu_w = Kmu_w.bottomRows(e - s.hard_count);
    gains.Kmu_r = Kmu_r.bottomRows(e - s.hard_count);

    gains.explicit_gains = L <= options.explicit_limit;
    if (gains.explicit_gains) {
        gains.K1 = X_w - Y * Kmu_w;
        gains.K2 = X_r - Y * Kmu_r;
        gains.J_llt = Eigen::LLT<Matrix>();
        gains.S_llt = Eigen::LLT<Matrix>();
    } else {
        gains.E = std::move(s.E);
        gains.D = std::move(s.D);
        gains.Y = std::move(Y);
        gains.J_gw = std::move(s.J_gw);
        gains.J_gr = std::move(s.J_gr);
    }
    return gains;
}

DeeneStep deene_step(const DeeneGains& gains, const DataBlocks& blocks, const BoxConstraints& constraints,
                     const Vector& u_ini, const Vector& y_ini, const Vector& r, const DeeneOptions& options)
{
    const BlockLayout& lay = gains.layout;
    require(u_ini.size() == lay.m * lay.t_ini && y_ini.size() == lay.p * lay.t_ini,
            "deene_step: initial trajectory has wrong length");
    require(r.size() == lay.p * lay.horizon, "deene_step: reference has wrong length");
    const Vector dw = stack_w(u_ini, y_ini) - gains.w_nominal;
    const Vector dr = r - gains.r_nominal;

    DeeneStep out;
    Vector dg;
    if (gains.explicit_gains) {
        dg = gains.K1 * dw + gains.K2 * dr;
    } else {
        const Vector x = gains.J_llt.solve(-(gains.J_gw * dw + gains.J_gr * dr));
        if (gains.E.rows() > 0) {
            const Vector dmu = gains.S_llt.solve(gains.E * x - gains.D * dw);
            dg = x - gains.Y * dmu;
        } else {
            dg = x;
        }
    }
    out.g = gains.g_nominal + dg;
    out.u = blocks.U_F() * out.g;
    out.y = blocks.Y_F() * out.g;
    out.mu = gains.mu_nominal;
    if (gains.Kmu_w.rows() > 0) {
        out.mu += gains.Kmu_w * dw + gains.Kmu_r * dr;
    }

    if (dw.norm() > gains.trust_radius) {
        out.refresh = true;
        out.reason = "initial trajectory left the trust region";
    }
    for (Index i = 0; i < out.mu.size(); ++i) {
        if (out.mu(i) < -options.tol_viol) {
            out.refresh = true;
            out.reason = "active multiplier turned negative";
        }
    }
    const auto rows = box_rows(lay, constraints);
    std::vector<bool> active(rows.size(), false);
    for (Index a : gains.active_set) {
        active[static_cast<std::size_t>(a)] = true;
    }
    const Index uf = lay.u_future();
    const Index yf = lay.y_future();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (active[i]) {
            continue;
        }
        const BoxRow& br = rows[i];
        const double v = br.row < yf ? out.u(br.row - uf) : out.y(br.row - yf);
        if (br.sign * (v - br.bound) > options.tol_viol) {
            out.refresh = true;
            out.reason = "inactive constraint violated";
        }
    }
    return out;
}

DeeneController::DeeneController(const DataBlocks& blocks, const DeepcConfig& config,
                                 const BoxConstraints& constraints, const DeeneOptions& options)
    : blocks_(blocks), config_(config), constraints_(constraints), options_(options),
      deepc_(blocks, config, constraints)
{
}

PredictiveSolution DeeneController::refresh(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    PredictiveSolution sol = deepc_.solve(u_ini, y_ini, r);
    gains_ = build_deene(sol, blocks_, config_, constraints_, u_ini, y_ini, r, options_);
    since_refresh_ = 0;
    ++refreshes_;
    last_refreshed_ = true;
    return sol;
}

PredictiveSolution DeeneController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&](PredictiveSolution sol) {
        sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return sol;
    };
    // a refresh opens each window of refresh_every steps
    if (!gains_ || since_refresh_ + 1 >= options_.refresh_every) {
        return finish(refresh(u_ini, y_ini, r));
    }
    DeeneStep st = deene_step(*gains_, blocks_, constraints_, u_ini, y_ini, r, options_);
    if (st.refresh) {
        return finish(refresh(u_ini, y_ini, r));
    }
    ++since_refresh_;
    last_refreshed_ = false;
    PredictiveSolution sol;
    sol.decision = std::move(st.g);
    sol.u = std::move(st.u);
    sol.y = std::move(st.y);
    sol.active_set = gains_->active_set;
    sol.mu = std::move(st.mu);
    const PastPenalty pen = config_.penalty();
    sol.sigma_u = pen.u_hard ? Vector::Zero(u_ini.size()) : Vector(blocks_.U_P() * sol.decision - u_ini);
    sol.sigma_y = blocks_.Y_P() * sol.decision - y_ini;
    const Vector ey = sol.y - r;
    sol.objective = ey.dot(config_.weights.Q * ey) + sol.u.dot(config_.weights.R * sol.u) +
                    config_.lambda_g * sol.decision.squaredNorm();
    if (!pen.u_hard) {
        sol.objective += pen.lambda_u * sol.sigma_u.squaredNorm();
    }
    if (!pen.y_hard) {
        sol.objective += pen.lambda_y * sol.sigma_y.squaredNorm();
    }
    return finish(std::move(sol));
}

std::size_t DeeneController::stored_entries() const
{
    return deepc_.stored_entries() + (gains_ ? gains_->stored_entries() : 0);
}

}  // namespace ddpc
