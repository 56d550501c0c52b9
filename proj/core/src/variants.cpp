#include "ddpc/variants.hpp"

#include "ddpc/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <string>

namespace ddpc {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vector past_vector(const BlockLayout& layout, const Vector& u_ini, const Vector& y_ini)
{
    require(u_ini.size() == layout.m * layout.t_ini && y_ini.size() == layout.p * layout.t_ini,
            "initial trajectory has wrong length");
    Vector w(layout.past_rows());
    w << u_ini, y_ini;
    return w;
}

Index rank_of(const Vector& s, double tol)
{
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol * s(0)) {
            ++r;
        }
    }
    return s.size() > 0 && s(0) > 0.0 ? r : 0;
}

template <class Ctrl>
PredictiveSolution timed(const Ctrl& ctrl, const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    const auto start = std::chrono::steady_clock::now();
    PredictiveSolution sol = ctrl.solve(u_ini, y_ini, r);
    sol.solve_seconds = seconds_since(start);
    return sol;
}

}  // namespace

double condition_number(const Matrix& A, double tol)
{
    Eigen::BDCSVD<Matrix> svd(A);
    const Vector& s = svd.singularValues();
    const Index r = rank_of(s, tol);
    if (r == 0) {
        return kInf;
    }
    return s(0) / s(r - 1);
}

Vector SpcPredictor::predict(const Vector& u_ini, const Vector& y_ini, const Vector& u) const
{
    return S_ini * past_vector(layout, u_ini, y_ini) + S_u * u;
}

SpcPredictor fit_spc(const DataBlocks& blocks, double tol)
{
    const BlockLayout& lay = blocks.layout;
    const Index qt = lay.past_rows();
    const Index mn = lay.m * lay.horizon;
    const Matrix X = blocks.H.topRows(qt + mn);
    if (X.cwiseAbs().maxCoeff() == 0.0) {
        throw InsufficientData("fit_spc: data matrix is identically zero");
    }
    Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const Index r = rank_of(s, tol);
    const Matrix pinv = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal() *
                        svd.matrixU().leftCols(r).transpose();
    SpcPredictor pred;
    pred.layout = lay;
    pred.H_ini = pinv.leftCols(qt);
    pred.H_u = pinv.rightCols(mn);
    const Matrix YF = blocks.Y_F();
    pred.S_ini = YF * pred.H_ini;
    pred.S_u = YF * pred.H_u;
    return pred;
}

SpcController::SpcController(const SpcPredictor& predictor, const DeepcConfig& config,
                             const BoxConstraints& constraints)
    : layout_(predictor.layout), S_ini_(predictor.S_ini), S_u_(predictor.S_u)
{
    config.validate(layout_);
    const PastPenalty pen = config.penalty();
    const Index mt = layout_.m * layout_.t_ini;
    const Index qt = layout_.past_rows();
    const Index mn = layout_.m * layout_.horizon;
    const Index pn = layout_.p * layout_.horizon;
    std::vector<double> lambda;
    for (Index j = 0; j < qt; ++j) {
        const bool is_u = j < mt;
        if ((is_u && !pen.u_hard) || (!is_u && !pen.y_hard)) {
            slack_cols_.push_back(j);
            lambda.push_back(is_u ? pen.lambda_u : pen.lambda_y);
        }
    }
    const Index ns = static_cast<Index>(slack_cols_.size());
    Matrix S_sigma(pn, ns);
    for (Index j = 0; j < ns; ++j) {
        S_sigma.col(j) = S_ini_.col(slack_cols_[static_cast<std::size_t>(j)]);
    }
    const Matrix& Q = config.weights.Q;
    if (ns > 0) {
        Matrix normal = S_sigma.transpose() * Q * S_sigma;
        for (Index j = 0; j < ns; ++j) {
            normal(j, j) += lambda[static_cast<std::size_t>(j)];
        }
        A_sigma_ = -normal.completeOrthogonalDecomposition().solve(S_sigma.transpose() * Q);
    } else {
        A_sigma_.resize(0, pn);
    }
    const Matrix Ibig = Matrix::Identity(pn, pn) + S_sigma * A_sigma_;
    Matrix M = Matrix::Zero(layout_.rows(), mn);
    const Matrix AS = A_sigma_ * S_u_;
    for (Index j = 0; j < ns; ++j) {
        M.row(slack_cols_[static_cast<std::size_t>(j)]) = AS.row(j);
    }
    M.middleRows(layout_.u_future(), mn).setIdentity();
    M.middleRows(layout_.y_future(), pn) = Ibig * S_u_;
    qp_ = std::make_unique<TrajectoryImageQp>(layout_, std::move(M), Matrix(), config.weights, pen, constraints);
}

Vector SpcController::offset(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    const Vector w = past_vector(layout_, u_ini, y_ini);
    const Vector free = S_ini_ * w;
    const Index pn = layout_.p * layout_.horizon;
    Vector v0 = Vector::Zero(layout_.rows());
    v0.head(w.size()) = w;
    if (!slack_cols_.empty()) {
        const Vector sigma = A_sigma_ * (free - r);
        Vector shifted = free;
        for (std::size_t j = 0; j < slack_cols_.size(); ++j) {
            v0(slack_cols_[j]) += sigma(static_cast<Index>(j));
            shifted += S_ini_.col(slack_cols_[j]) * sigma(static_cast<Index>(j));
        }
        v0.segment(layout_.y_future(), pn) = shifted;
    } else {
        v0.segment(layout_.y_future(), pn) = free;
    }
    return v0;
}

PredictiveSolution SpcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    return qp_->solve(offset(u_ini, y_ini, r), u_ini, y_ini, r);
}

PredictiveSolution SpcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return timed(*this, u_ini, y_ini, r);
}

std::size_t SpcController::stored_entries() const
{
    return entries(S_ini_) + entries(S_u_) + entries(A_sigma_) + qp_->stored_entries();
}

NpcParam build_npc(const DataBlocks& blocks, double tol)
{
    const Matrix HP = blocks.past();
    const Index L = blocks.cols();
    NpcParam param;
    if (HP.rows() == 0 || HP.cwiseAbs().maxCoeff() == 0.0) {
        param.pinv_HP = Matrix::Zero(L, HP.rows());
        param.Phi = Matrix::Identity(L, L);
        return param;
    }
    Eigen::BDCSVD<Matrix> svd(HP, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const Index r = rank_of(s, tol);
    param.r_p = r;
    param.pinv_HP = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal() *
                    svd.matrixU().leftCols(r).transpose();
    param.Phi = svd.matrixV().rightCols(L - r);
    return param;
}

NpcController::NpcController(const NpcParam& param, const DataBlocks& blocks, const DeepcConfig& config,
                             const BoxConstraints& constraints)
    : layout_(blocks.layout), config_(config), pinv_HP_(param.pinv_HP)
{
    config_.validate(layout_);
    const Index nz = param.Phi.cols();
    const Matrix HPhi = blocks.H * param.Phi;
    if (config_.past == PastMode::hard) {
        HPinv_ = blocks.H * param.pinv_HP;
        qp_ = std::make_unique<TrajectoryImageQp>(layout_, HPhi, config_.lambda_g * Matrix::Identity(nz, nz),
                                                  config_.weights, config_.penalty(), constraints);
    } else {
        const Index qt = layout_.past_rows();
        Matrix M(layout_.rows(), qt + nz);
        M.leftCols(qt) = blocks.H * param.pinv_HP;
        M.rightCols(nz) = HPhi;
        Matrix W = Matrix::Zero(qt + nz, qt + nz);
        W.topLeftCorner(qt, qt) = config_.lambda_g * param.pinv_HP.transpose() * param.pinv_HP;
        W.bottomRightCorner(nz, nz) = config_.lambda_g * Matrix::Identity(nz, nz);
        pinv_HP_.resize(0, 0);
        qp_ = std::make_unique<TrajectoryImageQp>(layout_, std::move(M), W, config_.weights, config_.penalty(),
                                                  constraints);
    }
}

PredictiveSolution NpcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    if (config_.past == PastMode::hard) {
        const Vector w = past_vector(layout_, u_ini, y_ini);
        const double offset = config_.lambda_g * (pinv_HP_ * w).squaredNorm();
        return qp_->solve(HPinv_ * w, u_ini, y_ini, r, offset);
    }
    return qp_->solve(Vector::Zero(layout_.rows()), u_ini, y_ini, r);
}

PredictiveSolution NpcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return timed(*this, u_ini, y_ini, r);
}

std::size_t NpcController::stored_entries() const
{
    return entries(HPinv_) + entries(pinv_HP_) + qp_->stored_entries();
}

RoDeepcController::RoDeepcController(const SvdReduction& reduction, const DeepcConfig& config,
                                     const BoxConstraints& constraints)
{
    config.validate(reduction.layout);
    const Index r = reduction.H_reduced.cols();
    qp_ = std::make_unique<TrajectoryImageQp>(reduction.layout, reduction.H_reduced,
                                              config.lambda_g * Matrix::Identity(r, r), config.weights,
                                              config.penalty(), constraints);
}

PredictiveSolution RoDeepcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    return qp_->solve(Vector::Zero(qp_->layout().rows()), u_ini, y_ini, r);
}

PredictiveSolution RoDeepcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return timed(*this, u_ini, y_ini, r);
}

KernelRep build_kernel_rep(const std::vector<Trajectory>& data, Index M, Index Z, Index n, double condition_limit,
                           double tol)
{
    require(!data.empty(), "build_kernel_rep: no data");
    require(M >= 1 && Z >= M && n >= 1, "build_kernel_rep: need 1 <= M <= Z and n >= 1");
    KernelRep rep;
    rep.M = M;
    rep.Z = Z;
    rep.n = n;
    rep.m = data.front().m();
    rep.p = data.front().p();
    const Index q = rep.m + rep.p;
    std::vector<Matrix> eps;
    for (const auto& traj : data) {
        eps.push_back(interleave(traj));
    }
    const Matrix HM = build_mosaic(eps, M);
    const Index behavior_rank = rep.m * M + n;
    const Index kernel_rows = rep.p * M - n;
    if (kernel_rows < 1) {
        throw ConfigError("build_kernel_rep: depth M must satisfy p M > n");
    }
    Eigen::BDCSVD<Matrix> svd(HM, Eigen::ComputeFullU);
    const Index rank = rank_of(svd.singularValues(), tol);
    if (rank != behavior_rank) {
        throw InsufficientData("build_kernel_rep: depth-" + std::to_string(M) + " Hankel has rank " +
                               std::to_string(rank) + ", expected " + std::to_string(behavior_rank));
    }
    rep.R_M = svd.matrixU().rightCols(q * M - rank).transpose();

    const Index shifts = Z - M + 1;
    Matrix S = Matrix::Zero(shifts * kernel_rows, q * Z);
    for (Index s = 0; s < shifts; ++s) {
        S.block(s * kernel_rows, s * q, kernel_rows, q * M) = rep.R_M;
    }
    const Index gamma_rows = rep.p * Z - n;
    Eigen::BDCSVD<Matrix> ssvd(S, Eigen::ComputeFullV);
    const Vector& sv = ssvd.singularValues();
    const Index srank = rank_of(sv, tol);
    if (srank != gamma_rows) {
        throw NumericalError("build_kernel_rep: shifted kernel rows have rank " + std::to_string(srank) +
                             ", expected " + std::to_string(gamma_rows));
    }
    rep.gamma_condition = sv(0) / sv(gamma_rows - 1);
    if (rep.gamma_condition > condition_limit) {
        throw NumericalError("build_kernel_rep: kernel matrix condition number " + std::to_string(rep.gamma_condition) +
                             " exceeds the limit");
    }
    rep.Gamma = S.rows() == gamma_rows ? S : Matrix(ssvd.matrixV().leftCols(gamma_rows).transpose());
    rep.P = ssvd.matrixV().rightCols(q * Z - gamma_rows);
    return rep;
}

EddpcController::EddpcController(const KernelRep& rep, const BlockLayout& layout, const DeepcConfig& config,
                                 const BoxConstraints& constraints)
{
    require(layout.depth() == rep.Z && layout.m == rep.m && layout.p == rep.p,
            "EddpcController: kernel representation does not match the layout");
    config.validate(layout);
    const Index d = rep.P.cols();
    qp_ = std::make_unique<TrajectoryImageQp>(layout, to_stacked(rep.P, layout),
                                              config.lambda_g * Matrix::Identity(d, d), config.weights,
                                              config.penalty(), constraints);
}

PredictiveSolution EddpcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    return qp_->solve(Vector::Zero(qp_->layout().rows()), u_ini, y_ini, r);
}

PredictiveSolution EddpcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return timed(*this, u_ini, y_ini, r);
}

RangeSpaceData build_range_space(const DataBlocks& blocks, const Matrix& Psi)
{
    RangeSpaceData data;
    data.layout = blocks.layout;
    const Index L = blocks.cols();
    auto set_root = [&](const Matrix& X) {
        // X is L x qK with G = X' X; keep the small triangular factor
        Eigen::HouseholderQR<Matrix> qr(X);
        const Index k = std::min(X.rows(), X.cols());
        data.root = Matrix::Zero(X.cols(), X.cols());
        data.root.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    };
    if (Psi.size() == 0) {
        data.G = blocks.H * blocks.H.transpose();
        set_root(blocks.H.transpose());
        return data;
    }
    require(Psi.rows() == L && Psi.cols() == L, "build_range_space: Psi must be L x L");
    Eigen::LLT<Matrix> llt(Psi);
    if (llt.info() != Eigen::Success || (Psi - Psi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * Psi.norm()) {
        throw ConfigError("build_range_space: Psi must be symmetric positive definite");
    }
    const Matrix X = llt.matrixL().solve(blocks.H.transpose());
    data.G = X.transpose() * X;
    data.G = 0.5 * (data.G + data.G.transpose());
    data.Psi = Psi;
    set_root(X);
    return data;
}

RsDeepcController::RsDeepcController(const RangeSpaceData& data, const DeepcConfig& config,
                                     const BoxConstraints& constraints)
{
    config.validate(data.layout);
    const Index d = data.G.rows();
    require(data.G.cols() == d && d == data.layout.rows(), "RsDeepcController: G does not match the layout");
    // G = V diag(s^2) V'; with alpha = V diag(1/s) beta on the range of G, G alpha = V diag(s) beta
    Matrix V;
    Vector s;
    if (data.root.size() > 0) {
        Eigen::JacobiSVD<Matrix> svd(data.root, Eigen::ComputeFullV);
        V = svd.matrixV();
        s = svd.singularValues();
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(data.G);
        V = es.eigenvectors().rowwise().reverse();
        s = es.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
    }
    const Index r = rank_of(s, kDefaultRankTol);
    Vector scale = Vector::Ones(d);
    Vector image = Vector::Zero(d);
    for (Index i = 0; i < r; ++i) {
        scale(i) = 1.0 / s(i);
        image(i) = s(i);
    }
    T_ = V * scale.asDiagonal();
    const Matrix M = V * image.asDiagonal();
    Vector reg = Vector::Zero(d);
    reg.head(r).setConstant(config.lambda_g);
    qp_ = std::make_unique<TrajectoryImageQp>(data.layout, M, Matrix(reg.asDiagonal()), config.weights,
                                              config.penalty(), constraints);
}

PredictiveSolution RsDeepcController::solve(const Vector& u_ini, const Vector& y_ini, const Vector& r) const
{
    PredictiveSolution sol = qp_->solve(Vector::Zero(qp_->layout().rows()), u_ini, y_ini, r);
    sol.decision = T_ * sol.decision;
    return sol;
}

PredictiveSolution RsDeepcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    return timed(*this, u_ini, y_ini, r);
}

}  // namespace ddpc
