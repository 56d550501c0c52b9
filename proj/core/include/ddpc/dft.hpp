#pragma once

#include "ddpc/deepc.hpp"

#include <complex>
#include <memory>

namespace ddpc {

/// Circulant embedding of the depth-K Hankel matrix of a single q x T record.
/// Products with H and H' cost O(q T log T) and never form H. Rows are sample-major
/// interleaved, as produced by build_hankel.
class DftFactorization {
public:
    /// transform_length 0 uses T; any length >= T gives the same operator.
    DftFactorization(const Matrix& w, Index K, Index transform_length = 0);
    ~DftFactorization();
    DftFactorization(DftFactorization&&) noexcept;
    DftFactorization& operator=(DftFactorization&&) noexcept;

    Index q() const { return q_; }
    Index depth() const { return K_; }
    Index samples() const { return T_; }
    Index cols() const { return T_ - K_ + 1; }
    Index rows() const { return q_ * K_; }
    Index transform_length() const { return n_; }

    Vector matvec(const Vector& g) const;
    Vector rmatvec(const Vector& v) const;

    /// Half spectrum of the rotated record, one column per frequency 0..n/2.
    const Eigen::MatrixXcd& spectral_blocks() const { return spectrum_; }
    /// Inverse transform of the spectral blocks: the rotated (and zero-spread) record, q x n.
    Matrix rotated_record() const;

    std::size_t stored_entries() const { return 2 * static_cast<std::size_t>(spectrum_.size()); }

private:
    struct Plans;

    Index q_ = 0;
    Index K_ = 0;
    Index T_ = 0;
    Index n_ = 0;
    Eigen::MatrixXcd spectrum_;
    std::unique_ptr<Plans> plans_;
};

struct MatfreeOptions {
    double tol = 1e-9;
    int max_iter = 5000;
};

struct MatfreeResult {
    PredictiveSolution solution;
    int iterations = 0;
    double gradient_norm = 0.0;
};

/// Unconstrained regularized DeePC by conjugate gradients on H' W H + lambda_g I.
/// Needs every past row soft (input slack on) and lambda_g > 0.
MatfreeResult matfree_deepc_unconstrained(const DftFactorization& fact, const BlockLayout& layout,
                                          const Vector& u_ini, const Vector& y_ini, const Vector& r,
                                          const DeepcConfig& config, const MatfreeOptions& options = {});

class DftDeepcController : public DataDrivenController {
public:
    DftDeepcController(const Matrix& w, const BlockLayout& layout, const DeepcConfig& config,
                       const BoxConstraints& constraints, const MatfreeOptions& options = {});

    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override;
    Index decision_dim() const override { return fact_.cols(); }
    std::size_t stored_entries() const override { return fact_.stored_entries(); }
    int last_iterations() const { return last_iterations_; }

private:
    DftFactorization fact_;
    BlockLayout layout_;
    DeepcConfig config_;
    MatfreeOptions options_;
    int last_iterations_ = 0;
};

}  // namespace ddpc
