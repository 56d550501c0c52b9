#include "ddpc/dft.hpp"

#include "ddpc/error.hpp"

#include <fftw3.h>

#include <chrono>
#include <mutex>
#include <vector>

namespace ddpc {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex mu;
    return mu;
}

using Complex = std::complex<double>;

fftw_complex* as_fftw(Complex* p)
{
    return reinterpret_cast<fftw_complex*>(p);
}

}  // namespace

struct DftFactorization::Plans {
    explicit Plans(Index n)
    {
        std::vector<double> real(static_cast<std::size_t>(n));
        std::vector<Complex> spec(static_cast<std::size_t>(n / 2 + 1));
        std::lock_guard<std::mutex> lock(planner_mutex());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(), as_fftw(spec.data()), flags);
        backward = fftw_plan_dft_c2r_1d(static_cast<int>(n), as_fftw(spec.data()), real.data(), flags);
        if (forward == nullptr || backward == nullptr) {
            throw NumericalError("DftFactorization: FFT planning failed");
        }
    }

    ~Plans()
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }

    void r2c(std::vector<double>& in, std::vector<Complex>& out) const
    {
        fftw_execute_dft_r2c(forward, in.data(), as_fftw(out.data()));
    }

    // destroys the input
    void c2r(std::vector<Complex>& in, std::vector<double>& out) const
    {
        fftw_execute_dft_c2r(backward, as_fftw(in.data()), out.data());
    }

    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

DftFactorization::DftFactorization(const Matrix& w, Index K, Index transform_length)
    : q_(w.rows()), K_(K), T_(w.cols())
{
    require(q_ >= 1 && K >= 1, "DftFactorization: need a nonempty record and positive depth");
    if (K > T_) {
        throw InsufficientData("DftFactorization: depth exceeds record length");
    }
    n_ = transform_length == 0 ? T_ : transform_length;
    require(n_ >= T_, "DftFactorization: transform length shorter than the record");
    plans_ = std::make_unique<Plans>(n_);
    const Index L = cols();
    const Index nf = n_ / 2 + 1;
    spectrum_.resize(q_, nf);
    std::vector<double> c(static_cast<std::size_t>(n_));
    std::vector<Complex> spec(static_cast<std::size_t>(nf));
    for (Index ch = 0; ch < q_; ++ch) {
        std::fill(c.begin(), c.end(), 0.0);
        // rotated record w_{K-1}, ..., w_{T-1}, then w_0, ..., w_{K-2} at the tail
        for (Index k = 0; k < L; ++k) {
            c[static_cast<std::size_t>(k)] = w(ch, K - 1 + k);
        }
        for (Index s = 0; s + 1 < K; ++s) {
            c[static_cast<std::size_t>(n_ - (K - 1) + s)] = w(ch, s);
        }
        plans_->r2c(c, spec);
        for (Index k = 0; k < nf; ++k) {
            spectrum_(ch, k) = spec[static_cast<std::size_t>(k)];
        }
    }
}

DftFactorization::~DftFactorization() = default;
DftFactorization::DftFactorization(DftFactorization&&) noexcept = default;
DftFactorization& DftFactorization::operator=(DftFactorization&&) noexcept = default;

Vector DftFactorization::matvec(const Vector& g) const
{
    require(g.size() == cols(), "hankel_matvec: coefficient vector has wrong length");
    const Index nf = n_ / 2 + 1;
    std::vector<double> buf(static_cast<std::size_t>(n_), 0.0);
    for (Index j = 0; j < g.size(); ++j) {
        buf[static_cast<std::size_t>(j)] = g(j);
    }
    std::vector<Complex> G(static_cast<std::size_t>(nf));
    plans_->r2c(buf, G);
    std::vector<Complex> Y(static_cast<std::size_t>(nf));
    Vector out(rows());
    const double scale = 1.0 / static_cast<double>(n_);
    for (Index ch = 0; ch < q_; ++ch) {
        for (Index k = 0; k < nf; ++k) {
            Y[static_cast<std::size_t>(k)] = std::conj(spectrum_(ch, k)) * G[static_cast<std::size_t>(k)];
        }
        plans_->c2r(Y, buf);
        for (Index i = 0; i < K_; ++i) {
            out(i * q_ + ch) = buf[static_cast<std::size_t>(K_ - 1 - i)] * scale;
        }
    }
    return out;
}

Vector DftFactorization::rmatvec(const Vector& v) const
{
    require(v.size() == rows(), "hankel_rmatvec: vector has wrong length");
    const Index nf = n_ / 2 + 1;
    std::vector<double> buf(static_cast<std::size_t>(n_), 0.0);
    std::vector<Complex> V(static_cast<std::size_t>(nf));
    std::vector<Complex> acc(static_cast<std::size_t>(nf), Complex(0.0, 0.0));
    for (Index ch = 0; ch < q_; ++ch) {
        std::fill(buf.begin(), buf.end(), 0.0);
        for (Index i = 0; i < K_; ++i) {
            buf[static_cast<std::size_t>(i)] = v((K_ - 1 - i) * q_ + ch);
        }
        plans_->r2c(buf, V);
        for (Index k = 0; k < nf; ++k) {
            acc[static_cast<std::size_t>(k)] += spectrum_(ch, k) * V[static_cast<std::size_t>(k)];
        }
    }
    plans_->c2r(acc, buf);
    Vector out(cols());
    const double scale = 1.0 / static_cast<double>(n_);
    for (Index j = 0; j < out.size(); ++j) {
        out(j) = buf[static_cast<std::size_t>(j)] * scale;
    }
    return out;
}

Matrix DftFactorization::rotated_record() const
{
    const Index nf = n_ / 2 + 1;
    Matrix out(q_, n_);
    std::vector<Complex> spec(static_cast<std::size_t>(nf));
    std::vector<double> buf(static_cast<std::size_t>(n_));
    for (Index ch = 0; ch < q_; ++ch) {
        for (Index k = 0; k < nf; ++k) {
            spec[static_cast<std::size_t>(k)] = spectrum_(ch, k);
        }
        plans_->c2r(spec, buf);
        for (Index k = 0; k < n_; ++k) {
            out(ch, k) = buf[static_cast<std::size_t>(k)] / static_cast<double>(n_);
        }
    }
    return out;
}

MatfreeResult matfree_deepc_unconstrained(const DftFactorization& fact, const BlockLayout& layout,
                                          const Vector& u_ini, const Vector& y_ini, const Vector& r,
                                          const DeepcConfig& config, const MatfreeOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    require(fact.q() == layout.q() && fact.depth() == layout.depth(), "matfree DeePC: layout does not match");
    config.validate(layout);
    if (config.past != PastMode::soft || !config.use_input_slack || config.lambda_g <= 0.0) {
        throw ConfigError("matfree DeePC needs soft past rows with input slack and lambda_g > 0");
    }
    require(u_ini.size() == layout.m * layout.t_ini && y_ini.size() == layout.p * layout.t_ini,
            "matfree DeePC: initial trajectory has wrong length");
    require(r.size() == layout.p * layout.horizon, "matfree DeePC: reference has wrong length");
    const auto order = layout.interleaved_rows();
    const Index rows = layout.rows();
    const Index mt = layout.m * layout.t_ini;
    const Index pt = layout.p * layout.t_ini;
    const Index mn = layout.m * layout.horizon;
    const Index pn = layout.p * layout.horizon;

    auto to_stacked_vec = [&](const Vector& vi) {
        Vector vs(rows);
        for (Index i = 0; i < rows; ++i) {
            vs(i) = vi(order[static_cast<std::size_t>(i)]);
        }
        return vs;
    };
    auto to_interleaved_vec = [&](const Vector& vs) {
        Vector vi(rows);
        for (Index i = 0; i < rows; ++i) {
            vi(order[static_cast<std::size_t>(i)]) = vs(i);
        }
        return vi;
    };
    auto weigh = [&](const Vector& vs) {
        Vector out(rows);
        out.segment(layout.u_past(), mt) = config.lambda_u * vs.segment(layout.u_past(), mt);
        out.segment(layout.y_past(), pt) = config.lambda_y * vs.segment(layout.y_past(), pt);
        out.segment(layout.u_future(), mn) = config.weights.R * vs.segment(layout.u_future(), mn);
        out.segment(layout.y_future(), pn) = config.weights.Q * vs.segment(layout.y_future(), pn);
        return out;
    };
    auto apply = [&](const Vector& g) -> Vector {
        const Vector hv = to_stacked_vec(fact.matvec(g));
        return fact.rmatvec(to_interleaved_vec(weigh(hv))) + config.lambda_g * g;
    };

    Vector t = Vector::Zero(rows);
    t.segment(layout.u_past(), mt) = u_ini;
    t.segment(layout.y_past(), pt) = y_ini;
    t.segment(layout.y_future(), pn) = r;
    const Vector b = fact.rmatvec(to_interleaved_vec(weigh(t)));
    const double threshold = options.tol * (1.0 + 2.0 * b.norm());

    const Index L = fact.cols();
    Vector g = Vector::Zero(L);
    Vector res = b;
    Vector dir = res;
    double rr = res.squaredNorm();
    int it = 0;
    while (2.0 * std::sqrt(rr) > threshold) {
        if (it >= options.max_iter) {
            throw NumericalError("matfree DeePC: conjugate gradients did not converge in " +
                                 std::to_string(options.max_iter) + " iterations");
        }
        const Vector Ad = apply(dir);
        const double alpha = rr / dir.dot(Ad);
        g += alpha * dir;
        ++it;
        if (it % 50 == 0) {
            res = b - apply(g);
        } else {
            res -= alpha * Ad;
        }
        const double rr_new = res.squaredNorm();
        if (2.0 * std::sqrt(rr_new) <= threshold) {
            // confirm with the true residual before stopping
            res = b - apply(g);
            rr = res.squaredNorm();
            if (2.0 * std::sqrt(rr) <= threshold) {
                break;
            }
            dir = res;
            continue;
        }
        dir = res + (rr_new / rr) * dir;
        rr = rr_new;
    }

    MatfreeResult out;
    out.iterations = it;
    out.gradient_norm = 2.0 * std::sqrt(rr);
    PredictiveSolution& sol = out.solution;
    const Vector v = to_stacked_vec(fact.matvec(g));
    sol.decision = g;
    sol.u = v.segment(layout.u_future(), mn);
    sol.y = v.segment(layout.y_future(), pn);
    sol.sigma_u = v.segment(layout.u_past(), mt) - u_ini;
    sol.sigma_y = v.segment(layout.y_past(), pt) - y_ini;
    const Vector ey = sol.y - r;
    sol.objective = ey.dot(config.weights.Q * ey) + sol.u.dot(config.weights.R * sol.u) +
                    config.lambda_u * sol.sigma_u.squaredNorm() + config.lambda_y * sol.sigma_y.squaredNorm() +
                    config.lambda_g * g.squaredNorm();
    sol.iterations = it;
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

DftDeepcController::DftDeepcController(const Matrix& w, const BlockLayout& layout, const DeepcConfig& config,
                                       const BoxConstraints& constraints, const MatfreeOptions& options)
    : fact_(w, layout.depth()), layout_(layout), config_(config), options_(options)
{
    if (!constraints.empty()) {
        throw ConfigError("dft_deepc does not support box constraints");
    }
    require(w.rows() == layout.q(), "DftDeepcController: record width does not match the layout");
}

PredictiveSolution DftDeepcController::step(const Vector& u_ini, const Vector& y_ini, const Vector& r)
{
    MatfreeResult res = matfree_deepc_unconstrained(fact_, layout_, u_ini, y_ini, r, config_, options_);
    last_iterations_ = res.iterations;
    return res.solution;
}

}  // namespace ddpc
