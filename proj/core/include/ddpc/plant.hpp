#pragma once

#include "ddpc/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ddpc {

/// Discrete-time LTI plant x+ = A x + B u, y = C x + D u.
class StateSpaceModel {
public:
    StateSpaceModel(Matrix A, Matrix B, Matrix C, Matrix D);
    /// D defaults to zero (strictly proper).
    StateSpaceModel(Matrix A, Matrix B, Matrix C);

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }
    const Matrix& C() const { return C_; }
    const Matrix& D() const { return D_; }

    Index n() const { return A_.rows(); }
    Index m() const { return B_.cols(); }
    Index p() const { return C_.rows(); }

private:
    Matrix A_, B_, C_, D_;
};

/// Gaussian process/measurement noise. A fixed seed reproduces the stream.
struct NoiseSpec {
    double process_std = 0.0;
    double measurement_std = 0.0;
    std::uint64_t seed = 0;

    bool is_zero() const { return process_std == 0.0 && measurement_std == 0.0; }
};

/// Input/output record; column k holds the sample at time k.
struct Trajectory {
    Matrix u;  // m x T
    Matrix y;  // p x T

    Index length() const { return u.cols(); }
    Index m() const { return u.rows(); }
    Index p() const { return y.rows(); }
};

/// Pendulum with viscous friction, explicit Euler at a fixed step. State (angle, rate), output angle.
struct Pendulum {
    double dt = 0.05;
    double gravity = 9.81;
    double length = 1.0;
    double mass = 1.0;
    double damping = 0.5;

    Vector next_state(const Vector& x, const Vector& u) const;
    Vector output(const Vector& x) const;
    /// Jacobian linearization about the hanging equilibrium.
    StateSpaceModel linearization() const;
};

/// A named simulation plant: either an exact LTI model or the nonlinear pendulum.
class Plant {
public:
    Plant(std::string name, StateSpaceModel model);
    Plant(std::string name, Pendulum pendulum);

    const std::string& name() const { return name_; }
    Index n() const { return linear_.n(); }
    Index m() const { return linear_.m(); }
    Index p() const { return linear_.p(); }
    bool is_linear() const { return std::holds_alternative<StateSpaceModel>(dynamics_); }

    /// The exact model for LTI plants, the linearization otherwise.
    const StateSpaceModel& linear_model() const { return linear_; }

    Vector next_state(const Vector& x, const Vector& u) const;
    Vector output(const Vector& x, const Vector& u) const;

private:
    std::string name_;
    std::variant<StateSpaceModel, Pendulum> dynamics_;
    StateSpaceModel linear_;
};

struct Rollout {
    Trajectory trajectory;
    Matrix states;  // n x (T + 1); column k is x_k, the last column the state after the final input
};

/// Simulates from x0 under the input columns of u_seq.
Rollout rollout(const Plant& plant, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise = {});
Rollout rollout(const StateSpaceModel& model, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise = {});
Trajectory simulate(const StateSpaceModel& model, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise = {});

/// Stacked rows C, CA, ..., CA^{k-1}.
Matrix observability_matrix(const StateSpaceModel& model, Index k);
/// Stacked blocks [B, AB, ..., A^{k-1}B].
Matrix controllability_matrix(const StateSpaceModel& model, Index k);

/// Observability index: smallest l with rank col(C, ..., CA^{l-1}) = n. Throws NumericalError if unobservable.
Index lag(const StateSpaceModel& model, double tol = kDefaultRankTol);

/// Block lower-triangular Toeplitz matrix of Markov parameters, (p k) x (m k).
Matrix impulse_toeplitz(const StateSpaceModel& model, Index k);

/// Current state x_k from the h most recent samples (columns are times k-h..k-1).
Vector estimate_state_from_history(const StateSpaceModel& model, const Matrix& u_hist, const Matrix& y_hist);

enum class Excitation { gaussian, prbs };

struct ExcitationSpec {
    Excitation kind = Excitation::gaussian;
    double amplitude = 1.0;
    Index length = 0;  // samples per episode
    Index episodes = 1;
    double initial_state_std = 1.0;
    std::uint64_t seed = 0;
};

/// Open-loop experiments from random initial states; deterministic in the seeds.
std::vector<Trajectory> collect_dataset(const Plant& plant, const ExcitationSpec& excitation, const NoiseSpec& noise = {});

/// Seeded random stable LTI model, resampled until controllable and observable with margin.
StateSpaceModel random_lti(std::uint64_t seed, Index n, Index m, Index p);

/// Registry lookup: integrator, double_integrator, oscillator, pendulum, random_lti(seed=,n=,m=,p=).
Plant make_plant(std::string_view spec);
std::vector<std::string> plant_names();

double spectral_radius(const Matrix& A);

}  // namespace ddpc
