#include "ddpc/plant.hpp"

#include "ddpc/error.hpp"
#include "ddpc/naming.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace ddpc {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            out(i, j) = dist(rng);
        }
    }
    return out;
}

struct NoiseStream {
    NoiseStream(const NoiseSpec& spec) : spec_(spec), rng_(spec.seed) {}

    void add_process(Vector& x)
    {
        if (spec_.process_std > 0.0) {
            for (Index i = 0; i < x.size(); ++i) {
                x(i) += spec_.process_std * normal_(rng_);
            }
        }
    }

    void add_measurement(Eigen::Ref<Vector> y)
    {
        if (spec_.measurement_std > 0.0) {
            for (Index i = 0; i < y.size(); ++i) {
                y(i) += spec_.measurement_std * normal_(rng_);
            }
        }
    }

    NoiseSpec spec_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

double min_singular_ratio(const Matrix& M, double* smallest)
{
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    *smallest = s(s.size() - 1);
    return s(0) > 0.0 ? s(s.size() - 1) / s(0) : 0.0;
}

}  // namespace

StateSpaceModel::StateSpaceModel(Matrix A, Matrix B, Matrix C, Matrix D)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D))
{
    require(A_.rows() >= 1 && A_.rows() == A_.cols(), "StateSpaceModel: A must be square and nonempty");
    require(B_.rows() == A_.rows() && B_.cols() >= 1, "StateSpaceModel: B must be n x m with m >= 1");
    require(C_.cols() == A_.rows() && C_.rows() >= 1, "StateSpaceModel: C must be p x n with p >= 1");
    require(D_.rows() == C_.rows() && D_.cols() == B_.cols(), "StateSpaceModel: D must be p x m");
}

StateSpaceModel::StateSpaceModel(Matrix A, Matrix B, Matrix C)
    : StateSpaceModel(A, B, C, Matrix::Zero(C.rows(), B.cols()))
{
}

Vector Pendulum::next_state(const Vector& x, const Vector& u) const
{
    const double inertia = mass * length * length;
    const double accel = -(gravity / length) * std::sin(x(0)) - (damping / inertia) * x(1) + u(0) / inertia;
    Vector out(2);
    out << x(0) + dt * x(1), x(1) + dt * accel;
    return out;
}

Vector Pendulum::output(const Vector& x) const
{
    return x.head(1);
}

StateSpaceModel Pendulum::linearization() const
{
    const double inertia = mass * length * length;
    Matrix A(2, 2);
    A << 1.0, dt, -dt * gravity / length, 1.0 - dt * damping / inertia;
    Matrix B(2, 1);
    B << 0.0, dt / inertia;
    Matrix C(1, 2);
    C << 1.0, 0.0;
    return StateSpaceModel(A, B, C);
}

Plant::Plant(std::string name, StateSpaceModel model)
    : name_(std::move(name)), dynamics_(model), linear_(std::move(model))
{
}

Plant::Plant(std::string name, Pendulum pendulum)
    : name_(std::move(name)), dynamics_(pendulum), linear_(pendulum.linearization())
{
}

Vector Plant::next_state(const Vector& x, const Vector& u) const
{
    if (const auto* lti = std::get_if<StateSpaceModel>(&dynamics_)) {
        return lti->A() * x + lti->B() * u;
    }
    return std::get<Pendulum>(dynamics_).next_state(x, u);
}

Vector Plant::output(const Vector& x, const Vector& u) const
{
    if (const auto* lti = std::get_if<StateSpaceModel>(&dynamics_)) {
        return lti->C() * x + lti->D() * u;
    }
    return std::get<Pendulum>(dynamics_).output(x);
}

Rollout rollout(const Plant& plant, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise)
{
    require(x0.size() == plant.n(), "simulate: x0 has wrong dimension");
    require(u_seq.rows() == plant.m(), "simulate: input rows must equal m");
    require(u_seq.cols() >= 1, "simulate: empty input sequence");
    const Index T = u_seq.cols();
    Rollout out;
    out.trajectory.u = u_seq;
    out.trajectory.y.resize(plant.p(), T);
    out.states.resize(plant.n(), T + 1);
    NoiseStream stream(noise);
    Vector x = x0;
    for (Index k = 0; k < T; ++k) {
        out.states.col(k) = x;
        const Vector u = u_seq.col(k);
        out.trajectory.y.col(k) = plant.output(x, u);
        stream.add_measurement(out.trajectory.y.col(k));
        x = plant.next_state(x, u);
        stream.add_process(x);
    }
    out.states.col(T) = x;
    return out;
}

Rollout rollout(const StateSpaceModel& model, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise)
{
    return rollout(Plant("model", model), x0, u_seq, noise);
}

Trajectory simulate(const StateSpaceModel& model, const Vector& x0, const Matrix& u_seq, const NoiseSpec& noise)
{
    return rollout(model, x0, u_seq, noise).trajectory;
}

Matrix observability_matrix(const StateSpaceModel& model, Index k)
{
    require(k >= 1, "observability_matrix: k must be positive");
    const Index p = model.p();
    Matrix O(p * k, model.n());
    Matrix row = model.C();
    for (Index i = 0; i < k; ++i) {
        O.middleRows(i * p, p) = row;
        row = row * model.A();
    }
    return O;
}

Matrix controllability_matrix(const StateSpaceModel& model, Index k)
{
    require(k >= 1, "controllability_matrix: k must be positive");
    const Index m = model.m();
    Matrix Ctr(model.n(), m * k);
    Matrix block = model.B();
    for (Index i = 0; i < k; ++i) {
        Ctr.middleCols(i * m, m) = block;
        block = model.A() * block;
    }
    return Ctr;
}

Index lag(const StateSpaceModel& model, double tol)
{
    const Index n = model.n();
    for (Index l = 1; l <= n; ++l) {
        Eigen::JacobiSVD<Matrix> svd(observability_matrix(model, l));
        const Vector& s = svd.singularValues();
        Index rank = 0;
        for (Index i = 0; i < s.size(); ++i) {
            if (s(i) > tol * s(0)) {
                ++rank;
            }
        }
        if (rank == n) {
            return l;
        }
    }
    throw NumericalError("lag: (A, C) is not observable");
}

Matrix impulse_toeplitz(const StateSpaceModel& model, Index k)
{
    require(k >= 1, "impulse_toeplitz: horizon must be positive");
    const Index m = model.m();
    const Index p = model.p();
    // markov[i] = C A^{i-1} B for i >= 1, markov[0] = D
    std::vector<Matrix> markov(static_cast<std::size_t>(k));
    markov[0] = model.D();
    Matrix AB = model.B();
    for (Index i = 1; i < k; ++i) {
        markov[static_cast<std::size_t>(i)] = model.C() * AB;
        AB = model.A() * AB;
    }
    Matrix T = Matrix::Zero(p * k, m * k);
    for (Index i = 0; i < k; ++i) {
        for (Index j = 0; j <= i; ++j) {
            T.block(i * p, j * m, p, m) = markov[static_cast<std::size_t>(i - j)];
        }
    }
    return T;
}

Vector estimate_state_from_history(const StateSpaceModel& model, const Matrix& u_hist, const Matrix& y_hist)
{
    require(u_hist.rows() == model.m() && y_hist.rows() == model.p(),
            "estimate_state_from_history: history rows must equal m and p");
    require(u_hist.cols() == y_hist.cols(), "estimate_state_from_history: u and y histories differ in length");
    const Index h = u_hist.cols();
    const Index n = model.n();
    if (h < 1) {
        throw InsufficientData("estimate_state_from_history: empty history");
    }
    const Matrix O = observability_matrix(model, h);
    Eigen::ColPivHouseholderQR<Matrix> qr(O);
    qr.setThreshold(kDefaultRankTol);
    if (qr.rank() < n) {
        throw InsufficientData("estimate_state_from_history: history shorter than the lag");
    }
    const Vector u = u_hist.reshaped();
    const Vector y = y_hist.reshaped();
    const Vector x_start = qr.solve(y - impulse_toeplitz(model, h) * u);
    Vector x = x_start;
    for (Index i = 0; i < h; ++i) {
        x = model.A() * x + model.B() * u_hist.col(i);
    }
    return x;
}

std::vector<Trajectory> collect_dataset(const Plant& plant, const ExcitationSpec& excitation, const NoiseSpec& noise)
{
    if (excitation.length <= 0 || excitation.episodes <= 0) {
        throw InsufficientData("collect_dataset: length and episode count must be positive");
    }
    std::mt19937_64 rng(mix_seed(excitation.seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(excitation.episodes));
    for (Index e = 0; e < excitation.episodes; ++e) {
        Vector x0(plant.n());
        for (Index i = 0; i < x0.size(); ++i) {
            x0(i) = excitation.initial_state_std * normal(rng);
        }
        Matrix u(plant.m(), excitation.length);
        for (Index k = 0; k < u.cols(); ++k) {
            for (Index i = 0; i < u.rows(); ++i) {
                u(i, k) = excitation.kind == Excitation::gaussian ? excitation.amplitude * normal(rng)
                                                                  : (coin(rng) ? excitation.amplitude : -excitation.amplitude);
            }
        }
        NoiseSpec episode_noise = noise;
        episode_noise.seed = mix_seed(noise.seed, static_cast<std::uint64_t>(e) + 1);
        out.push_back(rollout(plant, x0, u, episode_noise).trajectory);
    }
    return out;
}

double spectral_radius(const Matrix& A)
{
    Eigen::EigenSolver<Matrix> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

StateSpaceModel random_lti(std::uint64_t seed, Index n, Index m, Index p)
{
    require(n >= 1 && m >= 1 && p >= 1, "random_lti: dimensions must be positive");
    std::mt19937_64 rng(mix_seed(seed, 17));
    std::uniform_real_distribution<double> radius(0.5, 0.95);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Matrix A = gaussian_matrix(rng, n, n);
        const double rho = spectral_radius(A);
        if (rho < 1e-3) {
            continue;
        }
        A *= radius(rng) / rho;
        const Matrix B = gaussian_matrix(rng, n, m);
        const Matrix C = gaussian_matrix(rng, p, n);
        StateSpaceModel model(A, B, C);
        double smallest_ctrb = 0.0;
        double smallest_obsv = 0.0;
        const double ctrb_ratio = min_singular_ratio(controllability_matrix(model, n), &smallest_ctrb);
        const double obsv_ratio = min_singular_ratio(observability_matrix(model, n).transpose(), &smallest_obsv);
        if (smallest_ctrb > 1e-6 && smallest_obsv > 1e-6 && ctrb_ratio > 1e-3 && obsv_ratio > 1e-3) {
            return model;
        }
    }
    throw NumericalError("random_lti: failed to sample a controllable and observable model");
}

Plant make_plant(std::string_view spec_text)
{
    const CallSpec spec = parse_call(spec_text);
    auto reject_args = [&spec]() {
        if (!spec.args.empty()) {
            throw ConfigError("plant '" + spec.name + "' takes no arguments");
        }
    };
    if (spec.name == "integrator") {
        reject_args();
        return Plant("integrator", StateSpaceModel(Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)));
    }
    if (spec.name == "double_integrator") {
        reject_args();
        Matrix A(2, 2);
        A << 1.0, 1.0, 0.0, 1.0;
        Matrix B(2, 1);
        B << 0.5, 1.0;
        Matrix C(1, 2);
        C << 1.0, 0.0;
        return Plant("double_integrator", StateSpaceModel(A, B, C));
    }
    if (spec.name == "oscillator") {
        reject_args();
        const double r = 0.95;
        const double theta = 0.3;
        Matrix A(2, 2);
        A << r * std::cos(theta), -r * std::sin(theta), r * std::sin(theta), r * std::cos(theta);
        Matrix B(2, 1);
        B << 0.0, 1.0;
        Matrix C(1, 2);
        C << 1.0, 0.0;
        return Plant("oscillator", StateSpaceModel(A, B, C));
    }
    if (spec.name == "pendulum") {
        reject_args();
        return Plant("pendulum", Pendulum{});
    }
    if (spec.name == "random_lti") {
        for (const auto& [key, value] : spec.args) {
            if (key != "seed" && key != "n" && key != "m" && key != "p") {
                throw ConfigError("random_lti: unknown argument '" + key + "'");
            }
        }
        const auto seed = static_cast<std::uint64_t>(spec.get_int("seed", 0));
        std::mt19937_64 rng(mix_seed(seed, 3));
        const Index n = spec.get_int("n", std::uniform_int_distribution<long>(2, 4)(rng));
        const Index m = spec.get_int("m", std::uniform_int_distribution<long>(1, 2)(rng));
        const Index p = spec.get_int("p", std::uniform_int_distribution<long>(1, 2)(rng));
        CallSpec canonical{"random_lti",
                           {{"seed", std::to_string(seed)},
                            {"n", std::to_string(n)},
                            {"m", std::to_string(m)},
                            {"p", std::to_string(p)}}};
        return Plant(canonical.str(), random_lti(seed, n, m, p));
    }
    throw ConfigError("unknown plant '" + spec.name + "'");
}

std::vector<std::string> plant_names()
{
    return {"integrator", "double_integrator", "oscillator", "pendulum", "random_lti(seed=,n=,m=,p=)"};
}

}  // namespace ddpc
