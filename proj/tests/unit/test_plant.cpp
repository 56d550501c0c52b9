#include "doctest.h"

#include "ddpc/error.hpp"
#include "ddpc/plant.hpp"
#include "ddpc/datamat.hpp"

#include "../support/oracles.hpp"

#include <Eigen/Eigenvalues>

using namespace ddpc;

namespace {

StateSpaceModel scalar(double a)
{
    return StateSpaceModel(Matrix::Constant(1, 1, a), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
}

Matrix row(std::initializer_list<double> v)
{
    Matrix m(1, static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) {
        m(0, i++) = x;
    }
    return m;
}

}  // namespace

TEST_SUITE("plant")
{
    TEST_CASE("simulate follows the recursion")
    {
        const Trajectory t = simulate(scalar(1.0), Vector::Zero(1), row({1, 1, 1}));
        CHECK(t.y.isApprox(row({0, 1, 2})));
        CHECK(t.length() == 3);

        const Trajectory h = simulate(scalar(0.5), Vector::Zero(1), row({1, 0}));
        CHECK(h.y.isApprox(row({0, 1})));

        const Plant osc = make_plant("oscillator");
        const Trajectory z = simulate(osc.linear_model(), Vector::Zero(2), Matrix::Zero(1, 10));
        CHECK(z.y.cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("simulate rejects mismatched dimensions")
    {
        CHECK_THROWS_AS(simulate(scalar(1.0), Vector::Zero(2), row({1})), DimensionError);
        CHECK_THROWS_AS(simulate(scalar(1.0), Vector::Zero(1), Matrix::Zero(2, 3)), DimensionError);
    }

    TEST_CASE("simulate is linear in initial state and input")
    {
        std::mt19937_64 rng(3);
        const StateSpaceModel m = random_lti(11, 3, 2, 2);
        const Vector x1 = oracle::random_vector(rng, 3), x2 = oracle::random_vector(rng, 3);
        const Matrix u1 = oracle::random_matrix(rng, 2, 15), u2 = oracle::random_matrix(rng, 2, 15);
        const double a = 0.7, b = -1.3;
        const Matrix lhs = simulate(m, a * x1 + b * x2, a * u1 + b * u2).y;
        const Matrix rhs = a * simulate(m, x1, u1).y + b * simulate(m, x2, u2).y;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("noise streams are reproducible")
    {
        const StateSpaceModel m = random_lti(2, 2, 1, 1);
        NoiseSpec noise{0.1, 0.2, 42};
        const Matrix u = Matrix::Ones(1, 20);
        CHECK(simulate(m, Vector::Ones(2), u, noise).y == simulate(m, Vector::Ones(2), u, noise).y);
        NoiseSpec other = noise;
        other.seed = 43;
        CHECK(simulate(m, Vector::Ones(2), u, noise).y != simulate(m, Vector::Ones(2), u, other).y);
    }

    TEST_CASE("lag")
    {
        CHECK(lag(scalar(1.0)) == 1);
        CHECK(lag(make_plant("double_integrator").linear_model()) == 2);
        const StateSpaceModel full(Matrix::Identity(3, 3) * 0.5, Matrix::Ones(3, 1), Matrix::Identity(3, 3));
        CHECK(lag(full) == 1);
        const StateSpaceModel hidden(Matrix::Identity(2, 2), Matrix::Ones(2, 1), row({1, 0}));
        CHECK_THROWS_AS(lag(hidden), NumericalError);
    }

    TEST_CASE("impulse response Toeplitz")
    {
        Matrix expect(3, 3);
        expect << 0, 0, 0, 1, 0, 0, 1, 1, 0;
        CHECK(impulse_toeplitz(scalar(1.0), 3).isApprox(expect));
        expect << 0, 0, 0, 1, 0, 0, 0.5, 1, 0;
        CHECK(impulse_toeplitz(scalar(0.5), 3).isApprox(expect));
        const StateSpaceModel withD(Matrix::Identity(2, 2) * 0.3, Matrix::Ones(2, 1), row({1, 2}), Matrix::Constant(1, 1, 4.0));
        CHECK(impulse_toeplitz(withD, 1).isApprox(Matrix::Constant(1, 1, 4.0)));
    }

    TEST_CASE("condensed output identity y = O x0 + T u")
    {
        std::mt19937_64 rng(5);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const StateSpaceModel m = random_lti(seed, 4, 2, 2);
            const Index k = 7;
            const Vector x0 = oracle::random_vector(rng, 4);
            const Matrix u = oracle::random_matrix(rng, 2, k);
            const Matrix y = simulate(m, x0, u).y;
            const Vector y_stacked = Eigen::Map<const Vector>(y.data(), y.size());
            const Vector u_stacked = Eigen::Map<const Vector>(u.data(), u.size());
            const Vector pred = observability_matrix(m, k) * x0 + impulse_toeplitz(m, k) * u_stacked;
            CHECK((pred - y_stacked).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    TEST_CASE("state estimation from history")
    {
        const StateSpaceModel integ = scalar(1.0);
        CHECK(estimate_state_from_history(integ, Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0))(0) ==
              doctest::Approx(5.0));
        CHECK(estimate_state_from_history(integ, Matrix::Zero(1, 1), Matrix::Zero(1, 1)).norm() == 0.0);

        std::mt19937_64 rng(8);
        std::vector<StateSpaceModel> models = {make_plant("integrator").linear_model(),
                                               make_plant("double_integrator").linear_model(),
                                               make_plant("oscillator").linear_model()};
        for (std::uint64_t s = 1; s <= 4; ++s) {
            models.push_back(random_lti(s, 3, 1, 2));
        }
        for (const StateSpaceModel& m : models) {
            const Index h = lag(m) + 1;
            const Vector x0 = oracle::random_vector(rng, m.n());
            const Matrix u = oracle::random_matrix(rng, m.m(), h);
            const Rollout ro = rollout(m, x0, u);
            const Vector est = estimate_state_from_history(m, ro.trajectory.u, ro.trajectory.y);
            CHECK((est - ro.states.col(h)).cwiseAbs().maxCoeff() < 1e-9);
        }
        const StateSpaceModel dbl = make_plant("double_integrator").linear_model();
        CHECK_THROWS_AS(estimate_state_from_history(dbl, Matrix::Zero(1, 1), Matrix::Zero(1, 1)), InsufficientData);
    }

    TEST_CASE("datasets")
    {
        const Plant integ = make_plant("integrator");
        ExcitationSpec ex;
        ex.length = 50;
        ex.seed = 7;
        const auto a = collect_dataset(integ, ex);
        const auto b = collect_dataset(integ, ex);
        REQUIRE(a.size() == 1);
        CHECK(a[0].u == b[0].u);
        CHECK(a[0].y == b[0].y);

        ex.length = 20;
        ex.episodes = 3;
        const auto c = collect_dataset(integ, ex);
        CHECK(c.size() == 3);
        for (const auto& t : c) {
            CHECK(t.length() == 20);
        }

        ex.episodes = 1;
        ex.length = 30;
        CHECK(pe_order(collect_dataset(integ, ex)[0].u, 6));

        ex.kind = Excitation::prbs;
        ex.amplitude = 0.5;
        const auto p = collect_dataset(integ, ex);
        CHECK((p[0].u.array().abs() == 0.5).all());

        ex.length = 0;
        CHECK_THROWS_AS(collect_dataset(integ, ex), InsufficientData);
    }

    TEST_CASE("registry")
    {
        const Plant integ = make_plant("integrator");
        CHECK(integ.n() == 1);
        CHECK(integ.m() == 1);
        CHECK(integ.p() == 1);
        CHECK(integ.linear_model().A()(0, 0) == 1.0);

        const Plant r1 = make_plant("random_lti(seed=1,n=3)");
        const Plant r2 = make_plant("random_lti(n=3, seed=1)");
        CHECK(r1.linear_model().A() == r2.linear_model().A());
        CHECK(r1.linear_model().C() == r2.linear_model().C());
        CHECK(r1.n() == 3);

        const Eigen::VectorXcd ev = make_plant("oscillator").linear_model().A().eigenvalues();
        CHECK(ev.cwiseAbs().maxCoeff() < 1.0);

        CHECK_THROWS_AS(make_plant("no_such_plant"), ConfigError);
        CHECK_THROWS_AS(make_plant("random_lti(seed=1,bogus=2)"), ConfigError);
        CHECK_FALSE(make_plant("pendulum").is_linear());

        for (const std::string& name : plant_names()) {
            // parameterized entries are listed as templates
            const Plant p = make_plant(name.find('(') == std::string::npos ? name : "random_lti(seed=2)");
            if (!p.is_linear()) {
                continue;
            }
            const StateSpaceModel& m = p.linear_model();
            CAPTURE(name);
            CHECK(spectral_radius(m.A()) <= 1.0 + 1e-12);
            CHECK(numeric_rank(controllability_matrix(m, m.n())) == m.n());
            CHECK(numeric_rank(observability_matrix(m, m.n())) == m.n());
        }
    }

    TEST_CASE("random plants stay within the documented ranges")
    {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const Plant p = make_plant("random_lti(seed=" + std::to_string(s) + ")");
            CHECK(p.n() >= 2);
            CHECK(p.n() <= 4);
            CHECK(p.m() >= 1);
            CHECK(p.m() <= 2);
            CHECK(p.p() >= 1);
            CHECK(p.p() <= 2);
            CHECK(spectral_radius(p.linear_model().A()) < 1.0);
        }
    }

    TEST_CASE("pendulum linearization matches a finite difference")
    {
        const Pendulum pend;
        const StateSpaceModel lin = pend.linearization();
        const double h = 1e-6;
        Matrix A(2, 2);
        for (Index j = 0; j < 2; ++j) {
            Vector dx = Vector::Zero(2);
            dx(j) = h;
            A.col(j) = (pend.next_state(dx, Vector::Zero(1)) - pend.next_state(-dx, Vector::Zero(1))) / (2 * h);
        }
        CHECK((A - lin.A()).cwiseAbs().maxCoeff() < 1e-7);
    }
}
