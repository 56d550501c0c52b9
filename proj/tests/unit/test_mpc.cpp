#include "doctest.h"

#include "ddpc/error.hpp"
#include "ddpc/mpc.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace ddpc;

namespace {

const StateSpaceModel& integrator()
{
    static const StateSpaceModel model = make_plant("integrator").linear_model();
    return model;
}

}  // namespace

TEST_SUITE("mpc")
{
    TEST_CASE("one-step horizon cannot move a strictly proper output")
    {
        const StateSpaceModel model = random_lti(3, 3, 2, 2);
        const Vector x = Vector::Constant(3, 0.7);
        const Vector r = Vector::Constant(2, 5.0);
        const PredictiveSolution s =
            mpc_step(model, x, r, CostWeights::uniform(2, 2, 1), BoxConstraints::none(2, 2), 1);
        CHECK(fixture::max_abs(s.u) < 1e-12);
    }

    TEST_CASE("integrator example")
    {
        const Vector r = Vector::Ones(2);
        const PredictiveSolution s =
            mpc_step(integrator(), Vector::Zero(1), r, CostWeights::uniform(1, 1, 2), BoxConstraints::none(1, 1), 2);
        CHECK(s.u(0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::abs(s.u(1)) < 1e-12);
        CHECK(s.y(0) == doctest::Approx(0.0));
        CHECK(s.y(1) == doctest::Approx(0.5));

        // dense grid oracle over (u0, u1)
        double best = kInf;
        double best_u0 = 0.0;
        for (int i = -100; i <= 100; ++i) {
            for (int j = -100; j <= 100; ++j) {
                const double u0 = i * 0.01;
                const double u1 = j * 0.01;
                const double cost = 1.0 + (u0 - 1.0) * (u0 - 1.0) + u0 * u0 + u1 * u1;
                if (cost < best) {
                    best = cost;
                    best_u0 = u0;
                }
            }
        }
        CHECK(best_u0 == doctest::Approx(0.5));
    }

    TEST_CASE("integrator with an active input bound")
    {
        const BoxConstraints box = BoxConstraints::inputs(Vector::Constant(1, -kInf), Vector::Constant(1, 0.25), 1);
        const PredictiveSolution s =
            mpc_step(integrator(), Vector::Zero(1), Vector::Ones(2), CostWeights::uniform(1, 1, 2), box, 2);
        CHECK(s.u(0) == doctest::Approx(0.25).epsilon(1e-12));
        REQUIRE(s.active_set.size() == 1);
        CHECK(s.active_set[0] == 0);  // upper bound on u_0
        CHECK(s.mu(0) > 0.0);

        // brute force over the candidate active sets of the two upper bounds
        QuadProgram qp;
        qp.P = 2.0 * Matrix::Identity(2, 2);
        qp.P(0, 0) = 4.0;
        qp.f = Vector::Zero(2);
        qp.f(0) = -2.0;
        qp.A_in = Matrix::Identity(2, 2);
        qp.b_in = Vector::Constant(2, 0.25);
        qp.normalize();
        const oracle::Enumerated ref = oracle::enumerate_active_sets(qp);
        CHECK(ref.x(0) == doctest::Approx(s.u(0)));
        CHECK(ref.mu(0) == doctest::Approx(s.mu(0)));
    }

    TEST_CASE("infeasible constraint set")
    {
        // y_1 = x + u_0 must be both >= 2 and u_0 <= 0 from x = 0
        BoxConstraints box = BoxConstraints::inputs(Vector::Constant(1, -kInf), Vector::Constant(1, 0.0), 1);
        box.y_min = Vector::Constant(1, 2.0);
        CHECK_THROWS_AS(
            mpc_step(integrator(), Vector::Zero(1), Vector::Ones(2), CostWeights::uniform(1, 1, 2), box, 2),
            InfeasibleProblem);
    }

    TEST_CASE("unconstrained gains reproduce the QP")
    {
        std::mt19937_64 rng(8);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const StateSpaceModel model = random_lti(seed, 3, 2, 2);
            const Index N = 6;
            CostWeights w = CostWeights::uniform(2, 2, N, 1.0, 0.1);
            const MpcGains gains = unconstrained_mpc_gains(model, w, N);
            CHECK(gains.K_r.rows() == 2 * N);
            CHECK(gains.K_r.cols() == 2 * N);
            CHECK(gains.K_x.cols() == 3);
            const Vector x = oracle::random_vector(rng, 3);
            const Vector r = oracle::random_vector(rng, 2 * N);
            const PredictiveSolution s = mpc_step(model, x, r, w, BoxConstraints::none(2, 2), N);
            CHECK(fixture::max_abs(gains.K_r * r + gains.K_x * x - s.u) < 1e-10);

            // reference on the free response needs no input
            const Vector free = observability_matrix(model, N) * x;
            CHECK(fixture::max_abs(gains.K_r * free + gains.K_x * x) < 1e-10);
            CHECK(fixture::max_abs(mpc_step(model, Vector::Zero(3), Vector::Zero(2 * N), w,
                                            BoxConstraints::none(2, 2), N).u) == 0.0);
        }
    }

    TEST_CASE("condensed prediction identity")
    {
        std::mt19937_64 rng(9);
        const StateSpaceModel model = random_lti(4, 4, 2, 2);
        const Index N = 7;
        MpcController mpc(model, CostWeights::uniform(2, 2, N), BoxConstraints::none(2, 2), N);
        for (int trial = 0; trial < 5; ++trial) {
            const Vector x = oracle::random_vector(rng, 4);
            const Matrix u = oracle::random_matrix(rng, 2, N);
            const oracle::Window sim = oracle::simulate_window(model, x, u);
            const Vector pred = mpc.observability() * x + mpc.toeplitz() * sim.u;
            CHECK(fixture::max_abs(pred - sim.y) < 1e-10);
        }
    }

    TEST_CASE("integrator closed loop approaches a constant reference monotonically")
    {
        const Index N = 5;
        MpcController mpc(integrator(), CostWeights::uniform(1, 1, N, 1.0, 0.1), BoxConstraints::none(1, 1), N);
        const Vector r = Vector::Ones(N);
        Vector x = Vector::Zero(1);
        std::vector<double> err;
        for (int k = 0; k < 30; ++k) {
            err.push_back(std::abs(x(0) - 1.0));
            const PredictiveSolution s = mpc.step(x, r);
            x(0) += s.u(0);
        }
        for (std::size_t k = 3; k < err.size(); ++k) {
            CHECK(err[k] <= err[k - 1] + 1e-12);
        }
        CHECK(err.back() < 1e-3);
    }

    TEST_CASE("shape checks")
    {
        MpcController mpc(integrator(), CostWeights::uniform(1, 1, 3), BoxConstraints::none(1, 1), 3);
        CHECK_THROWS_AS(mpc.step(Vector::Zero(2), Vector::Zero(3)), DimensionError);
        CHECK_THROWS_AS(mpc.step(Vector::Zero(1), Vector::Zero(2)), DimensionError);
        CHECK(mpc.decision_dim() == 3);
        CHECK_THROWS(MpcController(integrator(), CostWeights::uniform(1, 1, 2), BoxConstraints::none(1, 1), 3));
    }
}
