#include "doctest.h"

#include "ddpc/dft.hpp"
#include "ddpc/error.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace ddpc;
using fixture::max_abs;

namespace {

DeepcConfig matfree_config(Index m, Index p, Index t_ini, Index horizon, double lambda_g)
{
    DeepcConfig c;
    c.weights = CostWeights::uniform(m, p, horizon, 1.0, 0.1);
    c.t_ini = t_ini;
    c.horizon = horizon;
    c.past = PastMode::soft;
    c.use_input_slack = true;
    c.lambda_g = lambda_g;
    c.lambda_u = 50.0;
    c.lambda_y = 50.0;
    return c;
}

}  // namespace

TEST_SUITE("dft")
{
    TEST_CASE("small example")
    {
        Matrix w(1, 4);
        w << 1, 2, 3, 4;
        const DftFactorization f(w, 2);
        CHECK(f.rows() == 2);
        CHECK(f.cols() == 3);
        Matrix H(2, 3);
        H << 1, 2, 3, 2, 3, 4;
        for (Index j = 0; j < 3; ++j) {
            CHECK(max_abs(f.matvec(Vector::Unit(3, j)) - H.col(j)) < 1e-12);
        }
        const Vector s = f.matvec(Vector::Ones(3));
        CHECK(s(0) == doctest::Approx(6.0));
        CHECK(s(1) == doctest::Approx(9.0));
        CHECK(max_abs(f.rmatvec(Vector::Ones(2)) - Vector((Vector(3) << 3, 5, 7).finished())) < 1e-12);
    }

    TEST_CASE("rotated record round trip")
    {
        std::mt19937_64 rng(1);
        const Matrix w = oracle::random_matrix(rng, 2, 12);
        const DftFactorization f(w, 4);
        const Matrix rot = f.rotated_record();
        REQUIRE(rot.cols() == 12);
        for (Index k = 0; k < 12; ++k) {
            CHECK(max_abs(rot.col(k) - w.col((k + 3) % 12)) < 1e-12);
        }
        CHECK(f.spectral_blocks().cols() == 7);
    }

    TEST_CASE("matches the dense Hankel on assorted lengths")
    {
        std::mt19937_64 rng(2);
        for (Index T : {Index(16), Index(12), Index(257), Index(255), Index(97)}) {
            const Matrix w = oracle::random_matrix(rng, 2, T);
            const Index K = 5;
            const DftFactorization f(w, K);
            const Matrix H = oracle::dense_hankel(w, K);
            CAPTURE(T);
            double worst = 0.0;
            for (int probe = 0; probe < 100; ++probe) {
                const Vector g = oracle::random_vector(rng, f.cols());
                const Vector v = oracle::random_vector(rng, f.rows());
                const Vector Hg = H * g;
                const Vector Htv = H.transpose() * v;
                worst = std::max(worst, max_abs(f.matvec(g) - Hg) / (1.0 + max_abs(Hg)));
                worst = std::max(worst, max_abs(f.rmatvec(v) - Htv) / (1.0 + max_abs(Htv)));
                const double lhs = f.matvec(g).dot(v);
                const double rhs = g.dot(f.rmatvec(v));
                CHECK(std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(lhs)) * static_cast<double>(T));
            }
            CHECK(worst < 1e-10);
        }
    }

    TEST_CASE("padded transform gives the same operator")
    {
        std::mt19937_64 rng(3);
        const Matrix w = oracle::random_matrix(rng, 3, 255);
        const DftFactorization a(w, 6);
        const DftFactorization b(w, 6, 256);
        CHECK(b.transform_length() == 256);
        const Vector g = oracle::random_vector(rng, a.cols());
        CHECK(max_abs(a.matvec(g) - b.matvec(g)) < 1e-10);
        const Vector v = oracle::random_vector(rng, a.rows());
        CHECK(max_abs(a.rmatvec(v) - b.rmatvec(v)) < 1e-10);
    }

    TEST_CASE("argument checks")
    {
        const Matrix w = Matrix::Ones(1, 4);
        CHECK_THROWS_AS(DftFactorization(w, 5), InsufficientData);
        const DftFactorization f(w, 2);
        CHECK_THROWS_AS(f.matvec(Vector::Zero(2)), DimensionError);
        CHECK_THROWS_AS(f.rmatvec(Vector::Zero(3)), DimensionError);
        CHECK_THROWS(DftFactorization(w, 2, 3));
    }

    TEST_CASE("matrix-free solve matches the closed-form gains")
    {
        std::mt19937_64 rng(4);
        for (const char* name : {"integrator", "oscillator"}) {
            const fixture::Setup s = fixture::make_setup(name, 2, 5, 4, 120);
            const DeepcConfig cfg = matfree_config(1, 1, 2, 5, 1e-2);
            const DeepcGains gains = unconstrained_deepc_gains(s.blocks, cfg);
            const DftFactorization f(interleave(s.data[0]), 7);
            const std::size_t builds = dense_hankel_builds();
            for (int trial = 0; trial < 5; ++trial) {
                const Vector u_ini = oracle::random_vector(rng, 2);
                const Vector y_ini = oracle::random_vector(rng, 2);
                const Vector r = oracle::random_vector(rng, 5);
                Vector wini(4);
                wini << u_ini, y_ini;
                const MatfreeResult res = matfree_deepc_unconstrained(f, s.blocks.layout, u_ini, y_ini, r, cfg);
                CHECK(max_abs(res.solution.u - (gains.K_r * r + gains.K_ini * wini)) < 1e-6);
                CHECK(res.iterations > 0);
                CHECK(res.iterations < 5000);
            }
            CHECK(dense_hankel_builds() == builds);
        }
    }

    TEST_CASE("zero problem converges immediately")
    {
        const fixture::Setup s = fixture::make_setup("integrator", 2, 3, 5, 60);
        const DftFactorization f(interleave(s.data[0]), 5);
        const MatfreeResult res = matfree_deepc_unconstrained(f, s.blocks.layout, Vector::Zero(2), Vector::Zero(2),
                                                              Vector::Zero(3), matfree_config(1, 1, 2, 3, 0.1));
        CHECK(res.iterations <= 1);
        CHECK(max_abs(res.solution.decision) == 0.0);
    }

    TEST_CASE("radix does not change the solution")
    {
        std::mt19937_64 rng(6);
        const fixture::Setup s = fixture::make_setup("oscillator", 2, 4, 6, 255);
        const DeepcConfig cfg = matfree_config(1, 1, 2, 4, 1e-2);
        const DftFactorization a(interleave(s.data[0]), 6);
        const DftFactorization b(interleave(s.data[0]), 6, 256);
        const Vector u_ini = oracle::random_vector(rng, 2);
        const Vector y_ini = oracle::random_vector(rng, 2);
        const Vector r = Vector::Ones(4);
        const MatfreeResult ra = matfree_deepc_unconstrained(a, s.blocks.layout, u_ini, y_ini, r, cfg);
        const MatfreeResult rb = matfree_deepc_unconstrained(b, s.blocks.layout, u_ini, y_ini, r, cfg);
        CHECK(max_abs(ra.solution.u - rb.solution.u) < 1e-6);
    }

    TEST_CASE("large record without a dense Hankel")
    {
        ExcitationSpec ex;
        ex.length = 2048;
        ex.seed = 7;
        const std::vector<Trajectory> data = collect_dataset(make_plant("oscillator"), ex);
        const std::size_t builds = dense_hankel_builds();
        DftDeepcController ctrl(interleave(data[0]), BlockLayout{1, 1, 2, 6}, matfree_config(1, 1, 2, 6, 0.1),
                                BoxConstraints::none(1, 1));
        const PredictiveSolution sol = ctrl.step(Vector::Zero(2), Vector::Constant(2, 0.5), Vector::Ones(6));
        CHECK(sol.u.size() == 6);
        CHECK(ctrl.decision_dim() == 2048 - 8 + 1);
        CHECK(ctrl.stored_entries() < static_cast<std::size_t>(2 * 2 * 2048));
        CHECK(dense_hankel_builds() == builds);
        CHECK(ctrl.last_iterations() > 0);
    }

    TEST_CASE("configuration limits")
    {
        const fixture::Setup s = fixture::make_setup("integrator", 2, 3, 8, 60);
        const Matrix w = interleave(s.data[0]);
        BoxConstraints box = BoxConstraints::none(1, 1);
        box.u_max = Vector::Ones(1);
        CHECK_THROWS_AS(DftDeepcController(w, s.blocks.layout, matfree_config(1, 1, 2, 3, 0.1), box), ConfigError);
        const DftFactorization f(w, 5);
        DeepcConfig hard = matfree_config(1, 1, 2, 3, 0.1);
        hard.past = PastMode::hard;
        CHECK_THROWS_AS(matfree_deepc_unconstrained(f, s.blocks.layout, Vector::Zero(2), Vector::Zero(2),
                                                    Vector::Zero(3), hard),
                        ConfigError);
        DeepcConfig flat = matfree_config(1, 1, 2, 3, 0.0);
        CHECK_THROWS_AS(matfree_deepc_unconstrained(f, s.blocks.layout, Vector::Zero(2), Vector::Zero(2),
                                                    Vector::Zero(3), flat),
                        ConfigError);
        MatfreeOptions few;
        few.max_iter = 1;
        CHECK_THROWS_AS(matfree_deepc_unconstrained(f, s.blocks.layout, Vector::Ones(2), Vector::Ones(2),
                                                    Vector::Ones(3), matfree_config(1, 1, 2, 3, 1e-4), few),
                        NumericalError);
    }
}
