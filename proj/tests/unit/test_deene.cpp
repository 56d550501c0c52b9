#include "doctest.h"

#include "ddpc/deene.hpp"
#include "ddpc/error.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace ddpc;
using fixture::max_abs;

namespace {

struct Case {
    fixture::Setup setup;
    DeepcConfig config;
    BoxConstraints box;
    Vector u_ini, y_ini, r;
};

Case make_case(std::uint64_t seed, bool input_slack, double u_max, double r_level = 1.0)
{
    std::mt19937_64 rng(seed);
    Case c{fixture::make_setup("oscillator", 2, 5, seed), {}, BoxConstraints::none(1, 1), {}, {}, {}};
    c.config = fixture::config(c.setup, 2, 5, PastMode::soft, 0.1, 1.0, 0.05);
    c.config.use_input_slack = input_slack;
    c.config.lambda_u = 20.0;
    c.config.lambda_y = 20.0;
    c.box.u_max = Vector::Constant(1, u_max);
    c.box.u_min = Vector::Constant(1, -u_max);
    const fixture::Window w = fixture::past_window(c.setup.plant.linear_model(), 2, rng, 0.3);
    c.u_ini = w.u_ini;
    c.y_ini = w.y_ini;
    c.r = Vector::Constant(5, r_level);
    return c;
}

Vector perturb(const Vector& v, std::mt19937_64& rng, double scale)
{
    return v + scale * oracle::random_vector(rng, v.size());
}

}  // namespace

TEST_SUITE("deene")
{
    TEST_CASE("no active rows gives no multipliers")
    {
        const Case c = make_case(1, true, kInf);
        const PredictiveSolution nom = deepc_step(c.setup.blocks, c.u_ini, c.y_ini, c.r, c.config, c.box);
        CHECK(nom.active_set.empty());
        CHECK(recover_multipliers(nom, c.setup.blocks, c.config, c.box, c.u_ini, c.y_ini, c.r).size() == 0);
    }

    TEST_CASE("multipliers agree with the QP certificate")
    {
        // integrator with u <= 0.25 binding on the first move
        const fixture::Setup s = fixture::make_setup("integrator", 1, 2, 2);
        DeepcConfig cfg = fixture::config(s, 1, 2, PastMode::hard, 1e-3);
        const BoxConstraints box = BoxConstraints::inputs(Vector::Constant(1, -kInf), Vector::Constant(1, 0.25), 1);
        const Vector z = Vector::Zero(1);
        const PredictiveSolution nom = deepc_step(s.blocks, z, z, Vector::Ones(2), cfg, box);
        REQUIRE(nom.active_set.size() == 1);
        const Vector mu = recover_multipliers(nom, s.blocks, cfg, box, z, z, Vector::Ones(2));
        REQUIRE(mu.size() == 1);
        CHECK(mu(0) >= -1e-8);
        CHECK(std::abs(mu(0) - nom.mu(0)) < 1e-6);

        for (std::uint64_t seed = 3; seed < 8; ++seed) {
            const Case c = make_case(seed, false, 0.15);
            const PredictiveSolution n = deepc_step(c.setup.blocks, c.u_ini, c.y_ini, c.r, c.config, c.box);
            if (n.active_set.empty()) {
                continue;
            }
            const Vector m = recover_multipliers(n, c.setup.blocks, c.config, c.box, c.u_ini, c.y_ini, c.r);
            CHECK(max_abs(m - n.mu) < 1e-6 * (1.0 + max_abs(n.mu)));
        }
    }

    TEST_CASE("duplicated active row is rejected")
    {
        const Case c = make_case(4, true, 0.15);
        PredictiveSolution nom = deepc_step(c.setup.blocks, c.u_ini, c.y_ini, c.r, c.config, c.box);
        REQUIRE_FALSE(nom.active_set.empty());
        nom.active_set.push_back(nom.active_set.front());
        CHECK_THROWS_AS(recover_multipliers(nom, c.setup.blocks, c.config, c.box, c.u_ini, c.y_ini, c.r),
                        NumericalError);
        CHECK_THROWS_AS(build_deene(nom, c.setup.blocks, c.config, c.box, c.u_ini, c.y_ini, c.r), NumericalError);
    }

    TEST_CASE("unconstrained gains are the inverse Hessian products")
    {
        const Case c = make_case(5, true, kInf);
        const DataBlocks& b = c.setup.blocks;
        const PredictiveSolution nom = deepc_step(b, c.u_ini, c.y_ini, c.r, c.config, c.box);
        const DeeneGains gains = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r);
        REQUIRE(gains.explicit_gains);
        const Index L = b.cols();
        const DeepcConfig& k = c.config;
        const Matrix UP = b.U_P(), YP = b.Y_P(), UF = b.U_F(), YF = b.Y_F();
        const Matrix J = 2.0 * (YF.transpose() * k.weights.Q * YF + UF.transpose() * k.weights.R * UF +
                                k.lambda_u * UP.transpose() * UP + k.lambda_y * YP.transpose() * YP +
                                k.lambda_g * Matrix::Identity(L, L));
        Matrix Jgw(L, 4);
        Jgw << -2.0 * k.lambda_u * UP.transpose(), -2.0 * k.lambda_y * YP.transpose();
        const Matrix Jgr = -2.0 * YF.transpose() * k.weights.Q;
        const Eigen::LDLT<Matrix> ldlt(J);
        CHECK((gains.K1 - ldlt.solve(-Jgw)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((gains.K2 - ldlt.solve(-Jgr)).cwiseAbs().maxCoeff() < 1e-9);
    }

    TEST_CASE("gains solve the sensitivity system")
    {
        std::mt19937_64 rng(6);
        const Case c = make_case(6, true, 0.15);
        const DataBlocks& b = c.setup.blocks;
        const PredictiveSolution nom = deepc_step(b, c.u_ini, c.y_ini, c.r, c.config, c.box);
        REQUIRE_FALSE(nom.active_set.empty());
        const DeeneGains gains = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r);
        const auto rows = box_rows(b.layout, c.box);
        const Index L = b.cols();
        const Index e = static_cast<Index>(nom.active_set.size());
        Matrix E(e, L);
        for (Index i = 0; i < e; ++i) {
            const BoxRow& br = rows[static_cast<std::size_t>(nom.active_set[static_cast<std::size_t>(i)])];
            E.row(i) = br.sign * b.H.row(br.row);
        }
        const DeepcConfig& k = c.config;
        const Matrix UP = b.U_P(), YP = b.Y_P(), UF = b.U_F(), YF = b.Y_F();
        const Matrix J = 2.0 * (YF.transpose() * k.weights.Q * YF + UF.transpose() * k.weights.R * UF +
                                k.lambda_u * UP.transpose() * UP + k.lambda_y * YP.transpose() * YP +
                                k.lambda_g * Matrix::Identity(L, L));
        Matrix Jgw(L, 4);
        Jgw << -2.0 * k.lambda_u * UP.transpose(), -2.0 * k.lambda_y * YP.transpose();
        const Matrix Jgr = -2.0 * YF.transpose() * k.weights.Q;
        for (int trial = 0; trial < 5; ++trial) {
            const Vector dw = oracle::random_vector(rng, 4);
            const Vector dr = oracle::random_vector(rng, 5);
            const Vector dg = gains.K1 * dw + gains.K2 * dr;
            const Vector dmu = gains.Kmu_w * dw + gains.Kmu_r * dr;
            const Vector top = J * dg + E.transpose() * dmu + Jgw * dw + Jgr * dr;
            CHECK(max_abs(top) < 1e-9 * (1.0 + J.cwiseAbs().maxCoeff()));
            CHECK(max_abs(E * dg) < 1e-9);
        }
    }

    TEST_CASE("convexity is enforced")
    {
        const Case c = make_case(7, true, kInf);
        DeepcConfig cfg = c.config;
        cfg.lambda_g = 0.0;
        const PredictiveSolution nom = deepc_step(c.setup.blocks, c.u_ini, c.y_ini, c.r, cfg, c.box);
        CHECK_THROWS_AS(build_deene(nom, c.setup.blocks, cfg, c.box, c.u_ini, c.y_ini, c.r), NumericalError);
    }

    TEST_CASE("zero perturbation returns the nominal")
    {
        const Case c = make_case(8, false, 0.15);
        const PredictiveSolution nom = deepc_step(c.setup.blocks, c.u_ini, c.y_ini, c.r, c.config, c.box);
        const DeeneGains gains = build_deene(nom, c.setup.blocks, c.config, c.box, c.u_ini, c.y_ini, c.r);
        const DeeneStep st = deene_step(gains, c.setup.blocks, c.box, c.u_ini, c.y_ini, c.r);
        CHECK(max_abs(st.g - nom.decision) == 0.0);
        CHECK(max_abs(st.u - nom.u) < 1e-14);
        CHECK_FALSE(st.refresh);
    }

    TEST_CASE("exact on the unconstrained problem")
    {
        std::mt19937_64 rng(9);
        for (bool slack : {true, false}) {
            const Case c = make_case(9, slack, kInf);
            const DataBlocks& b = c.setup.blocks;
            const PredictiveSolution nom = deepc_step(b, c.u_ini, c.y_ini, c.r, c.config, c.box);
            const DeeneGains gains = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r);
            for (int trial = 0; trial < 5; ++trial) {
                // hard past inputs may only move along the data, so keep u_ini fixed without slack
                const Vector u2 = slack ? perturb(c.u_ini, rng, 0.5) : c.u_ini;
                const Vector y2 = perturb(c.y_ini, rng, 0.5);
                const Vector r2 = perturb(c.r, rng, 1.0);
                const DeeneStep st = deene_step(gains, b, c.box, u2, y2, r2);
                const PredictiveSolution full = deepc_step(b, u2, y2, r2, c.config, c.box);
                CHECK(max_abs(st.u - full.u) < 1e-8);
                CHECK(max_abs(st.y - full.y) < 1e-8);
            }
        }
    }

    TEST_CASE("exact while the active set is unchanged")
    {
        std::mt19937_64 rng(10);
        int compared = 0;
        for (std::uint64_t seed = 20; seed < 40; ++seed) {
            const Case c = make_case(seed, seed % 2 == 0, 0.15);
            const DataBlocks& b = c.setup.blocks;
            const PredictiveSolution nom = deepc_step(b, c.u_ini, c.y_ini, c.r, c.config, c.box);
            const DeeneGains gains = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r);
            for (int trial = 0; trial < 3; ++trial) {
                const Vector u2 = seed % 2 == 0 ? perturb(c.u_ini, rng, 1e-3) : c.u_ini;
                const Vector y2 = perturb(c.y_ini, rng, 1e-3);
                const Vector r2 = perturb(c.r, rng, 1e-3);
                const PredictiveSolution full = deepc_step(b, u2, y2, r2, c.config, c.box);
                if (full.active_set != nom.active_set) {
                    continue;
                }
                const DeeneStep st = deene_step(gains, b, c.box, u2, y2, r2);
                CHECK_FALSE(st.refresh);
                CHECK(max_abs(st.u - full.u) < 1e-8);
                if (!nom.active_set.empty()) {
                    CHECK(max_abs(st.mu - full.mu) < 1e-6 * (1.0 + max_abs(full.mu)));
                }
                ++compared;
            }
        }
        CHECK(compared >= 20);
    }

    TEST_CASE("factorized gains equal explicit gains")
    {
        std::mt19937_64 rng(11);
        const Case c = make_case(11, true, 0.15);
        const DataBlocks& b = c.setup.blocks;
        const PredictiveSolution nom = deepc_step(b, c.u_ini, c.y_ini, c.r, c.config, c.box);
        DeeneOptions lazy;
        lazy.explicit_limit = 0;
        const DeeneGains gx = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r);
        const DeeneGains gf = build_deene(nom, b, c.config, c.box, c.u_ini, c.y_ini, c.r, lazy);
        CHECK(gx.explicit_gains);
        CHECK_FALSE(gf.explicit_gains);
        CHECK(gf.K1.size() == 0);
        const Vector u2 = perturb(c.u_ini, rng, 0.01);
        const Vector y2 = perturb(c.y_ini, rng, 0.01);
        const Vector r2 = perturb(c.r, rng, 0.01);
        const DeeneStep a = deene_step(gx, b, c.box, u2, y2, r2);
        const DeeneStep d = deene_step(gf, b, c.box, u2, y2, r2);
        CHECK(max_abs(a.g - d.g) < 1e-9);
        CHECK(max_abs(a.mu - d.mu) < 1e-9);
    }

    TEST_CASE("refresh triggers")
    {
        const Case c = make_case(12, true, 0.3, 0.0);
        const DataBlocks& b = c.setup.blocks;
        const Vector z2 = Vector::Zero(2);
        const Vector r0 = Vector::Zero(5);
        const PredictiveSolution nom = deepc_step(b, z2, z2, r0, c.config, c.box);
        REQUIRE(nom.active_set.empty());
        const DeeneGains gains = build_deene(nom, b, c.config, c.box, z2, z2, r0);
        CHECK(gains.trust_radius == 10.0);

        // a large reference pushes the inputs through the bound
        const DeeneStep flip = deene_step(gains, b, c.box, z2, z2, Vector::Constant(5, 5.0));
        CHECK(flip.refresh);
        CHECK(flip.reason.find("violated") != std::string::npos);

        const DeeneStep far = deene_step(gains, b, c.box, Vector::Constant(2, 8.0), z2, r0);
        CHECK(far.refresh);

        // an active bound whose multiplier changes sign
        const Vector r_hi = Vector::Constant(5, 3.0);
        const PredictiveSolution act = deepc_step(b, z2, z2, r_hi, c.config, c.box);
        REQUIRE_FALSE(act.active_set.empty());
        const DeeneGains ga = build_deene(act, b, c.config, c.box, z2, z2, r_hi);
        const DeeneStep back = deene_step(ga, b, c.box, z2, z2, -r_hi);
        CHECK(back.refresh);
    }

    TEST_CASE("controller refreshes and tracks DeePC")
    {
        const Case c = make_case(13, true, 0.3, 0.0);
        const DataBlocks& b = c.setup.blocks;
        DeeneOptions opt;
        opt.refresh_every = 4;
        DeeneController ctrl(b, c.config, c.box, opt);
        CHECK(ctrl.decision_dim() == b.cols());
        const Vector z2 = Vector::Zero(2);
        const PredictiveSolution first = ctrl.step(z2, z2, Vector::Zero(5));
        CHECK(ctrl.last_refreshed());
        CHECK(ctrl.refreshes() == 1);
        const Vector r_small = Vector::Constant(5, 0.01);
        ctrl.step(z2, z2, r_small);
        CHECK_FALSE(ctrl.last_refreshed());

        const Vector r_big = Vector::Constant(5, 5.0);
        const PredictiveSolution after = ctrl.step(z2, z2, r_big);
        CHECK(ctrl.last_refreshed());
        CHECK(ctrl.refreshes() == 2);
        const PredictiveSolution ref = deepc_step(b, z2, z2, r_big, c.config, c.box);
        CHECK(max_abs(after.u - ref.u) < 1e-8);
        CHECK(first.u.size() == 5);

        for (int k = 0; k < 4; ++k) {
            ctrl.step(z2, z2, r_big);
        }
        CHECK(ctrl.refreshes() == 3);
        CHECK(ctrl.stored_entries() > 0);
    }
}
