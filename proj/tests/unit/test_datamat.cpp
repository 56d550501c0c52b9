#include "doctest.h"

#include "ddpc/datamat.hpp"
#include "ddpc/error.hpp"

#include "../support/oracles.hpp"

using namespace ddpc;

namespace {

Matrix row(std::initializer_list<double> v)
{
    Matrix m(1, static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) {
        m(0, i++) = x;
    }
    return m;
}

std::vector<Trajectory> plant_data(const std::string& name, Index length, std::uint64_t seed, Index episodes = 1)
{
    ExcitationSpec ex;
    ex.length = length;
    ex.episodes = episodes;
    ex.seed = seed;
    return collect_dataset(make_plant(name), ex);
}

}  // namespace

TEST_SUITE("datamat")
{
    TEST_CASE("hankel by definition")
    {
        const Matrix H = build_hankel(row({1, 2, 3, 4, 5}), 3);
        Matrix expect(3, 3);
        expect << 1, 2, 3, 2, 3, 4, 3, 4, 5;
        CHECK(H == expect);
        CHECK(build_hankel(row({1, 2, 3}), 3) == row({1, 2, 3}).transpose());
        CHECK(numeric_rank(build_hankel(Matrix::Constant(1, 8, 2.0), 3)) == 1);
        CHECK_THROWS_AS(build_hankel(row({1, 2}), 3), InsufficientData);

        std::mt19937_64 rng(1);
        const Matrix w = oracle::random_matrix(rng, 3, 17);
        CHECK(build_hankel(w, 5) == oracle::dense_hankel(w, 5));
    }

    TEST_CASE("mosaic")
    {
        const Matrix H = build_mosaic({row({1, 2, 3}), row({4, 5, 6})}, 2);
        Matrix expect(2, 4);
        expect << 1, 2, 4, 5, 2, 3, 5, 6;
        CHECK(H == expect);

        std::mt19937_64 rng(2);
        const Matrix w = oracle::random_matrix(rng, 2, 12);
        CHECK(build_mosaic({w}, 4) == build_hankel(w, 4));
        const Matrix twice = build_mosaic({w, w}, 4);
        CHECK(twice.leftCols(9) == twice.rightCols(9));
        CHECK_THROWS_AS(build_mosaic({w, row({1, 2})}, 3), DimensionError);
        CHECK_THROWS_AS(build_mosaic({row({1, 2, 3}), row({1, 2})}, 3), InsufficientData);
    }

    TEST_CASE("persistency of excitation")
    {
        CHECK_FALSE(pe_order(Matrix::Ones(1, 10), 2));
        Matrix impulse = Matrix::Zero(1, 8);
        impulse(0, 3) = 1.0;
        CHECK(pe_order(impulse, 2));
        std::mt19937_64 rng(4);
        CHECK(pe_order(oracle::random_matrix(rng, 1, 30), 6));
        CHECK_THROWS(pe_order(Matrix::Ones(1, 2), 3));
    }

    TEST_CASE("minimum data length")
    {
        CHECK(min_data_length(1, 4, 2, 1) == 11);
        CHECK(min_data_length(1, 4, 2, 2) == 12);
        // depth l + 1 with l = n = 1 gives the kernel-representation bound (m + 1)(l + n + 1) - 1
        CHECK(min_data_length(1, 2, 1, 1) == 5);
        CHECK(min_data_length(2, 5, 3, 3) == 25);
    }

    TEST_CASE("numeric rank")
    {
        CHECK(numeric_rank(Matrix::Identity(3, 3)) == 3);
        const Vector a = Vector::LinSpaced(4, 1, 4), b = Vector::LinSpaced(5, -2, 2);
        CHECK(numeric_rank(a * b.transpose()) == 1);
        const auto data = plant_data("integrator", 40, 3);
        const Matrix H = build_hankel(interleave(data[0]), 3);
        CHECK(numeric_rank(H) == 4);
    }

    TEST_CASE("partition shapes and order")
    {
        const auto data = plant_data("integrator", 13, 5);
        const DataBlocks b = partition(data, HankelConfig{1, 3}, 1);
        CHECK(b.cols() == 10);
        CHECK(b.U_P().rows() == 1);
        CHECK(b.U_P().cols() == 10);
        CHECK(b.Y_F().rows() == 3);
        // stacked rows are a permutation of the interleaved Hankel
        const Matrix Hi = build_hankel(interleave(data[0]), 4);
        for (Index j = 0; j < b.cols(); ++j) {
            CHECK(b.U_P()(0, j) == data[0].u(0, j));
            CHECK(b.Y_P()(0, j) == data[0].y(0, j));
            for (Index k = 0; k < 3; ++k) {
                CHECK(b.U_F()(k, j) == data[0].u(0, j + 1 + k));
                CHECK(b.Y_F()(k, j) == data[0].y(0, j + 1 + k));
            }
        }
        CHECK(b.H.rows() == Hi.rows());
        CHECK_NOTHROW(partition(plant_data("integrator", 9, 5), HankelConfig{1, 3}, 1));
        CHECK_THROWS_AS(partition(plant_data("integrator", 8, 5), HankelConfig{1, 3}, 1), InsufficientData);
    }

    TEST_CASE("episodes never mix in a column")
    {
        const auto data = plant_data("oscillator", 15, 6, 2);
        const DataBlocks b = partition(data, HankelConfig{2, 3}, 2);
        CHECK(b.cols() == 2 * (15 - 4));
        for (Index j = 0; j < b.cols(); ++j) {
            const Index e = j < 11 ? 0 : 1;
            const Index start = j - 11 * e;
            CHECK(b.U_P()(0, j) == data[static_cast<std::size_t>(e)].u(0, start));
            CHECK(b.Y_F()(2, j) == data[static_cast<std::size_t>(e)].y(0, start + 4));
        }
    }

    TEST_CASE("rank certificate mK + n on registry and random plants")
    {
        std::vector<std::string> names = {"integrator", "double_integrator", "oscillator"};
        for (int s = 1; s <= 5; ++s) {
            names.push_back("random_lti(seed=" + std::to_string(s) + ")");
        }
        for (const auto& name : names) {
            const Plant p = make_plant(name);
            const Index K = lag(p.linear_model()) + 3;
            const Index T = 3 * min_data_length(p.m(), K, p.n());
            ExcitationSpec ex;
            ex.length = T;
            ex.seed = 9;
            const DataBlocks b = partition(collect_dataset(p, ex), HankelConfig{K - 2, 2}, p.n());
            CAPTURE(name);
            CHECK(b.input_pe);
            CHECK(numeric_rank(b.H) == p.m() * K + p.n());
        }
    }

    TEST_CASE("svd reduction")
    {
        const Trajectory flat{Matrix::Ones(1, 10), Matrix::Constant(1, 10, 2.0)};
        const DataBlocks fb = partition({flat}, HankelConfig{1, 2});
        const SvdReduction one = svd_reduce(fb, 1);
        CHECK(one.H_reduced.cols() == 1);
        CHECK((one.H_reduced * one.V.transpose() - fb.H).cwiseAbs().maxCoeff() < 1e-12);

        const auto data = plant_data("integrator", 40, 3);
        const DataBlocks b = partition(data, HankelConfig{2, 3}, 1);
        SvdOptions opts;
        opts.n = 1;
        const SvdReduction aut = svd_reduce(b, std::nullopt, opts);
        CHECK(aut.rank == 6);
        CHECK((aut.V.transpose() * aut.V - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
        for (Index i = 1; i < aut.singular_values.size(); ++i) {
            CHECK(aut.singular_values(i) <= aut.singular_values(i - 1));
        }
        const double smax = aut.singular_values(0);
        CHECK((aut.H_reduced * aut.V.transpose() - b.H).cwiseAbs().maxCoeff() < 1e-9 * smax);
        // column space preserved: projecting H onto im(H_reduced) leaves nothing
        const Matrix Q = aut.H_reduced.householderQr().householderQ() * Matrix::Identity(b.H.rows(), 6);
        CHECK((b.H - Q * (Q.transpose() * b.H)).norm() < 1e-8 * b.H.norm());
        CHECK_THROWS_AS(svd_reduce(b, 5, opts), ConfigError);
        CHECK_THROWS_AS(svd_reduce(b, 7, opts), ConfigError);

        std::mt19937_64 rng(3);
        Trajectory noisy = data[0];
        noisy.y += 1e-3 * oracle::random_matrix(rng, 1, 40);
        SvdOptions nopts = opts;
        nopts.noise_std = 1e-3;
        CHECK(svd_reduce(partition({noisy}, HankelConfig{2, 3}, 1), std::nullopt, nopts).rank == 6);
    }
}
