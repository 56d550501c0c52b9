#pragma once

// Shared scenario builders for the unit tests.

#include "ddpc/datamat.hpp"
#include "ddpc/deepc.hpp"
#include "ddpc/plant.hpp"

#include <optional>
#include <random>
#include <string>

namespace fixture {

using namespace ddpc;

struct Setup {
    Plant plant;
    DataBlocks blocks;
    std::vector<Trajectory> data;
};

inline Setup make_setup(const Plant& plant, Index t_ini, Index horizon, std::uint64_t seed, Index length = 0,
                        double noise_std = 0.0, Index episodes = 1)
{
    const Index K = t_ini + horizon;
    ExcitationSpec ex;
    ex.length = length > 0 ? length : 2 * min_data_length(plant.m(), K, plant.n()) + 10;
    ex.episodes = episodes;
    ex.seed = seed;
    NoiseSpec noise;
    noise.measurement_std = noise_std;
    noise.seed = seed + 1000;
    std::vector<Trajectory> data = collect_dataset(plant, ex, noise);
    DataBlocks blocks = partition(data, {t_ini, horizon}, noise_std > 0.0 ? std::nullopt : std::optional<Index>(plant.n()));
    return {plant, std::move(blocks), std::move(data)};
}

inline Setup make_setup(const std::string& plant, Index t_ini, Index horizon, std::uint64_t seed, Index length = 0,
                        double noise_std = 0.0, Index episodes = 1)
{
    return make_setup(make_plant(plant), t_ini, horizon, seed, length, noise_std, episodes);
}

inline DeepcConfig config(const Setup& s, Index t_ini, Index horizon, PastMode past, double lambda_g = 0.0,
                          double q = 1.0, double r = 1.0)
{
    DeepcConfig c;
    c.weights = CostWeights::uniform(s.plant.m(), s.plant.p(), horizon, q, r);
    c.t_ini = t_ini;
    c.horizon = horizon;
    c.past = past;
    c.lambda_g = lambda_g;
    return c;
}

// A past window (u_ini, y_ini) generated by the true model, plus the state at its end.
struct Window {
    Vector u_ini;
    Vector y_ini;
    Vector x;
};

inline Window past_window(const StateSpaceModel& model, Index t_ini, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector x0(model.n());
    for (Index i = 0; i < x0.size(); ++i) {
        x0(i) = n(rng);
    }
    Matrix u(model.m(), t_ini);
    for (Index i = 0; i < u.size(); ++i) {
        u.data()[i] = n(rng);
    }
    const Rollout ro = rollout(model, x0, u);
    Window w;
    w.u_ini = Eigen::Map<const Vector>(ro.trajectory.u.data(), ro.trajectory.u.size());
    w.y_ini = Eigen::Map<const Vector>(ro.trajectory.y.data(), ro.trajectory.y.size());
    w.x = ro.states.col(t_ini);
    return w;
}

inline double max_abs(const Vector& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace fixture
