// One receding-horizon step per controller on an oscillator with T = 1000 data samples.
#include "ddpc/deene.hpp"
#include "ddpc/deepc.hpp"
#include "ddpc/harness.hpp"
#include "ddpc/variants.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

struct Problem {
    ddpc::Scenario scenario;
    ddpc::ScenarioData data;
    ddpc::Vector u_ini, y_ini, r;
};

const Problem& problem()
{
    static const Problem p = [] {
        ddpc::Scenario s;
        s.plant = "oscillator";
        s.t_ini = 4;
        s.horizon = 10;
        s.data.length = 1000;
        s.deepc.lambda_g = 1.0;
        s.deepc.input_slack = true;
        s.u_min = -1.0;
        s.u_max = 1.0;
        ddpc::ScenarioData d = ddpc::prepare_data(s);
        // a past window taken from the recorded data
        const ddpc::Trajectory& t = d.trajectories.front();
        ddpc::Vector u(s.t_ini), y(s.t_ini);
        for (ddpc::Index k = 0; k < s.t_ini; ++k) {
            u(k) = t.u(0, 100 + k);
            y(k) = t.y(0, 100 + k);
        }
        return Problem{s, std::move(d), u, y, ddpc::Vector::Constant(s.horizon, 0.5)};
    }();
    return p;
}

void run(benchmark::State& state, const char* name)
{
    const Problem& p = problem();
    auto ctrl = ddpc::make_controller(name, p.scenario, p.data);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> jitter(0.0, 1e-3);
    ddpc::Vector y = p.y_ini;
    for (auto _ : state) {
        state.PauseTiming();
        for (ddpc::Index i = 0; i < y.size(); ++i) {
            y(i) = p.y_ini(i) + jitter(rng);
        }
        state.ResumeTiming();
        benchmark::DoNotOptimize(ctrl->step(p.u_ini, y, p.r));
    }
    state.counters["decision_dim"] = static_cast<double>(ctrl->decision_dim());
    state.counters["stored_entries"] = static_cast<double>(ctrl->stored_entries());
}

}  // namespace

BENCHMARK_CAPTURE(run, deepc, "deepc")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(run, ro_deepc, "ro_deepc")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(run, spc, "spc")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(run, rs_deepc, "rs_deepc")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(run, deene, "deene(refresh_every=1000000)")->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
