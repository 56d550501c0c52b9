#pragma once

#include "ddpc/deepc.hpp"
#include "ddpc/error.hpp"
#include "ddpc/plant.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ddpc {

/// Scalar reference applied to every output channel.
struct ReferenceSpec {
    enum class Kind { constant, sinusoid, piecewise };
    struct Piece {
        Index start = 0;
        double value = 0.0;
    };

    Kind kind = Kind::constant;
    double value = 1.0;      // constant level, or offset of the sinusoid
    double amplitude = 1.0;  // sinusoid
    double period = 20.0;    // sinusoid, in steps
    std::vector<Piece> pieces;  // piecewise: value from `start` onward, sorted by start

    double at(Index k) const;
};

std::string to_string(ReferenceSpec::Kind kind);

struct DataSpec {
    Index length = 0;  // samples per episode; 0 picks twice the single-episode minimum
    Index episodes = 1;
    Excitation excitation = Excitation::gaussian;
    double amplitude = 1.0;
    double initial_state_std = 1.0;
};

struct DeepcSettings {
    double lambda_g = 0.0;
    double lambda_u = 1e3;
    double lambda_y = 1e3;
    PastMode past = PastMode::soft;
    bool input_slack = false;
};

struct Scenario {
    std::string name = "scenario";
    std::string plant = "integrator";
    std::string controller = "deepc";
    ReferenceSpec reference;
    Index horizon = 10;
    Index t_ini = 2;
    Index steps = 50;
    double q = 1.0;
    double r = 1e-2;
    DeepcSettings deepc;
    double u_min = -kInf;
    double u_max = kInf;
    double y_min = -kInf;
    double y_max = kInf;
    NoiseSpec noise;  // measurement noise by default; seed is derived from the scenario seed
    DataSpec data;
    std::uint64_t seed = 1;
    std::optional<Vector> x0;  // zero when absent

    DeepcConfig deepc_config(Index m, Index p) const;
    BoxConstraints constraints(Index m, Index p) const;
};

/// Plant and offline data of a scenario, shared read-only by all its controllers.
struct ScenarioData {
    Plant plant;
    std::vector<Trajectory> trajectories;
    DataBlocks blocks;
};

ScenarioData prepare_data(const Scenario& scenario);

/// A predictive controller in the closed loop; histories are stacked time-major.
class LoopController {
public:
    virtual ~LoopController() = default;
    virtual PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) = 0;
    virtual Index decision_dim() const = 0;
    virtual std::size_t stored_entries() const = 0;
};

/// Builds a controller from a name such as `deepc`, `ro_deepc(r_a=6)` or `eddpc(M=3)`.
std::unique_ptr<LoopController> make_controller(const std::string& spec, const Scenario& scenario,
                                                const ScenarioData& data);
std::vector<std::string> controller_names();

struct ClosedLoopResult {
    Matrix u;  // m x steps, applied inputs
    Matrix y;  // p x steps, measured outputs
    Matrix r;  // p x steps
    std::vector<double> solve_seconds;
    Index violations = 0;
    double max_violation = 0.0;
    double tracking_cost = 0.0;
    double rmse = 0.0;
    std::size_t stored_entries = 0;
    Index decision_dim = 0;
};

/// Error raised by a controller during the loop, tagged with the step index.
class StepFailure : public Error {
public:
    StepFailure(Index step, const std::string& what);
    Index step() const { return step_; }

private:
    Index step_;
};

ClosedLoopResult run_closed_loop(const Scenario& scenario);
ClosedLoopResult run_closed_loop(const Scenario& scenario, const ScenarioData& data);

struct Metrics {
    double rmse = 0.0;
    double tracking_cost = 0.0;
    double mean_solve = 0.0;
    double median_solve = 0.0;
    double max_solve = 0.0;
    Index violations = 0;
    double max_violation = 0.0;
    std::size_t stored_entries = 0;
    Index decision_dim = 0;
};

Metrics summarize(const ClosedLoopResult& result);

struct SuiteScenario {
    Scenario scenario;                     // `controller` is ignored
    std::vector<std::string> controllers;
};

struct SuiteOptions {
    int jobs = 1;
    int timing_reps = 1;  // closed-loop repetitions; timing columns take the per-step median
    bool keep_trajectories = true;
};

struct ResultRow {
    std::string scenario;
    std::string controller;
    std::string plant;
    Index steps = 0;
    Metrics metrics;
    std::string status = "ok";
    std::optional<ClosedLoopResult> trajectory;

    bool ok() const { return status == "ok"; }
};

/// One row per (scenario, controller), in input order. Failures are recorded in the row.
std::vector<ResultRow> run_suite(const std::vector<SuiteScenario>& suite, const SuiteOptions& options = {});

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Quick cross-variant equivalence checks on small seeded problems.
std::vector<CheckResult> equivalence_suite(std::uint64_t seed = 7);

}  // namespace ddpc
