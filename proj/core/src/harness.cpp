#include "ddpc/harness.hpp"

#include "ddpc/deene.hpp"
#include "ddpc/dft.hpp"
#include "ddpc/error.hpp"
#include "ddpc/mpc.hpp"
#include "ddpc/naming.hpp"
#include "ddpc/variants.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace ddpc {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void reject_unknown(const CallSpec& call, std::initializer_list<const char*> allowed)
{
    for (const auto& [key, value] : call.args) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("controller '" + call.name + "': unknown parameter '" + key + "'");
        }
    }
}

template <class Ctrl>
class Wrapped : public LoopController {
public:
    template <class... Args>
    explicit Wrapped(Args&&... args) : ctrl_(std::forward<Args>(args)...)
    {
    }
    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override
    {
        return ctrl_.step(u_ini, y_ini, r);
    }
    Index decision_dim() const override { return ctrl_.decision_dim(); }
    std::size_t stored_entries() const override { return ctrl_.stored_entries(); }

private:
    Ctrl ctrl_;
};

// Model-based baseline; the state is reconstructed from the same window the data-driven controllers see.
class MpcLoop : public LoopController {
public:
    MpcLoop(const StateSpaceModel& model, const CostWeights& weights, const BoxConstraints& constraints,
            Index horizon, Index t_ini)
        : mpc_(model, weights, constraints, horizon), t_ini_(t_ini)
    {
        if (t_ini < lag(model)) {
            throw ConfigError("mpc: t_ini is shorter than the plant lag, the state cannot be reconstructed");
        }
    }
    PredictiveSolution step(const Vector& u_ini, const Vector& y_ini, const Vector& r) override
    {
        const StateSpaceModel& model = mpc_.model();
        const auto start = std::chrono::steady_clock::now();
        const Matrix u_hist = Eigen::Map<const Matrix>(u_ini.data(), model.m(), t_ini_);
        const Matrix y_hist = Eigen::Map<const Matrix>(y_ini.data(), model.p(), t_ini_);
        const Vector x = estimate_state_from_history(model, u_hist, y_hist);
        PredictiveSolution sol = mpc_.step(x, r);
        sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return sol;
    }
    Index decision_dim() const override { return mpc_.decision_dim(); }
    std::size_t stored_entries() const override { return mpc_.stored_entries(); }

private:
    MpcController mpc_;
    Index t_ini_;
};

struct NoiseSource {
    NoiseSource(const NoiseSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

    void add(Vector& v, double std)
    {
        if (std > 0.0) {
            for (Index i = 0; i < v.size(); ++i) {
                v(i) += std * normal_(rng_);
            }
        }
    }
    void measurement(Vector& y) { add(y, spec_.measurement_std); }
    void process(Vector& x) { add(x, spec_.process_std); }

    NoiseSpec spec_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

double median_of(std::vector<double> v)
{
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vector reference_window(const ReferenceSpec& ref, Index k, Index horizon, Index p)
{
    Vector r(p * horizon);
    for (Index j = 0; j < horizon; ++j) {
        r.segment(j * p, p).setConstant(ref.at(k + j));
    }
    return r;
}

}  // namespace

double ReferenceSpec::at(Index k) const
{
    switch (kind) {
    case Kind::constant:
        return value;
    case Kind::sinusoid:
        return value + amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period);
    case Kind::piecewise: {
        double v = pieces.empty() ? value : 0.0;
        for (const Piece& piece : pieces) {
            if (piece.start <= k) {
                v = piece.value;
            }
        }
        return v;
    }
    }
    return value;
}

std::string to_string(ReferenceSpec::Kind kind)
{
    switch (kind) {
    case ReferenceSpec::Kind::constant:
        return "constant";
    case ReferenceSpec::Kind::sinusoid:
        return "sinusoid";
    case ReferenceSpec::Kind::piecewise:
        return "piecewise";
    }
    return "constant";
}

DeepcConfig Scenario::deepc_config(Index m, Index p) const
{
    DeepcConfig c;
    c.weights = CostWeights::uniform(m, p, horizon, q, r);
    c.lambda_g = deepc.lambda_g;
    c.lambda_u = deepc.lambda_u;
    c.lambda_y = deepc.lambda_y;
    c.t_ini = t_ini;
    c.horizon = horizon;
    c.past = deepc.past;
    c.use_input_slack = deepc.input_slack;
    return c;
}

BoxConstraints Scenario::constraints(Index m, Index p) const
{
    BoxConstraints c;
    c.u_min = Vector::Constant(m, u_min);
    c.u_max = Vector::Constant(m, u_max);
    c.y_min = Vector::Constant(p, y_min);
    c.y_max = Vector::Constant(p, y_max);
    return c;
}

ScenarioData prepare_data(const Scenario& s)
{
    if (s.horizon < 1 || s.t_ini < 1 || s.steps < 1) {
        throw ConfigError("scenario '" + s.name + "': horizon, t_ini and steps must be positive");
    }
    if (s.data.episodes < 1) {
        throw ConfigError("scenario '" + s.name + "': data.episodes must be positive");
    }
    Plant plant = make_plant(s.plant);
    const Index K = s.t_ini + s.horizon;
    ExcitationSpec ex;
    ex.kind = s.data.excitation;
    ex.amplitude = s.data.amplitude;
    ex.episodes = s.data.episodes;
    ex.initial_state_std = s.data.initial_state_std;
    ex.length = s.data.length > 0 ? s.data.length : 2 * min_data_length(plant.m(), K, plant.n());
    ex.seed = derive_seed(s.seed, 1);
    NoiseSpec noise = s.noise;
    noise.seed = derive_seed(s.seed, 3);
    std::vector<Trajectory> trajectories = collect_dataset(plant, ex, noise);
    DataBlocks blocks = partition(trajectories, HankelConfig{s.t_ini, s.horizon}, plant.n());
    return ScenarioData{std::move(plant), std::move(trajectories), std::move(blocks)};
}

std::vector<std::string> controller_names()
{
    return {"mpc", "deepc", "deepc_decomposed", "spc", "npc", "ro_deepc", "eddpc", "rs_deepc", "dft_deepc", "deene"};
}

std::unique_ptr<LoopController> make_controller(const std::string& spec, const Scenario& s, const ScenarioData& data)
{
    const CallSpec call = parse_call(spec);
    const Index m = data.plant.m();
    const Index p = data.plant.p();
    const DeepcConfig config = s.deepc_config(m, p);
    const BoxConstraints box = s.constraints(m, p);
    const DataBlocks& blocks = data.blocks;
    const std::string& name = call.name;

    if (name == "mpc") {
        reject_unknown(call, {});
        return std::make_unique<MpcLoop>(data.plant.linear_model(), config.weights, box, s.horizon, s.t_ini);
    }
    if (name == "deepc") {
        reject_unknown(call, {});
        return std::make_unique<Wrapped<DeepcController>>(blocks, config, box);
    }
    if (name == "deepc_decomposed") {
        reject_unknown(call, {});
        return std::make_unique<Wrapped<DecomposedController>>(blocks, config, box);
    }
    if (name == "spc") {
        reject_unknown(call, {});
        return std::make_unique<Wrapped<SpcController>>(fit_spc(blocks), config, box);
    }
    if (name == "npc") {
        reject_unknown(call, {});
        return std::make_unique<Wrapped<NpcController>>(build_npc(blocks), blocks, config, box);
    }
    if (name == "ro_deepc") {
        reject_unknown(call, {"r_a"});
        std::optional<Index> r_a;
        const auto arg = call.get("r_a");
        if (arg && *arg != "auto") {
            r_a = call.get_int("r_a", 0);
        }
        SvdOptions opts;
        opts.noise_std = s.noise.measurement_std;
        opts.n = data.plant.n();
        return std::make_unique<Wrapped<RoDeepcController>>(svd_reduce(blocks, r_a, opts), config, box);
    }
    if (name == "eddpc") {
        reject_unknown(call, {"M"});
        const Index M = call.get_int("M", static_cast<long>(lag(data.plant.linear_model()) + 1));
        const KernelRep rep = build_kernel_rep(data.trajectories, M, s.t_ini + s.horizon, data.plant.n());
        return std::make_unique<Wrapped<EddpcController>>(rep, blocks.layout, config, box);
    }
    if (name == "rs_deepc") {
        reject_unknown(call, {});
        return std::make_unique<Wrapped<RsDeepcController>>(build_range_space(blocks), config, box);
    }
    if (name == "dft_deepc") {
        reject_unknown(call, {"tol", "max_iter"});
        if (data.trajectories.size() != 1) {
            throw ConfigError("dft_deepc needs single-episode data");
        }
        MatfreeOptions opts;
        opts.tol = call.get_double("tol", opts.tol);
        opts.max_iter = static_cast<int>(call.get_int("max_iter", opts.max_iter));
        return std::make_unique<Wrapped<DftDeepcController>>(interleave(data.trajectories.front()), blocks.layout,
                                                             config, box, opts);
    }
    if (name == "deene") {
        reject_unknown(call, {"tol_viol", "trust_radius", "refresh_every"});
        DeeneOptions opts;
        opts.tol_viol = call.get_double("tol_viol", opts.tol_viol);
        opts.trust_radius = call.get_double("trust_radius", opts.trust_radius);
        opts.refresh_every = static_cast<int>(call.get_int("refresh_every", opts.refresh_every));
        if (opts.refresh_every < 1) {
            throw ConfigError("deene: refresh_every must be positive");
        }
        return std::make_unique<Wrapped<DeeneController>>(blocks, config, box, opts);
    }
    throw ConfigError("unknown controller '" + name + "'");
}

StepFailure::StepFailure(Index step, const std::string& what)
    : Error("step " + std::to_string(step) + ": " + what), step_(step)
{
}

ClosedLoopResult run_closed_loop(const Scenario& scenario)
{
    const ScenarioData data = prepare_data(scenario);
    return run_closed_loop(scenario, data);
}

ClosedLoopResult run_closed_loop(const Scenario& s, const ScenarioData& data)
{
    const Plant& plant = data.plant;
    const Index m = plant.m();
    const Index p = plant.p();
    const Index n = plant.n();
    std::unique_ptr<LoopController> ctrl = make_controller(s.controller, s, data);
    const BoxConstraints box = s.constraints(m, p);

    Vector x = Vector::Zero(n);
    if (s.x0) {
        require(s.x0->size() == n, "run_closed_loop: x0 has wrong dimension");
        x = *s.x0;
    }
    NoiseSource noise(s.noise, derive_seed(s.seed, 2));
    const Index T = s.t_ini;
    // rolling window of the last T samples, time-major
    Vector u_win = Vector::Zero(m * T);
    Vector y_win = Vector::Zero(p * T);
    auto advance = [&](const Vector& u) {
        Vector y = plant.output(x, u);
        noise.measurement(y);
        x = plant.next_state(x, u);
        noise.process(x);
        if (T > 1) {
            u_win.head(m * (T - 1)) = u_win.tail(m * (T - 1)).eval();
            y_win.head(p * (T - 1)) = y_win.tail(p * (T - 1)).eval();
        }
        u_win.tail(m) = u;
        y_win.tail(p) = y;
        return y;
    };
    for (Index k = 0; k < T; ++k) {
        advance(Vector::Zero(m));
    }

    ClosedLoopResult res;
    res.u.resize(m, s.steps);
    res.y.resize(p, s.steps);
    res.r.resize(p, s.steps);
    res.solve_seconds.reserve(static_cast<std::size_t>(s.steps));
    res.stored_entries = ctrl->stored_entries();
    res.decision_dim = ctrl->decision_dim();
    double sq = 0.0;
    for (Index k = 0; k < s.steps; ++k) {
        const Vector r = reference_window(s.reference, k, s.horizon, p);
        PredictiveSolution sol;
        const auto start = std::chrono::steady_clock::now();
        try {
            sol = ctrl->step(u_win, y_win, r);
        } catch (const std::exception& e) {
            throw StepFailure(k, e.what());
        }
        res.solve_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        const Vector u = sol.u.head(m);
        const Vector y = advance(u);
        res.u.col(k) = u;
        res.y.col(k) = y;
        res.r.col(k) = r.head(p);

        const Vector e = y - r.head(p);
        sq += e.squaredNorm();
        res.tracking_cost += s.q * e.squaredNorm() + s.r * u.squaredNorm();
        double worst = 0.0;
        worst = std::max(worst, (u - box.u_max).maxCoeff());
        worst = std::max(worst, (box.u_min - u).maxCoeff());
        worst = std::max(worst, (y - box.y_max).maxCoeff());
        worst = std::max(worst, (box.y_min - y).maxCoeff());
        if (worst > 1e-9) {
            ++res.violations;
            res.max_violation = std::max(res.max_violation, worst);
        }
    }
    res.rmse = std::sqrt(sq / static_cast<double>(s.steps * p));
    // footprint after the run, when lazily built gains exist
    res.stored_entries = std::max(res.stored_entries, ctrl->stored_entries());
    return res;
}

Metrics summarize(const ClosedLoopResult& result)
{
    Metrics mt;
    const Index steps = result.y.cols();
    const Index p = result.y.rows();
    if (steps > 0 && p > 0) {
        mt.rmse = std::sqrt((result.y - result.r).squaredNorm() / static_cast<double>(steps * p));
    }
    mt.tracking_cost = result.tracking_cost;
    if (!result.solve_seconds.empty()) {
        double total = 0.0;
        for (double t : result.solve_seconds) {
            total += t;
        }
        mt.mean_solve = total / static_cast<double>(result.solve_seconds.size());
        mt.median_solve = median_of(result.solve_seconds);
        mt.max_solve = *std::max_element(result.solve_seconds.begin(), result.solve_seconds.end());
    }
    mt.violations = result.violations;
    mt.max_violation = result.max_violation;
    mt.stored_entries = result.stored_entries;
    mt.decision_dim = result.decision_dim;
    return mt;
}

std::vector<ResultRow> run_suite(const std::vector<SuiteScenario>& suite, const SuiteOptions& options)
{
    struct Job {
        std::size_t group;
        std::string controller;
    };
    std::vector<std::optional<ScenarioData>> data(suite.size());
    std::vector<std::string> data_errors(suite.size());
    std::vector<Job> jobs;
    std::vector<ResultRow> rows;
    for (std::size_t g = 0; g < suite.size(); ++g) {
        try {
            data[g] = prepare_data(suite[g].scenario);
        } catch (const std::exception& e) {
            data_errors[g] = e.what();
        }
        for (const std::string& c : suite[g].controllers) {
            jobs.push_back({g, c});
            ResultRow row;
            row.scenario = suite[g].scenario.name;
            row.controller = c;
            row.plant = suite[g].scenario.plant;
            row.steps = suite[g].scenario.steps;
            rows.push_back(std::move(row));
        }
    }

    const int reps = std::max(1, options.timing_reps);
    auto execute = [&](std::size_t i) {
        const Job& job = jobs[i];
        ResultRow& row = rows[i];
        if (!data[job.group]) {
            row.status = "error: " + data_errors[job.group];
            return;
        }
        Scenario s = suite[job.group].scenario;
        s.controller = job.controller;
        try {
            ClosedLoopResult first = run_closed_loop(s, *data[job.group]);
            if (reps > 1) {
                std::vector<std::vector<double>> per_step(first.solve_seconds.size());
                for (std::size_t k = 0; k < per_step.size(); ++k) {
                    per_step[k].push_back(first.solve_seconds[k]);
                }
                for (int rep = 1; rep < reps; ++rep) {
                    const ClosedLoopResult again = run_closed_loop(s, *data[job.group]);
                    for (std::size_t k = 0; k < per_step.size(); ++k) {
                        per_step[k].push_back(again.solve_seconds[k]);
                    }
                }
                for (std::size_t k = 0; k < per_step.size(); ++k) {
                    first.solve_seconds[k] = median_of(per_step[k]);
                }
            }
            row.metrics = summarize(first);
            if (options.keep_trajectories) {
                row.trajectory = std::move(first);
            }
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
    };

    const int workers = std::max(1, std::min<int>(options.jobs, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            execute(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) {
                    execute(i);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    return rows;
}

namespace {

// Seeded consistent initial window and reference for a random LTI plant.
struct Probe {
    Vector u_ini, y_ini, r;
};

Probe make_probe(const StateSpaceModel& model, const BlockLayout& lay, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x0(model.n());
    for (Index i = 0; i < x0.size(); ++i) {
        x0(i) = normal(rng);
    }
    Matrix u(model.m(), lay.t_ini);
    for (Index i = 0; i < u.size(); ++i) {
        u.data()[i] = normal(rng);
    }
    const Trajectory t = simulate(model, x0, u);
    Probe pr;
    pr.u_ini = Eigen::Map<const Vector>(t.u.data(), t.u.size());
    pr.y_ini = Eigen::Map<const Vector>(t.y.data(), t.y.size());
    pr.r.resize(lay.p * lay.horizon);
    for (Index i = 0; i < pr.r.size(); ++i) {
        pr.r(i) = normal(rng);
    }
    return pr;
}

double max_abs_diff(const Vector& a, const Vector& b)
{
    return a.size() == b.size() ? (a - b).cwiseAbs().maxCoeff() : kInf;
}

CheckResult check(const std::string& name, double err, double tol)
{
    std::ostringstream os;
    os << "max deviation " << err << " (tolerance " << tol << ")";
    return {name, err <= tol, os.str()};
}

template <class F>
CheckResult guarded(const std::string& name, F&& f)
{
    try {
        return f();
    } catch (const std::exception& e) {
        return {name, false, std::string("error: ") + e.what()};
    }
}

}  // namespace

std::vector<CheckResult> equivalence_suite(std::uint64_t seed)
{
    std::vector<CheckResult> out;
    std::mt19937_64 rng(derive_seed(seed, 9));
    const std::string plant_spec = "random_lti(m=1,n=3,p=1,seed=" + std::to_string(seed) + ")";

    out.push_back(guarded("mpc_deepc_closed_loop", [&] {
        Scenario s;
        s.plant = plant_spec;
        s.t_ini = 4;
        s.horizon = 8;
        s.steps = 20;
        s.deepc.past = PastMode::hard;
        s.u_min = -0.5;
        s.u_max = 0.5;
        s.x0 = Vector::Ones(3);
        s.seed = seed;
        const ScenarioData data = prepare_data(s);
        s.controller = "mpc";
        const ClosedLoopResult a = run_closed_loop(s, data);
        s.controller = "deepc";
        const ClosedLoopResult b = run_closed_loop(s, data);
        return check("mpc_deepc_closed_loop", (a.u - b.u).cwiseAbs().maxCoeff(), 1e-6);
    }));

    Scenario base;
    base.plant = plant_spec;
    base.t_ini = 4;
    base.horizon = 6;
    base.deepc.past = PastMode::hard;
    base.u_min = -0.3;
    base.u_max = 0.3;
    base.seed = seed;
    std::optional<ScenarioData> data;
    try {
        data = prepare_data(base);
    } catch (const std::exception& e) {
        out.push_back({"single_step_variants", false, std::string("error: ") + e.what()});
        return out;
    }
    const Plant& plant = data->plant;
    const BlockLayout& lay = data->blocks.layout;
    const Probe probe = make_probe(plant.linear_model(), lay, rng);
    const DeepcConfig config = base.deepc_config(plant.m(), plant.p());
    const BoxConstraints box = base.constraints(plant.m(), plant.p());
    const PredictiveSolution ref = deepc_step(data->blocks, probe.u_ini, probe.y_ini, probe.r, config, box);

    const std::vector<std::string> variants = {"spc", "npc",
                                               "ro_deepc(r_a=" + std::to_string(numeric_rank(data->blocks.H)) + ")",
                                               "eddpc", "rs_deepc", "deepc_decomposed"};
    for (const std::string& name : variants) {
        out.push_back(guarded(name + "_matches_deepc", [&] {
            auto ctrl = make_controller(name, base, *data);
            const PredictiveSolution sol = ctrl->step(probe.u_ini, probe.y_ini, probe.r);
            const double err = std::max(max_abs_diff(sol.u, ref.u), max_abs_diff(sol.y, ref.y));
            return check(name + "_matches_deepc", err, name == "deepc_decomposed" ? 1e-8 : 1e-6);
        }));
    }

    out.push_back(guarded("dft_matches_closed_form", [&] {
        DeepcConfig c = config;
        c.past = PastMode::soft;
        c.use_input_slack = true;
        c.lambda_g = 1e-2;
        const DeepcGains gains = unconstrained_deepc_gains(data->blocks, c);
        Vector w(probe.u_ini.size() + probe.y_ini.size());
        w << probe.u_ini, probe.y_ini;
        const Vector u_closed = gains.K_r * probe.r + gains.K_ini * w;
        const DftFactorization fact(interleave(data->trajectories.front()), lay.depth());
        const MatfreeResult mf = matfree_deepc_unconstrained(fact, lay, probe.u_ini, probe.y_ini, probe.r, c);
        return check("dft_matches_closed_form", max_abs_diff(mf.solution.u, u_closed), 1e-6);
    }));

    out.push_back(guarded("deene_matches_resolve", [&] {
        DeepcConfig c = config;
        c.past = PastMode::soft;
        c.lambda_g = 1e-1;
        const BoxConstraints none = BoxConstraints::none(plant.m(), plant.p());
        const PredictiveSolution nominal = deepc_step(data->blocks, probe.u_ini, probe.y_ini, probe.r, c, none);
        const DeeneGains gains = build_deene(nominal, data->blocks, c, none, probe.u_ini, probe.y_ini, probe.r);
        std::normal_distribution<double> normal(0.0, 0.1);
        Vector u2 = probe.u_ini;
        Vector y2 = probe.y_ini;
        Vector r2 = probe.r;
        for (Index i = 0; i < y2.size(); ++i) {
            y2(i) += normal(rng);
        }
        for (Index i = 0; i < r2.size(); ++i) {
            r2(i) += normal(rng);
        }
        const DeeneStep st = deene_step(gains, data->blocks, none, u2, y2, r2);
        const PredictiveSolution full = deepc_step(data->blocks, u2, y2, r2, c, none);
        return check("deene_matches_resolve", max_abs_diff(st.u, full.u), 1e-8);
    }));
    return out;
}

}  // namespace ddpc
