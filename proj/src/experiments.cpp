#include "dar/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dar/parallel.hpp"

namespace dar {

namespace {

constexpr std::uint64_t kSharedStream = ~0ULL;

std::string path_in(const std::string& dir, const std::string& name) {
    return dir.empty() ? name : dir + "/" + name;
}

std::string n_suffix(int n) { return "_n" + std::to_string(n); }

double ode_step_for(const ExperimentSpec& spec, const OdeParams& params) {
    if (spec.ode_step > 0.0) return spec.ode_step;
    return std::min(0.01, max_step(params));
}

bool shared_initial(const InitialSpec& initial) {
    return initial.kind != InitialKind::RandomAllocation || initial.shared;
}

// Does a changed call alter a link (p, q) with exactly one end in {u, v}
// or both ends in {u, v} but not the link {u, v} itself?
bool touches(const Call& c, Node u, Node v) {
    auto link = [&](Node p, Node q) {
        const bool pu = p == u || p == v;
        const bool qu = q == u || q == v;
        return (pu || qu) && !(pu && qu);
    };
    if (c.direct()) return link(c.u, c.v);
    return link(c.u, c.via) || link(c.v, c.via);
}

}  // namespace

std::string_view to_string(ExperimentKind kind) noexcept {
    switch (kind) {
        case ExperimentKind::Lln: return "lln";
        case ExperimentKind::Concentration: return "conc";
        case ExperimentKind::PhiDrift: return "phi";
        case ExperimentKind::CouplingGrowth: return "couple";
        case ExperimentKind::GeneratorCheck: return "gencheck";
        case ExperimentKind::OdeOnly: return "ode";
    }
    return "lln";
}

ExperimentKind parse_experiment(std::string_view text) {
    for (const auto k : {ExperimentKind::Lln, ExperimentKind::Concentration, ExperimentKind::PhiDrift,
                         ExperimentKind::CouplingGrowth, ExperimentKind::GeneratorCheck, ExperimentKind::OdeOnly})
        if (text == to_string(k)) return k;
    throw std::invalid_argument("unknown experiment '" + std::string(text) + "'");
}

std::string_view to_string(InitialKind kind) noexcept {
    switch (kind) {
        case InitialKind::Empty: return "empty";
        case InitialKind::RandomAllocation: return "random";
        case InitialKind::FromFile: return "file";
    }
    return "empty";
}

InitialKind parse_initial(std::string_view text) {
    if (text == "empty") return InitialKind::Empty;
    if (text == "random") return InitialKind::RandomAllocation;
    if (text == "file") return InitialKind::FromFile;
    throw std::invalid_argument("unknown initial state kind '" + std::string(text) + "'");
}

void ExperimentSpec::validate() const {
    if (n_grid.empty()) throw std::invalid_argument("n_grid must not be empty");
    for (int n : n_grid) params_for(n).validate();
    if (replicas < 0) throw std::invalid_argument("replicas must be >= 0");
    if (replicas == 0 && kind != ExperimentKind::Lln && kind != ExperimentKind::OdeOnly)
        throw std::invalid_argument("replicas must be >= 1");
    if (!(sim.t0 > 0.0)) throw std::invalid_argument("t0 must be positive");
    if (grid_points < 1) throw std::invalid_argument("grid_points must be >= 1");
    if (initial.kind == InitialKind::RandomAllocation && !(initial.c0 > 0.0))
        throw std::invalid_argument("c0 must be positive");
    if (initial.kind == InitialKind::FromFile && initial.path.empty())
        throw std::invalid_argument("initial state file not given");
    if (kind == ExperimentKind::Concentration && replicas < 50)
        throw std::invalid_argument("concentration needs at least 50 replicas");
    if (kind == ExperimentKind::PhiDrift && (phi_samples < 1 || phi_every < 1 || phi_batches < 2))
        throw std::invalid_argument("phi drift needs phi_samples >= 1, phi_every >= 1, phi_batches >= 2");
    if (kind == ExperimentKind::CouplingGrowth && (coupling_steps < 0 || coupling_offset < 0))
        throw std::invalid_argument("coupling steps and offset must be nonnegative");
    if (kind == ExperimentKind::GeneratorCheck && (gencheck_states < 1 || gencheck_prefix < 0))
        throw std::invalid_argument("generator check needs states >= 1");
    const std::vector<double> grid = snapshot_grid();
    for (double s : grid)
        if (s < 0.0 || s > sim.t0) throw std::invalid_argument("snapshot grid outside [0, t0]");
    if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("snapshot grid must be sorted");
}

ModelParams ExperimentSpec::params_for(int n) const {
    ModelParams p = sim.params;
    p.n = n;
    return p;
}

std::vector<double> ExperimentSpec::snapshot_grid() const {
    if (!sim.snapshot_times.empty()) return sim.snapshot_times;
    return uniform_grid(sim.t0, grid_points);
}

KeyValueConfig ExperimentSpec::to_config() const {
    KeyValueConfig c;
    c.set("kind", std::string(to_string(kind)));
    c.set("params.capacity", std::to_string(sim.params.capacity));
    c.set("params.choices", std::to_string(sim.params.choices));
    c.set("params.lambda", format_double(sim.params.lambda));
    c.set("params.n", std::to_string(sim.params.n));
    c.set("policy", std::string(to_string(sim.policy)));
    c.set("mode", std::string(to_string(sim.mode)));
    c.set("seed", std::to_string(sim.seed));
    c.set("t0", format_double(sim.t0));
    c.set("snapshot_times", join(sim.snapshot_times));
    c.set("nodes", join(sim.nodes));
    c.set("record_phi", sim.record_phi ? "true" : "false");
    c.set("n_grid", join(n_grid));
    c.set("replicas", std::to_string(replicas));
    c.set("initial", std::string(to_string(initial.kind)));
    c.set("c0", format_double(initial.c0));
    c.set("initial_path", initial.path);
    c.set("shared_initial", initial.shared ? "true" : "false");
    c.set("output_dir", output_dir);
    c.set("grid_points", std::to_string(grid_points));
    c.set("threads", std::to_string(threads));
    c.set("ode_step", format_double(ode_step));
    c.set("write_trajectories", write_trajectories ? "true" : "false");
    c.set("coupling_steps", std::to_string(coupling_steps));
    c.set("coupling_offset", std::to_string(coupling_offset));
    c.set("phi_samples", std::to_string(phi_samples));
    c.set("phi_every", std::to_string(phi_every));
    c.set("phi_batches", std::to_string(phi_batches));
    c.set("gencheck_states", std::to_string(gencheck_states));
    c.set("gencheck_prefix", std::to_string(gencheck_prefix));
    return c;
}

ExperimentSpec ExperimentSpec::from_config(const KeyValueConfig& c) {
    ExperimentSpec s;
    auto as_int = [](long long v) { return static_cast<int>(v); };
    if (auto v = c.get("kind")) s.kind = parse_experiment(*v);
    // Bare model names are accepted as aliases of the params.* keys.
    for (const std::string prefix : {"", "params."}) {
        if (auto v = c.get_int(prefix + "n")) s.sim.params.n = as_int(*v);
        if (auto v = c.get_int(prefix + "capacity")) s.sim.params.capacity = as_int(*v);
        if (auto v = c.get_int(prefix + "choices")) s.sim.params.choices = as_int(*v);
        if (auto v = c.get_double(prefix + "lambda")) s.sim.params.lambda = *v;
    }
    if (auto v = c.get("policy")) s.sim.policy = parse_policy(*v);
    if (auto v = c.get("mode")) s.sim.mode = parse_mode(*v);
    if (auto v = c.get_u64("seed")) s.sim.seed = *v;
    if (auto v = c.get_double("t0")) s.sim.t0 = *v;
    if (auto v = c.get_doubles("snapshot_times")) s.sim.snapshot_times = *v;
    if (auto v = c.get_ints("nodes")) s.sim.nodes.assign(v->begin(), v->end());
    if (auto v = c.get_bool("record_phi")) s.sim.record_phi = *v;
    if (auto v = c.get_ints("n_grid")) {
        s.n_grid.assign(v->begin(), v->end());
    } else if (c.has("n") || c.has("params.n")) {
        s.n_grid = {s.sim.params.n};
    }
    if (!s.n_grid.empty()) s.sim.params.n = s.n_grid.front();
    if (auto v = c.get_int("replicas")) s.replicas = as_int(*v);
    if (auto v = c.get("initial")) s.initial.kind = parse_initial(*v);
    if (auto v = c.get_double("c0")) s.initial.c0 = *v;
    if (auto v = c.get("initial_path")) s.initial.path = *v;
    if (auto v = c.get_bool("shared_initial")) s.initial.shared = *v;
    if (auto v = c.get("output_dir")) s.output_dir = *v;
    if (auto v = c.get_int("grid_points")) s.grid_points = as_int(*v);
    if (auto v = c.get_int("threads")) s.threads = static_cast<unsigned>(*v);
    if (auto v = c.get_double("ode_step")) s.ode_step = *v;
    if (auto v = c.get_bool("write_trajectories")) s.write_trajectories = *v;
    if (auto v = c.get_int("coupling_steps")) s.coupling_steps = as_int(*v);
    if (auto v = c.get_int("coupling_offset")) s.coupling_offset = as_int(*v);
    if (auto v = c.get_int("phi_samples")) s.phi_samples = as_int(*v);
    if (auto v = c.get_int("phi_every")) s.phi_every = as_int(*v);
    if (auto v = c.get_int("phi_batches")) s.phi_batches = as_int(*v);
    if (auto v = c.get_int("gencheck_states")) s.gencheck_states = as_int(*v);
    if (auto v = c.get_int("gencheck_prefix")) s.gencheck_prefix = as_int(*v);
    return s;
}

std::string ExperimentSpec::hash() const {
    KeyValueConfig c = to_config();
    c.set("output_dir", "");
    c.set("threads", "");
    std::ostringstream text;
    c.write(text);
    return fnv1a_hex(text.str());
}

std::uint64_t stream_seed(std::uint64_t seed, int n, std::uint64_t replica) {
    return replica_seed(mix64(seed + static_cast<std::uint64_t>(n)), replica);
}

NetworkState initial_state(const ExperimentSpec& spec, int n, std::uint64_t replica) {
    const ModelParams params = spec.params_for(n);
    switch (spec.initial.kind) {
        case InitialKind::Empty: return NetworkState(params);
        case InitialKind::RandomAllocation: {
            const std::uint64_t r = spec.initial.shared ? kSharedStream : replica;
            Rng rng(mix64(stream_seed(spec.sim.seed, n, r) ^ 0x5eedULL));
            return generate_initial_state(rng, params, spec.initial.c0).state;
        }
        case InitialKind::FromFile: {
            NetworkState s = load_snapshot(spec.initial.path);
            if (!(s.params() == params)) throw std::invalid_argument("initial state file does not match the spec parameters");
            return s;
        }
    }
    return NetworkState(params);
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double sup_error(const Trajectory& trajectory, const OdeTrajectory& ode, int n, int capacity) {
    if (trajectory.snapshots.size() != ode.size()) throw std::invalid_argument("snapshot and ODE grids differ");
    double worst = 0.0;
    const double scale = 1.0 / (n - 1);
    for (std::size_t s = 0; s < ode.size(); ++s) {
        const Snapshot& snap = trajectory.snapshots[s];
        const std::vector<double>& xi = ode.states[s];
        for (std::size_t i = 0; i < snap.nodes.size(); ++i)
            for (int k = 0; k <= capacity; ++k)
                worst = std::max(worst, std::abs(snap.f(i, k, capacity) * scale - xi[static_cast<std::size_t>(k)]));
    }
    return worst;
}

namespace {

OdeTrajectory lln_ode(const ExperimentSpec& spec, const NetworkState& x0, const std::vector<double>& grid) {
    const OdeParams params = ode_params_for(x0.params(), spec.sim.policy);
    const SimplexVector xi0 = SimplexVector::from_profile(x0.f_profile(0));
    return integrate(xi0, params, spec.sim.t0, ode_step_for(spec, params), grid);
}

void require_s1(const NetworkState& x0) {
    if (!x0.regions().in_s1) throw std::invalid_argument("initial state lies outside S1 (||x||_1 > 2 lambda N)");
}

struct LlnTask {
    double error = 0.0;
    double blocked_fraction = 0.0;
    OdeTrajectory ode;
    Trajectory trajectory;
};

}  // namespace

LlnReport run_lln(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.sim.mode != SimMode::Ctmc && spec.replicas > 0)
        throw std::invalid_argument("the LLN experiment runs in continuous time");
    const std::vector<double> grid = spec.snapshot_grid();
    const bool shared = shared_initial(spec.initial);
    const std::size_t R = static_cast<std::size_t>(spec.replicas);

    LlnReport report;
    std::vector<NetworkState> shared_x0;
    for (int n : spec.n_grid) {
        LlnPoint point;
        point.n = n;
        NetworkState x0 = initial_state(spec, n, 0);
        require_s1(x0);
        point.ode = lln_ode(spec, x0, grid);
        report.points.push_back(std::move(point));
        shared_x0.push_back(std::move(x0));
    }
    if (R == 0) return report;

    const std::size_t tasks = spec.n_grid.size() * R;
    std::vector<LlnTask> results(tasks);
    parallel_for(tasks, spec.threads, [&](std::size_t idx) {
        const std::size_t gi = idx / R;
        const std::size_t r = idx % R;
        const int n = spec.n_grid[gi];
        LlnTask& out = results[idx];
        NetworkState x0 = shared ? shared_x0[gi] : initial_state(spec, n, r);
        if (!shared) {
            require_s1(x0);
            out.ode = lln_ode(spec, x0, grid);
        }
        SimConfig cfg = spec.sim;
        cfg.params = spec.params_for(n);
        cfg.seed = stream_seed(spec.sim.seed, n, r);
        cfg.snapshot_times = grid;
        Trajectory traj = run(cfg, x0);
        out.error = sup_error(traj, shared ? report.points[gi].ode : out.ode, n, cfg.params.capacity);
        const auto& cnt = traj.final_counters;
        out.blocked_fraction = cnt.arrivals ? static_cast<double>(cnt.blocked) / cnt.arrivals : 0.0;
        if (spec.write_trajectories) out.trajectory = std::move(traj);
    });

    for (std::size_t gi = 0; gi < spec.n_grid.size(); ++gi) {
        LlnPoint& point = report.points[gi];
        for (std::size_t r = 0; r < R; ++r) {
            point.errors.push_back(results[gi * R + r].error);
            point.blocked_fraction.push_back(results[gi * R + r].blocked_fraction);
        }
        point.median_error = median(point.errors);
        point.max_error = *std::max_element(point.errors.begin(), point.errors.end());
        point.scaled_median = point.median_error * std::sqrt(point.n) / std::log(point.n);
    }

    if (spec.write_trajectories && !spec.output_dir.empty()) {
        const int cap = spec.sim.params.capacity;
        for (std::size_t gi = 0; gi < spec.n_grid.size(); ++gi) {
            const int n = spec.n_grid[gi];
            CsvWriter traj(path_in(spec.output_dir, "trajectory" + n_suffix(n) + ".csv"), {"t", "replica", "v", "k", "f_vk"});
            CsvWriter obs(path_in(spec.output_dir, "observables" + n_suffix(n) + ".csv"),
                          {"t", "replica", "phi1", "phi2", "phi3", "norm1", "blocked"});
            for (std::size_t r = 0; r < R; ++r) {
                for (const Snapshot& s : results[gi * R + r].trajectory.snapshots) {
                    for (std::size_t i = 0; i < s.nodes.size(); ++i)
                        for (int k = 0; k <= cap; ++k) traj.row(s.time, r, s.nodes[i], k, s.f(i, k, cap));
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    obs.row(s.time, r, s.phi ? s.phi->phi1 : nan, s.phi ? s.phi->phi2 : nan,
                            s.phi ? s.phi->phi3 : nan, s.norm1, s.counters.blocked);
                }
            }
        }
    }
    return report;
}

ConcentrationReport run_concentration(const ExperimentSpec& spec) {
    spec.validate();
    const std::vector<double> grid = spec.snapshot_grid();
    const std::size_t R = static_cast<std::size_t>(spec.replicas);
    const int cap = spec.sim.params.capacity;
    ConcentrationReport report;
    for (int n : spec.n_grid) {
        const NetworkState shared_x0 = initial_state(spec, n, 0);
        const bool shared = shared_initial(spec.initial);
        std::vector<std::vector<int>> profiles(R);  // per replica: grid x nodes x (C+1)
        parallel_for(R, spec.threads, [&](std::size_t r) {
            SimConfig cfg = spec.sim;
            cfg.params = spec.params_for(n);
            cfg.seed = stream_seed(spec.sim.seed, n, r);
            cfg.snapshot_times = grid;
            const Trajectory traj = run(cfg, shared ? shared_x0 : initial_state(spec, n, r));
            for (const Snapshot& s : traj.snapshots)
                profiles[r].insert(profiles[r].end(), s.profiles.begin(), s.profiles.end());
        });

        ConcentrationPoint point;
        point.n = n;
        const std::size_t nodes = spec.sim.nodes.empty() ? static_cast<std::size_t>(n) : spec.sim.nodes.size();
        const std::size_t width = nodes * static_cast<std::size_t>(cap + 1);
        const double sqrt_n = std::sqrt(static_cast<double>(n));
        double final_sd_sum = 0.0;
        for (std::size_t s = 0; s < grid.size(); ++s) {
            for (std::size_t i = 0; i < nodes; ++i) {
                for (int k = 0; k <= cap; ++k) {
                    const std::size_t at = s * width + i * static_cast<std::size_t>(cap + 1) + static_cast<std::size_t>(k);
                    double sum = 0.0;
                    for (std::size_t r = 0; r < R; ++r) sum += profiles[r][at];
                    const double mean = sum / static_cast<double>(R);
                    double sq = 0.0;
                    double dev = 0.0;
                    for (std::size_t r = 0; r < R; ++r) {
                        const double d = profiles[r][at] - mean;
                        sq += d * d;
                        dev = std::max(dev, std::abs(d));
                    }
                    ConcentrationRow row;
                    row.t = grid[s];
                    row.v = spec.sim.nodes.empty() ? static_cast<Node>(i) : spec.sim.nodes[i];
                    row.k = k;
                    row.mean = mean;
                    row.sd = std::sqrt(sq / static_cast<double>(R - 1));
                    row.max_dev = dev;
                    point.max_scaled_dev = std::max(point.max_scaled_dev, dev / (sqrt_n * std::log(n)));
                    point.max_scaled_sd = std::max(point.max_scaled_sd, row.sd / sqrt_n);
                    if (s + 1 == grid.size()) final_sd_sum += row.sd;
                    point.rows.push_back(row);
                }
            }
        }
        point.mean_sd_final = final_sd_sum / static_cast<double>(width);
        report.points.push_back(std::move(point));
    }
    return report;
}

std::vector<PhiTuple> sample_phi_tuples(int n, int capacity, int count, std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0x7e57ULL));
    std::vector<PhiTuple> out;
    for (int i = 0; i < count; ++i) {
        const NodePair e = sample_endpoints(rng, n);
        PhiTuple t;
        t.u = e.lo;
        t.v = e.hi;
        t.j = static_cast<int>(rng.below(static_cast<std::uint64_t>(capacity + 1)));
        t.k = static_cast<int>(rng.below(static_cast<std::uint64_t>(capacity + 1)));
        out.push_back(t);
    }
    return out;
}

namespace {

struct PhiReplica {
    std::vector<double> abs_sum;                  // per tuple
    std::vector<std::vector<double>> batch_mean;  // per tuple, per batch
    double phi_sum = 0.0;
    std::int64_t phi_count = 0;
    std::vector<PhiPathRow> path;
};

}  // namespace

PhiDriftReport run_phi_drift(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.sim.mode != SimMode::JumpChain) throw std::invalid_argument("the phi drift experiment runs the jump chain");
    const int n = spec.n_grid.front();
    const ModelParams params = spec.params_for(n);
    if (n < 3) throw std::invalid_argument("phi needs n >= 3");
    const auto steps = static_cast<std::int64_t>(spec.sim.t0);
    const int B = spec.phi_batches;
    if (steps < B) throw std::invalid_argument("fewer steps than batches");
    const std::vector<PhiTuple> tuples = sample_phi_tuples(n, params.capacity, spec.phi_samples, spec.sim.seed);
    const std::vector<double> grid = spec.snapshot_grid();
    const std::size_t R = static_cast<std::size_t>(spec.replicas);
    const NetworkState shared_x0 = initial_state(spec, n, 0);
    const bool shared = shared_initial(spec.initial);

    std::vector<PhiReplica> results(R);
    parallel_for(R, spec.threads, [&](std::size_t r) {
        PhiReplica& out = results[r];
        const std::size_t T = tuples.size();
        out.abs_sum.assign(T, 0.0);
        out.batch_mean.assign(T, std::vector<double>(static_cast<std::size_t>(B), 0.0));
        Simulator sim(shared ? shared_x0 : initial_state(spec, n, r), spec.sim.policy, SimMode::JumpChain,
                      stream_seed(spec.sim.seed, n, r));
        std::vector<double> current(T);
        for (std::size_t i = 0; i < T; ++i)
            current[i] = phi1_component(sim.state(), tuples[i].u, tuples[i].v, tuples[i].j, tuples[i].k);
        std::size_t next_grid = 0;
        auto record = [&](std::int64_t s) {
            while (next_grid < grid.size() && static_cast<std::int64_t>(std::floor(grid[next_grid])) <= s) {
                out.path.push_back({grid[next_grid], static_cast<int>(r), phi_report(sim.state()), sim.state().norm1(),
                                    sim.counters().blocked});
                ++next_grid;
            }
        };
        std::vector<double> batch_sum(T, 0.0);
        for (std::int64_t s = 0; s < steps; ++s) {
            record(s);
            if (s % spec.phi_every == 0) {
                out.phi_sum += phi_report(sim.state()).phi;
                ++out.phi_count;
            }
            const StepOutcome o = sim.step();
            if (o.changed()) {
                for (std::size_t i = 0; i < T; ++i) {
                    const PhiTuple& t = tuples[i];
                    if (!touches(o.call, t.u, t.v)) continue;
                    const double now = phi1_component(sim.state(), t.u, t.v, t.j, t.k);
                    batch_sum[i] += std::abs(now - current[i]);
                    current[i] = now;
                }
            }
            // Batch b covers steps [b*steps/B, (b+1)*steps/B).
            const std::int64_t b = s * B / steps;
            if ((s + 1) * B / steps != b || s + 1 == steps) {
                const std::int64_t lo = (b * steps + B - 1) / B;
                const std::int64_t len = s + 1 - lo;
                for (std::size_t i = 0; i < T; ++i) {
                    out.batch_mean[i][static_cast<std::size_t>(b)] = batch_sum[i] / static_cast<double>(len);
                    out.abs_sum[i] += batch_sum[i];
                    batch_sum[i] = 0.0;
                }
            }
        }
        record(steps);
    });

    PhiDriftReport report;
    report.n = n;
    const TheoremConstants k = theorem_constants(params.lambda, params.choices, params.capacity, 1.0);
    report.c1 = k.drift_c1;
    report.c2 = k.drift_c2;
    double phi_sum = 0.0;
    std::int64_t phi_count = 0;
    for (const PhiReplica& rep : results) {
        phi_sum += rep.phi_sum;
        phi_count += rep.phi_count;
        report.path.insert(report.path.end(), rep.path.begin(), rep.path.end());
    }
    report.phi_bar = phi_count ? phi_sum / static_cast<double>(phi_count) : 0.0;
    report.total_steps = steps * static_cast<std::int64_t>(R);
    const double nn = n;
    const double bound = report.c1 / (nn * nn) * report.phi_bar + report.c2 / (nn * nn * nn);
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        PhiTupleStats st;
        st.tuple = tuples[i];
        double total = 0.0;
        std::vector<double> means;
        for (const PhiReplica& rep : results) {
            total += rep.abs_sum[i];
            means.insert(means.end(), rep.batch_mean[i].begin(), rep.batch_mean[i].end());
        }
        st.mean_abs_increment = total / static_cast<double>(report.total_steps);
        const double mb = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
        double sq = 0.0;
        for (double m : means) sq += (m - mb) * (m - mb);
        st.se = std::sqrt(sq / static_cast<double>(means.size() - 1) / static_cast<double>(means.size()));
        st.bound = bound;
        report.tuples.push_back(st);
    }
    return report;
}

InitialPhiReport run_initial_phi(const ExperimentSpec& spec) {
    spec.validate();
    const int n = spec.n_grid.front();
    const ModelParams params = spec.params_for(n);
    const std::size_t R = static_cast<std::size_t>(spec.replicas);
    InitialPhiReport report;
    report.n = n;
    report.threshold = 3.0 * std::log(n) / std::sqrt(static_cast<double>(n));
    report.phi.assign(R, 0.0);
    report.lost.assign(R, 0);
    parallel_for(R, spec.threads, [&](std::size_t r) {
        Rng rng(mix64(stream_seed(spec.sim.seed, n, r) ^ 0x5eedULL));
        const InitialAllocation a = generate_initial_state(rng, params, spec.initial.c0);
        report.phi[r] = phi_report(a.state).phi;
        report.lost[r] = a.lost;
    });
    report.within = static_cast<int>(
        std::count_if(report.phi.begin(), report.phi.end(), [&](double p) { return p <= report.threshold; }));
    return report;
}

CouplingRun run_coupling(const ExperimentSpec& spec) {
    spec.validate();
    const int n = spec.n_grid.front();
    NetworkState x0 = initial_state(spec, n, 0);
    NetworkState y0 = x0;
    if (static_cast<std::size_t>(spec.coupling_offset) > y0.num_calls())
        throw std::invalid_argument("coupling offset exceeds the number of calls in x0");
    for (int i = 0; i < spec.coupling_offset; ++i) y0.remove(y0.call_at(y0.num_calls() - 1).id);
    if (!x0.regions().in_s0 || !y0.regions().in_s0)
        throw std::invalid_argument("coupling start states must lie in S0 (||x||_1 <= 4 lambda N)");
    CouplingRun run;
    run.n = n;
    run.initial_l1 = l1_distance(x0, y0);
    run.growth = coupling_growth_experiment(x0, y0, spec.sim.policy, spec.coupling_steps, spec.replicas,
                                            stream_seed(spec.sim.seed, n, 0), spec.threads);
    return run;
}

GeneratorCheckReport run_generator_check(const ExperimentSpec& spec) {
    spec.validate();
    const int n = spec.n_grid.front();
    const ModelParams params = spec.params_for(n);
    GeneratorCheckReport report;
    report.n = n;
    report.states = spec.gencheck_states;
    report.per_state.assign(static_cast<std::size_t>(spec.gencheck_states), 0.0);
    parallel_for(report.per_state.size(), spec.threads, [&](std::size_t i) {
        Rng rng(stream_seed(spec.sim.seed, n, i));
        NetworkState state(params);
        for (int e = 0; e < spec.gencheck_prefix; ++e) step_ctmc(state, rng, spec.sim.policy);
        const std::vector<double> fast = drift_table(state, spec.sim.policy);
        const std::vector<double> brute = generator_bruteforce_table(state, spec.sim.policy);
        double worst = 0.0;
        for (std::size_t q = 0; q < fast.size(); ++q)
            worst = std::max(worst, std::abs(fast[q] - brute[q]) / std::max(1.0, std::abs(brute[q])));
        report.per_state[i] = worst;
    });
    report.max_relative_error = *std::max_element(report.per_state.begin(), report.per_state.end());
    return report;
}

OdeReport run_ode(const ExperimentSpec& spec) {
    spec.validate();
    const int n = spec.n_grid.front();
    OdeReport report;
    report.params = ode_params_for(spec.params_for(n), spec.sim.policy);
    const SimplexVector xi0 = spec.initial.kind == InitialKind::Empty
                                  ? SimplexVector::unit(report.params.capacity, 0)
                                  : SimplexVector::from_profile(initial_state(spec, n, 0).f_profile(0));
    report.trajectory =
        integrate(xi0, report.params, spec.sim.t0, ode_step_for(spec, report.params), spec.snapshot_grid());
    try {
        const SimplexVector fp = fixed_point(report.params);
        report.fixed_point.assign(fp.values().begin(), fp.values().end());
    } catch (const NonConvergence&) {
        report.fixed_point.clear();
    }
    report.constants = theorem_constants(report.params.lambda, report.params.choices, report.params.capacity,
                                         spec.sim.t0);
    return report;
}

KeyValueConfig constants_block(const TheoremConstants& k) {
    KeyValueConfig c;
    c.set("lambda", format_double(k.lambda));
    c.set("choices", std::to_string(k.choices));
    c.set("capacity", std::to_string(k.capacity));
    c.set("t0", format_double(k.t0));
    c.set("log_gamma", format_double(k.log_gamma));
    c.set("gamma", format_double(k.gamma));
    c.set("n0_polynomial_term", format_double(k.n0_polynomial_term));
    c.set("log_n0_polynomial_term", format_double(k.log_n0_polynomial_term));
    c.set("log_n0_exponential_term", format_double(k.log_n0_exponential_term));
    c.set("log_log_n0_exponential_term", format_double(k.log_log_n0_exponential_term));
    c.set("envelope_rate", format_double(k.envelope_rate));
    c.set("drift_c1", format_double(k.drift_c1));
    c.set("drift_c2", format_double(k.drift_c2));
    c.set("phi_growth_rate", format_double(k.phi_growth_rate));
    c.set("aggregated_prefactor", format_double(k.aggregated_prefactor));
    return c;
}

namespace {

void write_ode_csv(const std::string& path, const OdeTrajectory& ode) {
    CsvWriter csv(path, {"t", "k", "xi_k"});
    for (std::size_t s = 0; s < ode.size(); ++s)
        for (std::size_t k = 0; k < ode.states[s].size(); ++k) csv.row(ode.times[s], k, ode.states[s][k]);
}

// Per-state diagnostics of g against its mean-field plug-in, on the first replica's path.
void write_gap_diagnostics(const ExperimentSpec& spec, int n) {
    SimConfig cfg = spec.sim;
    cfg.params = spec.params_for(n);
    cfg.seed = stream_seed(spec.sim.seed, n, 0);
    cfg.snapshot_times = spec.snapshot_grid();
    CsvWriter csv(path_in(spec.output_dir, "gap" + n_suffix(n) + ".csv"),
                  {"t", "v", "j", "g_exact", "g_meanfield", "gap", "phi1", "phi2", "phi3"});
    const SnapshotObserver observe = [&](const NetworkState& state, double t) {
        const GTable table = g_table(state, spec.sim.policy);
        const PhiReport phi = phi_report(state);
        for (Node v = 0; v < state.n(); ++v)
            for (int j = 0; j < state.capacity(); ++j) {
                const MeanFieldGap g = meanfield_gap(state, table, v, j, spec.sim.policy);
                csv.row(t, v, j, g.g_exact, g.g_meanfield, g.gap, phi.phi1, phi.phi2, phi.phi3);
            }
    };
    (void)run(cfg, initial_state(spec, n, 0), observe);
}

}  // namespace

void run_experiment(const ExperimentSpec& spec, std::ostream& log) {
    spec.validate();
    const std::string& dir = spec.output_dir;
    const bool files = !dir.empty();
    if (files) ensure_directory(dir);
    const std::string hash = spec.hash();
    const std::uint64_t seed = spec.sim.seed;

    switch (spec.kind) {
        case ExperimentKind::Lln: {
            const LlnReport report = run_lln(spec);
            if (files) {
                CsvWriter reps(path_in(dir, "lln_replicas.csv"),
                               {"n", "replica", "seed", "spec_hash", "sup_error", "blocked_fraction"});
                CsvWriter summary(path_in(dir, "lln_summary.csv"),
                                  {"n", "median_error", "max_error", "scaled_median", "seed", "spec_hash"});
                for (const LlnPoint& p : report.points) {
                    for (std::size_t r = 0; r < p.errors.size(); ++r)
                        reps.row(p.n, r, seed, hash, p.errors[r], p.blocked_fraction[r]);
                    if (!p.errors.empty()) summary.row(p.n, p.median_error, p.max_error, p.scaled_median, seed, hash);
                    write_ode_csv(path_in(dir, "ode" + n_suffix(p.n) + ".csv"), p.ode);
                    if (spec.write_trajectories && spec.replicas > 0) write_gap_diagnostics(spec, p.n);
                }
            }
            for (const LlnPoint& p : report.points) {
                if (p.errors.empty()) {
                    log << "n=" << p.n << " ode points=" << p.ode.size() << '\n';
                } else {
                    log << "n=" << p.n << " median_error=" << format_double(p.median_error)
                        << " max_error=" << format_double(p.max_error)
                        << " scaled_median=" << format_double(p.scaled_median) << '\n';
                }
            }
            break;
        }
        case ExperimentKind::Concentration: {
            const ConcentrationReport report = run_concentration(spec);
            for (const ConcentrationPoint& p : report.points) {
                if (files) {
                    CsvWriter csv(path_in(dir, "concentration" + n_suffix(p.n) + ".csv"),
                                  {"t", "v", "k", "mean", "sd", "max_dev", "sd_scaled", "dev_scaled", "seed", "spec_hash"});
                    const double sn = std::sqrt(static_cast<double>(p.n));
                    for (const ConcentrationRow& r : p.rows)
                        csv.row(r.t, r.v, r.k, r.mean, r.sd, r.max_dev, r.sd / sn, r.max_dev / (sn * std::log(p.n)),
                                seed, hash);
                }
                log << "n=" << p.n << " max_dev_scaled=" << format_double(p.max_scaled_dev)
                    << " max_sd_scaled=" << format_double(p.max_scaled_sd)
                    << " mean_sd_final=" << format_double(p.mean_sd_final) << '\n';
            }
            break;
        }
        case ExperimentKind::PhiDrift: {
            const PhiDriftReport report = run_phi_drift(spec);
            int within = 0;
            for (const PhiTupleStats& t : report.tuples)
                if (t.mean_abs_increment <= t.bound + 3.0 * t.se) ++within;
            if (files) {
                CsvWriter inc(path_in(dir, "phi_increments.csv"),
                              {"u", "v", "j", "k", "mean_abs_increment", "se", "bound", "seed", "spec_hash"});
                for (const PhiTupleStats& t : report.tuples)
                    inc.row(t.tuple.u, t.tuple.v, t.tuple.j, t.tuple.k, t.mean_abs_increment, t.se, t.bound, seed, hash);
                CsvWriter path(path_in(dir, "phi_path.csv"), {"t", "replica", "phi1", "phi2", "phi3", "norm1", "blocked"});
                for (const PhiPathRow& r : report.path)
                    path.row(r.t, r.replica, r.phi.phi1, r.phi.phi2, r.phi.phi3, r.norm1, r.blocked);
            }
            log << "n=" << report.n << " phi_bar=" << format_double(report.phi_bar) << " c1=" << report.c1
                << " c2=" << report.c2 << " tuples_within_bound=" << within << '/' << report.tuples.size() << '\n';
            if (spec.initial.kind == InitialKind::RandomAllocation) {
                const InitialPhiReport init = run_initial_phi(spec);
                if (files) {
                    CsvWriter csv(path_in(dir, "phi_initial.csv"), {"replica", "seed", "spec_hash", "phi", "threshold", "lost"});
                    for (std::size_t r = 0; r < init.phi.size(); ++r)
                        csv.row(r, seed, hash, init.phi[r], init.threshold, init.lost[r]);
                }
                log << "initial phi within 3 log n / sqrt n: " << init.within << '/' << init.phi.size() << '\n';
            }
            break;
        }
        case ExperimentKind::CouplingGrowth: {
            const CouplingRun run = run_coupling(spec);
            double worst_excess = -std::numeric_limits<double>::infinity();
            for (const GrowthStep& g : run.growth.steps)
                if (g.step > 0 && std::isfinite(g.growth_factor))
                    worst_excess = std::max(worst_excess, g.growth_factor - g.bound - 3.0 * g.se_growth);
            if (files) {
                CsvWriter csv(path_in(dir, "coupling_growth.csv"), {"step", "mean_l1", "se_l1", "growth_factor", "bound"});
                for (const GrowthStep& g : run.growth.steps) csv.row(g.step, g.mean_l1, g.se_l1, g.growth_factor, g.bound);
            }
            log << "n=" << run.n << " initial_l1=" << run.initial_l1
                << " final_mean_l1=" << format_double(run.growth.steps.back().mean_l1)
                << " max(growth - bound - 3se)=" << format_double(worst_excess) << '\n';
            break;
        }
        case ExperimentKind::GeneratorCheck: {
            const GeneratorCheckReport report = run_generator_check(spec);
            if (files) {
                CsvWriter csv(path_in(dir, "generator_check.csv"), {"state", "max_relative_error", "seed", "spec_hash"});
                for (std::size_t i = 0; i < report.per_state.size(); ++i) csv.row(i, report.per_state[i], seed, hash);
            }
            log << "n=" << report.n << " states=" << report.states
                << " max_relative_error=" << format_double(report.max_relative_error) << '\n';
            break;
        }
        case ExperimentKind::OdeOnly: {
            const OdeReport report = run_ode(spec);
            if (files) {
                write_ode_csv(path_in(dir, "ode.csv"), report.trajectory);
                constants_block(report.constants).save(path_in(dir, "constants.txt"));
            }
            log << "xi(t0) =";
            for (double x : report.trajectory.back()) log << ' ' << format_double(x);
            log << '\n';
            if (!report.fixed_point.empty()) {
                log << "fixed point =";
                for (double x : report.fixed_point) log << ' ' << format_double(x);
                log << '\n';
            }
            log << "log_gamma=" << format_double(report.constants.log_gamma)
                << " n0_polynomial_term=" << format_double(report.constants.n0_polynomial_term) << '\n';
            break;
        }
    }

    if (files) {
        KeyValueConfig manifest = spec.to_config();
        manifest.set("spec_hash", hash);
        manifest.save(path_in(dir, "manifest.txt"));
    }
}

}  // namespace dar
