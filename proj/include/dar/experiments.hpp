#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dar/coupling.hpp"
#include "dar/io.hpp"
#include "dar/mean_field.hpp"
#include "dar/simulation.hpp"

namespace dar {

enum class ExperimentKind { Lln, Concentration, PhiDrift, CouplingGrowth, GeneratorCheck, OdeOnly };
enum class InitialKind { Empty, RandomAllocation, FromFile };

std::string_view to_string(ExperimentKind kind) noexcept;
ExperimentKind parse_experiment(std::string_view text);
std::string_view to_string(InitialKind kind) noexcept;
InitialKind parse_initial(std::string_view text);

struct InitialSpec {
    InitialKind kind = InitialKind::Empty;
    double c0 = 0.5;
    std::string path;
    /// RandomAllocation: one X_0 shared by all replicas (true) or a fresh draw per replica.
    bool shared = true;
};

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Lln;
    /// sim.params.n is overridden by each entry of n_grid.
    SimConfig sim;
    std::vector<int> n_grid{50};
    int replicas = 20;
    InitialSpec initial;
    /// Empty: nothing is written.
    std::string output_dir;
    /// Snapshot grid size when sim.snapshot_times is empty.
    int grid_points = 21;
    unsigned threads = 0;
    /// ODE step; 0 picks min(0.01, 0.5 / Lipschitz bound).
    double ode_step = 0.0;
    bool write_trajectories = false;

    int coupling_steps = 500;
    int coupling_offset = 10;

    int phi_samples = 32;
    int phi_every = 10;
    int phi_batches = 50;

    int gencheck_states = 100;
    int gencheck_prefix = 30;

    void validate() const;
    [[nodiscard]] ModelParams params_for(int n) const;
    [[nodiscard]] std::vector<double> snapshot_grid() const;

    /// Every field under its own name; read back by from_config.
    [[nodiscard]] KeyValueConfig to_config() const;
    /// Starts from the defaults and overrides the keys present.
    static ExperimentSpec from_config(const KeyValueConfig& config);
    /// FNV-1a of the resolved spec without output_dir and threads.
    [[nodiscard]] std::string hash() const;
};

/// Per-(n, replica) random stream seed.
[[nodiscard]] std::uint64_t stream_seed(std::uint64_t seed, int n, std::uint64_t replica);

/// Initial state for replica `replica` at size n.
[[nodiscard]] NetworkState initial_state(const ExperimentSpec& spec, int n, std::uint64_t replica);

[[nodiscard]] double median(std::vector<double> values);

struct LlnPoint {
    int n = 0;
    std::vector<double> errors;  // per replica
    std::vector<double> blocked_fraction;
    double median_error = 0.0;
    double max_error = 0.0;
    double scaled_median = 0.0;  // median * sqrt(n) / log(n)
    OdeTrajectory ode;           // for the shared initial condition (first replica otherwise)
};

struct LlnReport {
    std::vector<LlnPoint> points;
};

/// sup over snapshots, nodes and k of |f_{v,k}(X_t)/(n-1) - xi_t(k)|.
[[nodiscard]] double sup_error(const Trajectory& trajectory, const OdeTrajectory& ode, int n, int capacity);

[[nodiscard]] LlnReport run_lln(const ExperimentSpec& spec);

struct ConcentrationRow {
    double t = 0.0;
    Node v = 0;
    int k = 0;
    double mean = 0.0;
    double sd = 0.0;
    double max_dev = 0.0;
};

struct ConcentrationPoint {
    int n = 0;
    std::vector<ConcentrationRow> rows;
    /// max over rows of max_dev / (sqrt(n) log n).
    double max_scaled_dev = 0.0;
    /// max over rows of sd / sqrt(n).
    double max_scaled_sd = 0.0;
    /// Mean of sd over (v, k) at the last snapshot.
    double mean_sd_final = 0.0;
};

struct ConcentrationReport {
    std::vector<ConcentrationPoint> points;
};

[[nodiscard]] ConcentrationReport run_concentration(const ExperimentSpec& spec);

struct PhiTuple {
    Node u = 0;
    Node v = 1;
    int j = 0;
    int k = 0;
};

struct PhiTupleStats {
    PhiTuple tuple;
    double mean_abs_increment = 0.0;
    double se = 0.0;  // batch means
    double bound = 0.0;
};

struct PhiPathRow {
    double t = 0.0;
    int replica = 0;
    PhiReport phi;
    std::int64_t norm1 = 0;
    std::int64_t blocked = 0;
};

struct PhiDriftReport {
    int n = 0;
    double c1 = 0.0;
    double c2 = 0.0;
    double phi_bar = 0.0;  // mean of phi along the paths, sampled every phi_every steps
    std::int64_t total_steps = 0;
    std::vector<PhiTupleStats> tuples;
    std::vector<PhiPathRow> path;
};

/// Tuples (u, v, j, k) with u != v drawn uniformly from a stream derived from `seed`.
[[nodiscard]] std::vector<PhiTuple> sample_phi_tuples(int n, int capacity, int count, std::uint64_t seed);

/// Jump-chain runs of sim.t0 steps at n_grid.front().
[[nodiscard]] PhiDriftReport run_phi_drift(const ExperimentSpec& spec);

struct InitialPhiReport {
    int n = 0;
    double threshold = 0.0;  // 3 log n / sqrt n
    std::vector<double> phi;  // per replica
    std::vector<std::int64_t> lost;
    int within = 0;
};

/// phi(X_0) over `replicas` independent random allocations with constant c0.
[[nodiscard]] InitialPhiReport run_initial_phi(const ExperimentSpec& spec);

struct CouplingRun {
    int n = 0;
    std::int64_t initial_l1 = 0;
    GrowthReport growth;
};

/// x0 from the initial spec, y0 = x0 with coupling_offset calls removed.
[[nodiscard]] CouplingRun run_coupling(const ExperimentSpec& spec);

struct GeneratorCheckReport {
    int n = 0;
    int states = 0;
    /// max |a - b| / max(1, |b|) over all states, nodes and loads.
    double max_relative_error = 0.0;
    std::vector<double> per_state;
};

[[nodiscard]] GeneratorCheckReport run_generator_check(const ExperimentSpec& spec);

struct OdeReport {
    OdeParams params;
    OdeTrajectory trajectory;
    std::vector<double> fixed_point;  // empty if the search failed
    TheoremConstants constants;
};

[[nodiscard]] OdeReport run_ode(const ExperimentSpec& spec);

/// Runs the experiment, writes its CSVs and manifest.txt under output_dir, and
/// prints a short summary to `log`.
void run_experiment(const ExperimentSpec& spec, std::ostream& log);

/// Flat key-value constants block.
[[nodiscard]] KeyValueConfig constants_block(const TheoremConstants& constants);

}  // namespace dar
