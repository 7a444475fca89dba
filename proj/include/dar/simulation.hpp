#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dar/network_state.hpp"
#include "dar/observables.hpp"
#include "dar/params.hpp"
#include "dar/rng.hpp"
#include "dar/routing.hpp"

namespace dar {

enum class SimMode { Ctmc, JumpChain };

std::string_view to_string(SimMode mode) noexcept;
SimMode parse_mode(std::string_view text);

struct SimConfig {
    ModelParams params;
    PolicyKind policy = PolicyKind::Bdar;
    SimMode mode = SimMode::Ctmc;
    std::uint64_t seed = 1;
    /// Time horizon for Ctmc, step budget for JumpChain.
    double t0 = 1.0;
    /// Sorted observation times in [0, t0] (step indices in JumpChain mode).
    std::vector<double> snapshot_times;
    /// Nodes whose profiles are recorded; empty means all.
    std::vector<Node> nodes;
    /// Evaluate phi_report at each snapshot (O(n^3) each).
    bool record_phi = false;

    void validate() const;
};

/// `count` equispaced times from 0 to t0 inclusive.
[[nodiscard]] std::vector<double> uniform_grid(double t0, int count);

enum class StepKind { Arrival, Blocked, Departure, Idle, Frozen };

struct StepOutcome {
    StepKind kind = StepKind::Idle;
    /// Holding time before the event (Ctmc only).
    double dt = 0.0;
    /// The call added or removed; meaningful for Arrival and Departure.
    Call call;
    /// Routing decision of an arrival (Arrival or Blocked).
    RouteDecision decision;

    [[nodiscard]] bool changed() const noexcept {
        return kind == StepKind::Arrival || kind == StepKind::Departure;
    }
};

/// One event of the continuous-time chain: Exp(lambda N + m) holding time,
/// then an arrival with probability lambda N / (lambda N + m), else a departure
/// of a uniformly chosen live call.
StepOutcome step_ctmc(NetworkState& state, Rng& rng, PolicyKind policy);

/// One step of the uniformized jump chain. Frozen once ||x||_1 > 6 lambda N.
StepOutcome step_jump_chain(NetworkState& state, Rng& rng, PolicyKind policy);

/// Arrival probability of the jump chain: lambda N / (lambda N + floor(6 lambda N)).
[[nodiscard]] double jump_arrival_probability(const ModelParams& params) noexcept;
/// Step rate of the uniformized chain: lambda N + floor(6 lambda N).
[[nodiscard]] double uniformization_rate(const ModelParams& params) noexcept;

/// Runs the jump chain for a Poisson(rate * t) number of steps. Returns the step count.
std::int64_t advance_uniformized(NetworkState& state, Rng& rng, PolicyKind policy, double t);

struct EventCounters {
    std::int64_t arrivals = 0;  // offered calls, including blocked ones
    std::int64_t blocked = 0;
    std::int64_t departures = 0;
    std::int64_t idle = 0;  // jump chain: empty departure slots and frozen steps
};

/// A state, its random stream and the running event counts.
class Simulator {
public:
    Simulator(NetworkState state, PolicyKind policy, SimMode mode, std::uint64_t seed);

    StepOutcome step();
    /// Ctmc: advances until the next event would occur after `time`, then sets
    /// the clock to `time`. JumpChain: steps until floor(time) steps have run.
    void advance_to(double time);

    [[nodiscard]] const NetworkState& state() const noexcept { return state_; }
    [[nodiscard]] NetworkState& state() noexcept { return state_; }
    [[nodiscard]] const EventCounters& counters() const noexcept { return counters_; }
    [[nodiscard]] double time() const noexcept { return time_; }
    [[nodiscard]] std::int64_t steps() const noexcept { return steps_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }

private:
    void count(const StepOutcome& outcome);

    NetworkState state_;
    PolicyKind policy_;
    SimMode mode_;
    Rng rng_;
    EventCounters counters_;
    double time_ = 0.0;
    std::int64_t steps_ = 0;
    // Ctmc: the drawn-but-not-yet-applied next event lies beyond the last target.
    std::optional<double> pending_dt_;
};

struct Snapshot {
    double time = 0.0;
    std::vector<Node> nodes;
    /// profiles[i * (C+1) + k] = f_{nodes[i],k}.
    std::vector<int> profiles;
    std::optional<PhiReport> phi;
    std::int64_t norm1 = 0;
    EventCounters counters;

    [[nodiscard]] int f(std::size_t node_slot, int k, int capacity) const {
        return profiles[node_slot * static_cast<std::size_t>(capacity + 1) + static_cast<std::size_t>(k)];
    }
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    EventCounters final_counters;
    double final_time = 0.0;
    std::int64_t steps = 0;
};

[[nodiscard]] Snapshot take_snapshot(const NetworkState& state, double time, const std::vector<Node>& nodes,
                                     bool with_phi, const EventCounters& counters);

/// Called with the state at each snapshot time.
using SnapshotObserver = std::function<void(const NetworkState&, double)>;

/// Deterministic in (config, initial): same seed, same trajectory.
[[nodiscard]] Trajectory run(const SimConfig& config, const NetworkState& initial,
                             const SnapshotObserver& observer = {});

struct InitialAllocation {
    NetworkState state;
    std::int64_t placed = 0;
    std::int64_t lost = 0;
};

/// Offers floor(c0 N) calls one at a time with uniform endpoints, routed by
/// BDAR; calls that find no route are lost.
[[nodiscard]] InitialAllocation generate_initial_state(Rng& rng, const ModelParams& params, double c0);

}  // namespace dar
