#include "dar/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dar {

std::string_view to_string(SimMode mode) noexcept {
    return mode == SimMode::Ctmc ? "ctmc" : "jump";
}

SimMode parse_mode(std::string_view text) {
    if (text == "ctmc") return SimMode::Ctmc;
    if (text == "jump" || text == "jumpchain") return SimMode::JumpChain;
    throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected ctmc or jump)");
}

void SimConfig::validate() const {
    params.validate();
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw std::invalid_argument("t0 must be positive");
    if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
        throw std::invalid_argument("snapshot times must be sorted");
    for (double s : snapshot_times)
        if (s < 0.0 || s > t0) throw std::invalid_argument("snapshot time outside [0, t0]");
    for (Node v : nodes)
        if (v < 0 || v >= params.n) throw std::invalid_argument("snapshot node out of range");
}

std::vector<double> uniform_grid(double t0, int count) {
    if (count < 2) return {t0};
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = t0 * i / (count - 1);
    grid.back() = t0;
    return grid;
}

double jump_arrival_probability(const ModelParams& params) noexcept {
    const double a = params.arrival_rate();
    return a / (a + static_cast<double>(params.departure_slots()));
}

double uniformization_rate(const ModelParams& params) noexcept {
    return params.arrival_rate() + static_cast<double>(params.departure_slots());
}

namespace {

// Candidates are drawn on every arrival, even when the direct link is free, so
// that chains sharing a stream stay aligned draw for draw.
StepOutcome arrive(NetworkState& state, Rng& rng, PolicyKind policy) {
    thread_local std::vector<Node> candidates;
    const ModelParams& p = state.params();
    const NodePair ends = sample_endpoints(rng, p.n);
    candidates.resize(static_cast<std::size_t>(p.choices));
    sample_candidates(rng, p.n, ends.lo, ends.hi, candidates);
    StepOutcome out;
    out.decision = route_call(state, policy, ends.lo, ends.hi, candidates);
    if (out.decision.is_blocked()) {
        out.kind = StepKind::Blocked;
        out.call = Call{0, ends.lo, ends.hi, kDirect};
        return out;
    }
    const auto id = apply_decision(state, ends.lo, ends.hi, out.decision);
    out.kind = StepKind::Arrival;
    out.call = state.call(*id);
    return out;
}

StepOutcome depart(NetworkState& state, std::size_t slot) {
    StepOutcome out;
    out.kind = StepKind::Departure;
    out.call = state.remove(state.call_at(slot).id);
    return out;
}

// The event part of a Ctmc step, given that the holding time has been drawn.
StepOutcome ctmc_event(NetworkState& state, Rng& rng, PolicyKind policy) {
    const double a = state.params().arrival_rate();
    const auto m = static_cast<double>(state.num_calls());
    if (rng.uniform01() * (a + m) < a) return arrive(state, rng, policy);
    return depart(state, static_cast<std::size_t>(rng.below(state.num_calls())));
}

double ctmc_rate(const NetworkState& state) {
    return state.params().arrival_rate() + static_cast<double>(state.num_calls());
}

}  // namespace

StepOutcome step_ctmc(NetworkState& state, Rng& rng, PolicyKind policy) {
    const double dt = rng.exponential(ctmc_rate(state));
    StepOutcome out = ctmc_event(state, rng, policy);
    out.dt = dt;
    return out;
}

StepOutcome step_jump_chain(NetworkState& state, Rng& rng, PolicyKind policy) {
    if (!state.regions().in_stilde) return StepOutcome{StepKind::Frozen, 0.0, {}, {}};
    const ModelParams& p = state.params();
    if (rng.bernoulli(jump_arrival_probability(p))) return arrive(state, rng, policy);
    const auto slot = rng.below(static_cast<std::uint64_t>(p.departure_slots()));
    if (slot < state.num_calls()) return depart(state, static_cast<std::size_t>(slot));
    return StepOutcome{StepKind::Idle, 0.0, {}, {}};
}

std::int64_t advance_uniformized(NetworkState& state, Rng& rng, PolicyKind policy, double t) {
    // Poisson(rate * t) via exponential inter-step gaps.
    const double rate = uniformization_rate(state.params());
    std::int64_t steps = 0;
    double clock = rng.exponential(rate);
    while (clock <= t) {
        step_jump_chain(state, rng, policy);
        ++steps;
        clock += rng.exponential(rate);
    }
    return steps;
}

Simulator::Simulator(NetworkState state, PolicyKind policy, SimMode mode, std::uint64_t seed)
    : state_(std::move(state)), policy_(policy), mode_(mode), rng_(seed) {}

void Simulator::count(const StepOutcome& outcome) {
    ++steps_;
    switch (outcome.kind) {
        case StepKind::Arrival: ++counters_.arrivals; break;
        case StepKind::Blocked:
            ++counters_.arrivals;
            ++counters_.blocked;
            break;
        case StepKind::Departure: ++counters_.departures; break;
        case StepKind::Idle:
        case StepKind::Frozen: ++counters_.idle; break;
    }
}

StepOutcome Simulator::step() {
    StepOutcome out;
    if (mode_ == SimMode::JumpChain) {
        out = step_jump_chain(state_, rng_, policy_);
        time_ += 1.0;
    } else {
        const double dt = pending_dt_ ? *pending_dt_ : rng_.exponential(ctmc_rate(state_));
        pending_dt_.reset();
        out = ctmc_event(state_, rng_, policy_);
        out.dt = dt;
        time_ += dt;
    }
    count(out);
    return out;
}

void Simulator::advance_to(double time) {
    if (mode_ == SimMode::JumpChain) {
        const auto target = static_cast<std::int64_t>(std::floor(time));
        while (steps_ < target) step();
        return;
    }
    while (true) {
        if (!pending_dt_) pending_dt_ = rng_.exponential(ctmc_rate(state_));
        if (time_ + *pending_dt_ > time) break;
        step();
    }
    // Memoryless: keep the residual holding time for the next event.
    *pending_dt_ -= time - time_;
    time_ = std::max(time_, time);
}

Snapshot take_snapshot(const NetworkState& state, double time, const std::vector<Node>& nodes, bool with_phi,
                       const EventCounters& counters) {
    Snapshot snap;
    snap.time = time;
    if (nodes.empty()) {
        snap.nodes.resize(static_cast<std::size_t>(state.n()));
        for (Node v = 0; v < state.n(); ++v) snap.nodes[static_cast<std::size_t>(v)] = v;
    } else {
        snap.nodes = nodes;
    }
    snap.profiles.reserve(snap.nodes.size() * static_cast<std::size_t>(state.capacity() + 1));
    for (Node v : snap.nodes) {
        const auto profile = state.f_profile(v);
        snap.profiles.insert(snap.profiles.end(), profile.begin(), profile.end());
    }
    if (with_phi) snap.phi = phi_report(state);
    snap.norm1 = state.norm1();
    snap.counters = counters;
    return snap;
}

Trajectory run(const SimConfig& config, const NetworkState& initial, const SnapshotObserver& observer) {
    config.validate();
    if (!(initial.params() == config.params)) throw std::invalid_argument("initial state has different parameters");
    Simulator sim(initial, config.policy, config.mode, config.seed);
    Trajectory out;
    out.snapshots.reserve(config.snapshot_times.size());
    for (double s : config.snapshot_times) {
        sim.advance_to(s);
        out.snapshots.push_back(take_snapshot(sim.state(), s, config.nodes, config.record_phi, sim.counters()));
        if (observer) observer(sim.state(), s);
    }
    sim.advance_to(config.t0);
    out.final_counters = sim.counters();
    out.final_time = config.mode == SimMode::Ctmc ? config.t0 : static_cast<double>(sim.steps());
    out.steps = sim.steps();
    return out;
}

InitialAllocation generate_initial_state(Rng& rng, const ModelParams& params, double c0) {
    params.validate();
    if (!(c0 > 0.0)) throw std::invalid_argument("c0 must be positive");
    InitialAllocation out{NetworkState(params), 0, 0};
    const auto attempts = static_cast<std::int64_t>(std::floor(c0 * static_cast<double>(params.num_links())));
    for (std::int64_t i = 0; i < attempts; ++i) {
        const StepOutcome o = arrive(out.state, rng, PolicyKind::Bdar);
        if (o.kind == StepKind::Blocked) {
            ++out.lost;
        } else {
            ++out.placed;
        }
    }
    return out;
}

}  // namespace dar
