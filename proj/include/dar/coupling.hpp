#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dar/network_state.hpp"
#include "dar/params.hpp"
#include "dar/rng.hpp"

namespace dar {

/// Coordinatewise l1 distance over x(e,0) and x(e,w). Throws on parameter mismatch.
[[nodiscard]] std::int64_t l1_distance(const NetworkState& x, const NetworkState& y);

/// Distance restricted to coordinates touching v: direct and alternative counts
/// on links at v, plus alternative counts of other pairs routed via v.
[[nodiscard]] std::int64_t node_distance(const NetworkState& x, const NetworkState& y, Node v);

struct DistanceReport {
    std::int64_t l1 = 0;
    std::vector<std::int64_t> per_node;
};

[[nodiscard]] DistanceReport distance_report(const NetworkState& x, const NetworkState& y);

/// Departure slots of the coupled jump chain. Slot s (0-based) holds, in order:
/// same-route pairs, then cross pairs, then unpaired calls of the larger side.
/// Within each group calls are ordered by (pair index, via, id).
struct Pairing {
    struct Entry {
        // Either side may be absent (unpaired call).
        std::optional<CallId> x;
        std::optional<CallId> y;
    };
    std::vector<Entry> slots;
    std::size_t same_route = 0;
    std::size_t cross = 0;
    std::size_t unpaired = 0;
};

[[nodiscard]] Pairing build_pairing(const NetworkState& x, const NetworkState& y);

enum class CoupledStepKind { Arrival, Departure, Idle };

struct CoupledStepResult {
    CoupledStepKind kind = CoupledStepKind::Idle;
    bool x_frozen = false;
    bool y_frozen = false;
    std::int64_t l1_before = 0;
    std::int64_t l1_after = 0;
};

/// Two jump chains under the shared-randomness coupling. The l1 distance is
/// maintained incrementally.
class CoupledPair {
public:
    CoupledPair(NetworkState x, NetworkState y, PolicyKind policy);

    /// One coupled step: shared event coin; on arrival the same endpoints and
    /// candidate tuple on both sides; on a potential departure one shared slot
    /// into the pairing. A side outside the 6 lambda N region stays put while
    /// the other follows its own chain with the same draws.
    CoupledStepResult step(Rng& rng);

    [[nodiscard]] const NetworkState& x() const noexcept { return x_; }
    [[nodiscard]] const NetworkState& y() const noexcept { return y_; }
    [[nodiscard]] std::int64_t l1() const noexcept { return l1_; }
    [[nodiscard]] PolicyKind policy() const noexcept { return policy_; }

private:
    [[nodiscard]] int route_count(const NetworkState& s, const Call& c) const;
    void add_to(NetworkState& s, bool is_x, Node u, Node v, Node via);
    void remove_from(NetworkState& s, bool is_x, CallId id);

    NetworkState x_;
    NetworkState y_;
    PolicyKind policy_;
    std::int64_t l1_ = 0;
    std::vector<Node> candidates_;
};

CoupledStepResult coupled_step(CoupledPair& pair, Rng& rng);

struct GrowthStep {
    int step = 0;
    double mean_l1 = 0.0;
    double se_l1 = 0.0;
    /// mean_l1[t] / mean_l1[t-1]; NaN when the previous mean is 0.
    double growth_factor = 0.0;
    /// Delta-method standard error of the growth factor.
    double se_growth = 0.0;
    double bound = 0.0;  // 1 + 12 d / N
};

struct GrowthReport {
    std::vector<GrowthStep> steps;  // steps[0] is the initial distance
    std::int64_t frozen_steps = 0;  // replica-steps where either side was frozen
};

/// Runs `replicas` coupled chains from (x0, y0) for `steps` steps each, replica
/// r seeded with replica_seed(seed, r), and aggregates per-step l1 statistics
/// in replica order. `threads` = 0 picks the hardware concurrency.
[[nodiscard]] GrowthReport coupling_growth_experiment(const NetworkState& x0, const NetworkState& y0,
                                                      PolicyKind policy, int steps, int replicas,
                                                      std::uint64_t seed, unsigned threads = 0);

}  // namespace dar
