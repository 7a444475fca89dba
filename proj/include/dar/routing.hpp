#pragma once

#include <span>
#include <vector>

#include "dar/network_state.hpp"
#include "dar/params.hpp"
#include "dar/rng.hpp"

namespace dar {

struct RouteDecision {
    enum class Outcome { Direct, Via, Blocked };

    Outcome outcome = Outcome::Blocked;
    Node via = kDirect;
    // Zero-based position of `via` in the candidate list; -1 unless outcome == Via.
    int slot = -1;

    static RouteDecision direct() { return {Outcome::Direct, kDirect, -1}; }
    static RouteDecision blocked() { return {Outcome::Blocked, kDirect, -1}; }
    static RouteDecision through(Node w, int slot) { return {Outcome::Via, w, slot}; }

    [[nodiscard]] bool is_direct() const noexcept { return outcome == Outcome::Direct; }
    [[nodiscard]] bool is_via() const noexcept { return outcome == Outcome::Via; }
    [[nodiscard]] bool is_blocked() const noexcept { return outcome == Outcome::Blocked; }

    friend bool operator==(const RouteDecision&, const RouteDecision&) = default;
};

/// Routes one arrival between u and v given the ordered candidate intermediates.
///
/// Bdar: the direct link if it has spare capacity; otherwise, among candidates
/// whose two legs both have spare capacity, the first one minimising the larger
/// leg load. Fdar: direct if possible, else the first feasible candidate.
/// NoDirectBdar: the Bdar candidate rule, never the direct link.
/// Pure: the state is not modified.
[[nodiscard]] RouteDecision route_call(const NetworkState& state, PolicyKind policy, Node u, Node v,
                                       std::span<const Node> candidates);

/// Fills `out` with independent uniform draws from {0..n-1} \ {u, v}, in order.
void sample_candidates(Rng& rng, int n, Node u, Node v, std::span<Node> out);
[[nodiscard]] std::vector<Node> sample_candidates(Rng& rng, int n, Node u, Node v, int d);

/// Uniform unordered pair of distinct endpoints, returned with u < v.
[[nodiscard]] NodePair sample_endpoints(Rng& rng, int n);

/// Applies a routing decision as an arrival; returns the new call id, or nothing when blocked.
std::optional<CallId> apply_decision(NetworkState& state, Node u, Node v, const RouteDecision& decision);

}  // namespace dar
