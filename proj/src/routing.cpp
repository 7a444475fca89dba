#include "dar/routing.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dar {

RouteDecision route_call(const NetworkState& state, PolicyKind policy, Node u, Node v,
                         std::span<const Node> candidates) {
    if (u == v) throw std::invalid_argument("call endpoints must be distinct");
    const int cap = state.capacity();
    if (policy != PolicyKind::NoDirectBdar && state.load(u, v) < cap) return RouteDecision::direct();

    int best_slot = -1;
    int best_max = cap;  // only loads < cap are feasible
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Node w = candidates[i];
        if (w == u || w == v) throw std::invalid_argument("candidate " + std::to_string(w) + " is an endpoint");
        const int lu = state.load(u, w);
        const int lv = state.load(v, w);
        if (lu >= cap || lv >= cap) continue;
        if (policy == PolicyKind::Fdar) return RouteDecision::through(w, static_cast<int>(i));
        const int m = std::max(lu, lv);
        if (m < best_max) {
            best_max = m;
            best_slot = static_cast<int>(i);
        }
    }
    if (best_slot < 0) return RouteDecision::blocked();
    return RouteDecision::through(candidates[static_cast<std::size_t>(best_slot)], best_slot);
}

void sample_candidates(Rng& rng, int n, Node u, Node v, std::span<Node> out) {
    if (n < 3) throw std::invalid_argument("alternative routes need n >= 3");
    const Node lo = std::min(u, v);
    const Node hi = std::max(u, v);
    for (Node& w : out) {
        auto r = static_cast<Node>(rng.below(static_cast<std::uint64_t>(n - 2)));
        if (r >= lo) ++r;
        if (r >= hi) ++r;
        w = r;
    }
}

std::vector<Node> sample_candidates(Rng& rng, int n, Node u, Node v, int d) {
    std::vector<Node> out(static_cast<std::size_t>(d));
    sample_candidates(rng, n, u, v, out);
    return out;
}

NodePair sample_endpoints(Rng& rng, int n) {
    // A uniform ordered pair projects to a uniform unordered pair.
    const auto a = static_cast<Node>(rng.below(static_cast<std::uint64_t>(n)));
    auto b = static_cast<Node>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (b >= a) ++b;
    return {std::min(a, b), std::max(a, b)};
}

std::optional<CallId> apply_decision(NetworkState& state, Node u, Node v, const RouteDecision& decision) {
    switch (decision.outcome) {
        case RouteDecision::Outcome::Direct: return state.add_direct(u, v);
        case RouteDecision::Outcome::Via: return state.add_alternative(u, v, decision.via);
        case RouteDecision::Outcome::Blocked: break;
    }
    return std::nullopt;
}

}  // namespace dar
