#pragma once

// Shared helpers for the test binaries: random states and small utilities.

#include <cstdint>
#include <vector>

#include "dar/network_state.hpp"
#include "dar/rng.hpp"
#include "dar/routing.hpp"
#include "dar/simulation.hpp"

namespace dar::test {

inline ModelParams params(int n, int capacity, int choices, double lambda = 1.0) {
    ModelParams p;
    p.n = n;
    p.capacity = capacity;
    p.choices = choices;
    p.lambda = lambda;
    return p;
}

/// State reached from empty by `events` CTMC events under `policy`.
inline NetworkState reachable_state(const ModelParams& p, std::uint64_t seed, int events,
                                    PolicyKind policy = PolicyKind::Bdar) {
    NetworkState s(p);
    Rng rng(seed);
    for (int e = 0; e < events; ++e) step_ctmc(s, rng, policy);
    return s;
}

/// Arbitrary feasible state: `attempts` random direct or alternative placements,
/// skipped when they would exceed capacity. Not necessarily reachable under any policy,
/// which makes it a harsher input for identities that hold on all of S.
inline NetworkState scattered_state(const ModelParams& p, std::uint64_t seed, int attempts) {
    NetworkState s(p);
    Rng rng(seed);
    for (int i = 0; i < attempts; ++i) {
        const NodePair e = sample_endpoints(rng, p.n);
        if (p.n > 2 && rng.bernoulli(0.5)) {
            const Node w = sample_candidates(rng, p.n, e.lo, e.hi, 1).front();
            if (s.via_feasible(e.lo, e.hi, w)) s.add_alternative(e.lo, e.hi, w);
        } else if (s.direct_feasible(e.lo, e.hi)) {
            s.add_direct(e.lo, e.hi);
        }
    }
    return s;
}

/// Link loads recounted from the call registry alone, indexed by pair_index.
inline std::vector<int> recount_loads(const NetworkState& s) {
    const int n = s.n();
    std::vector<int> load(s.num_links(), 0);
    for (const Call& c : s.calls()) {
        if (c.direct()) {
            ++load[pair_index(n, c.u, c.v)];
        } else {
            ++load[pair_index(n, c.u, c.via)];
            ++load[pair_index(n, c.v, c.via)];
        }
    }
    return load;
}

}  // namespace dar::test
