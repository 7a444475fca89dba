// Randomized invariant checks: each case draws fresh parameters and states per seed.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "dar/coupling.hpp"
#include "dar/observables.hpp"
#include "dar/routing.hpp"
#include "dar/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dar;
using test::params;

namespace {

constexpr int kSeeds = 40;

ModelParams random_params(Rng& rng, int n_min = 3, int n_max = 12) {
    return params(n_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_max - n_min + 1))),
                  1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(3)),
                  0.2 + 2.0 * rng.uniform01());
}

PolicyKind random_policy(Rng& rng) {
    const PolicyKind all[] = {PolicyKind::Bdar, PolicyKind::Fdar, PolicyKind::NoDirectBdar};
    return all[rng.below(3)];
}

void check_structure(const NetworkState& s) {
    const auto loads = test::recount_loads(s);
    for (Node u = 0; u < s.n(); ++u) {
        int total = 0;
        for (int k = 0; k <= s.capacity(); ++k) total += s.f(u, k);
        REQUIRE(total == s.n() - 1);
        for (Node v = u + 1; v < s.n(); ++v) {
            REQUIRE(s.load(u, v) == loads[pair_index(s.n(), u, v)]);
            REQUIRE(s.decomposed_load(u, v) == s.load(u, v));
            REQUIRE(s.load(u, v) <= s.capacity());
        }
    }
}

int max_leg(const NetworkState& s, Node u, Node v, Node w) { return std::max(s.load(u, w), s.load(v, w)); }

}  // namespace

TEST_CASE("load identity, profile conservation and capacity along random paths") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        const ModelParams p = random_params(rng);
        const PolicyKind policy = random_policy(rng);
        NetworkState s(p);
        for (int e = 0; e < 300; ++e) {
            const std::int64_t before = s.norm1();
            const StepOutcome o = step_ctmc(s, rng, policy);
            // One event per step.
            REQUIRE(std::llabs(s.norm1() - before) <= 1);
            if (o.kind == StepKind::Blocked) REQUIRE(s.norm1() == before);
            if (e % 10 == 0) check_structure(s);
        }
        s.check_invariants();
    }
}

TEST_CASE("arrival followed by its departure restores the counts") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 1000);
        const ModelParams p = random_params(rng);
        NetworkState s = test::scattered_state(p, static_cast<std::uint64_t>(seed), 5 * p.n);
        for (int trial = 0; trial < 30; ++trial) {
            const NetworkState before = s;
            const NodePair e = sample_endpoints(rng, p.n);
            const auto cand = sample_candidates(rng, p.n, e.lo, e.hi, p.choices);
            const RouteDecision d = route_call(s, random_policy(rng), e.lo, e.hi, cand);
            const auto id = apply_decision(s, e.lo, e.hi, d);
            if (!id) {
                REQUIRE(d.is_blocked());
                continue;
            }
            s.apply(Departure{*id});
            REQUIRE(s.same_counts(before));
        }
    }
}

TEST_CASE("routing rules") {
    for (int seed = 1; seed <= 200; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 2000);
        const ModelParams p = random_params(rng, 4, 9);
        const NetworkState s = test::scattered_state(p, static_cast<std::uint64_t>(seed), 8 * p.n);
        const NetworkState copy = s;
        const NodePair e = sample_endpoints(rng, p.n);
        const int d = 1 + static_cast<int>(rng.below(4));
        std::vector<Node> cand = sample_candidates(rng, p.n, e.lo, e.hi, d);

        const RouteDecision b = route_call(s, PolicyKind::Bdar, e.lo, e.hi, cand);
        const RouteDecision f = route_call(s, PolicyKind::Fdar, e.lo, e.hi, cand);
        const RouteDecision nd = route_call(s, PolicyKind::NoDirectBdar, e.lo, e.hi, cand);
        REQUIRE(s.same_counts(copy));

        CHECK(b.is_direct() == (s.load(e.lo, e.hi) < p.capacity));
        CHECK_FALSE(nd.is_direct());
        if (d == 1) CHECK(b == f);

        // Balanced choice: the first candidate of least max-leg load among feasible ones.
        int best = -1;
        for (int r = 0; r < d; ++r) {
            const Node w = cand[static_cast<std::size_t>(r)];
            if (max_leg(s, e.lo, e.hi, w) >= p.capacity) continue;
            if (best < 0 || max_leg(s, e.lo, e.hi, w) < max_leg(s, e.lo, e.hi, cand[static_cast<std::size_t>(best)])) best = r;
        }
        if (best < 0) {
            CHECK(nd.is_blocked());
        } else {
            CHECK(nd == RouteDecision::through(cand[static_cast<std::size_t>(best)], best));
        }
        if (!b.is_direct()) CHECK(b == nd);

        // First fit.
        if (!f.is_direct()) {
            int first = -1;
            for (int r = 0; r < d && first < 0; ++r)
                if (s.via_feasible(e.lo, e.hi, cand[static_cast<std::size_t>(r)])) first = r;
            if (first < 0) {
                CHECK(f.is_blocked());
            } else {
                CHECK(f == RouteDecision::through(cand[static_cast<std::size_t>(first)], first));
            }
        }

        // Reordering candidates that are strictly worse than the winner keeps the winner.
        if (nd.is_via()) {
            const int win = max_leg(s, e.lo, e.hi, nd.via);
            std::vector<std::size_t> worse;
            for (std::size_t r = 0; r < cand.size(); ++r)
                if (max_leg(s, e.lo, e.hi, cand[r]) > win) worse.push_back(r);
            std::vector<Node> shuffled = cand;
            for (std::size_t i = worse.size(); i > 1; --i) {
                const std::size_t j = rng.below(i);
                std::swap(shuffled[worse[i - 1]], shuffled[worse[j]]);
            }
            CHECK(route_call(s, PolicyKind::NoDirectBdar, e.lo, e.hi, shuffled).via == nd.via);
        }
    }
}

TEST_CASE("jump chain moves the call count by at most one") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 3000);
        const ModelParams p = random_params(rng);
        const PolicyKind policy = random_policy(rng);
        NetworkState s(p);
        for (int t = 0; t < 500; ++t) {
            const std::int64_t before = s.norm1();
            step_jump_chain(s, rng, policy);
            REQUIRE(std::llabs(s.norm1() - before) <= 1);
        }
        check_structure(s);
    }
}

TEST_CASE("coupled steps") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 4000);
        const ModelParams p = random_params(rng, 4, 10);
        const PolicyKind policy = random_policy(rng);
        const NetworkState x0 = test::reachable_state(p, static_cast<std::uint64_t>(seed), 10 * p.n, policy);
        NetworkState y0 = x0;
        const int drop = std::min<int>(1 + static_cast<int>(rng.below(8)), static_cast<int>(y0.num_calls()));
        for (int i = 0; i < drop; ++i) y0.remove(y0.call_at(rng.below(y0.num_calls())).id);
        CoupledPair pair(x0, y0, policy);
        for (int t = 0; t < 400; ++t) {
            const CoupledStepResult r = pair.step(rng);
            const std::int64_t delta = r.l1_after - r.l1_before;
            if (r.kind == CoupledStepKind::Departure) REQUIRE((delta >= -2 && delta <= 0));
            if (r.kind == CoupledStepKind::Arrival) REQUIRE(delta <= 2);
            REQUIRE(pair.l1() == l1_distance(pair.x(), pair.y()));
        }
    }
}

TEST_CASE("node distance bounds the link load differences") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 5000);
        const ModelParams p = random_params(rng, 4, 10);
        const NetworkState x = test::scattered_state(p, static_cast<std::uint64_t>(seed), 6 * p.n);
        const NetworkState y = test::scattered_state(p, static_cast<std::uint64_t>(seed) + 77, 6 * p.n);
        const DistanceReport r = distance_report(x, y);
        std::int64_t total = 0;
        for (Node v = 0; v < p.n; ++v) {
            std::int64_t diff = 0;
            for (Node w = 0; w < p.n; ++w)
                if (w != v) diff += std::abs(x.load(v, w) - y.load(v, w));
            CHECK(2 * r.per_node[static_cast<std::size_t>(v)] >= diff);
            CHECK(r.per_node[static_cast<std::size_t>(v)] == node_distance(x, y, v));
            total += r.per_node[static_cast<std::size_t>(v)];
        }
        // Each direct coordinate is seen from two nodes, each alternative one from three.
        CHECK(total <= 3 * r.l1);
        CHECK(r.l1 == l1_distance(y, x));
    }
}

TEST_CASE("observables on random states") {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 6000);
        const ModelParams p = random_params(rng, 3, 6);
        const NetworkState s = test::scattered_state(p, static_cast<std::uint64_t>(seed), 6 * p.n);
        const PhiReport r = phi_report(s);
        const oracle::Phi o = oracle::phi(s);
        CHECK(std::abs(r.phi1 - o.phi1) <= 1e-12);
        CHECK(std::abs(r.phi2 - o.phi2) <= 1e-12);
        CHECK(std::abs(r.phi3 - o.phi3) <= 1e-12);
        const auto forms = oracle::phi2_forms(s);
        CHECK(std::abs(forms[0] - forms[2]) <= 1e-14);
        for (auto policy : {PolicyKind::Bdar, PolicyKind::Fdar, PolicyKind::NoDirectBdar}) {
            const auto t = drift_table(s, policy);
            for (Node v = 0; v < p.n; ++v) {
                double sum = 0.0;
                for (int j = 0; j <= p.capacity; ++j) sum += t[static_cast<std::size_t>(v * (p.capacity + 1) + j)];
                CHECK(std::abs(sum) <= 1e-12);
            }
        }
    }
}
