#include "dar/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "dar/parallel.hpp"
#include "dar/routing.hpp"
#include "dar/simulation.hpp"

namespace dar {

namespace {

void require_same(const NetworkState& x, const NetworkState& y) {
    if (!(x.params() == y.params())) throw std::invalid_argument("states have different parameters");
}

// Sum over nonzero alternative entries of one side, skipping keys the other side
// also holds (those are handled by the caller).
template <class Keep>
std::int64_t alt_distance(const NetworkState& x, const NetworkState& y, Keep keep) {
    std::int64_t total = 0;
    for (const auto& [key, cx] : x.alt_entries()) {
        if (!keep(key)) continue;
        const auto it = y.alt_entries().find(key);
        const int cy = it == y.alt_entries().end() ? 0 : it->second;
        total += std::abs(cx - cy);
    }
    for (const auto& [key, cy] : y.alt_entries()) {
        if (!keep(key)) continue;
        if (x.alt_entries().find(key) == x.alt_entries().end()) total += cy;
    }
    return total;
}

struct RouteKey {
    std::size_t pair;
    Node via;
    CallId id;

    friend bool operator<(const RouteKey& a, const RouteKey& b) {
        return std::tie(a.pair, a.via, a.id) < std::tie(b.pair, b.via, b.id);
    }
    [[nodiscard]] bool same_route(const RouteKey& o) const { return pair == o.pair && via == o.via; }
};

std::vector<RouteKey> canonical_calls(const NetworkState& s) {
    std::vector<RouteKey> keys;
    keys.reserve(s.num_calls());
    for (const Call& c : s.calls()) keys.push_back({pair_index(s.n(), c.u, c.v), c.via, c.id});
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace

std::int64_t l1_distance(const NetworkState& x, const NetworkState& y) {
    require_same(x, y);
    std::int64_t total = 0;
    for (std::size_t p = 0; p < x.num_links(); ++p) total += std::abs(x.direct_at(p) - y.direct_at(p));
    return total + alt_distance(x, y, [](std::uint64_t) { return true; });
}

std::int64_t node_distance(const NetworkState& x, const NetworkState& y, Node v) {
    require_same(x, y);
    const int n = x.n();
    if (v < 0 || v >= n) throw std::out_of_range("node out of range");
    std::int64_t total = 0;
    for (Node u = 0; u < n; ++u)
        if (u != v) total += std::abs(x.direct_count(u, v) - y.direct_count(u, v));
    // An alternative coordinate (e, w) touches v when v is an endpoint of e or v = w.
    const auto un = static_cast<std::uint64_t>(n);
    return total + alt_distance(x, y, [&](std::uint64_t key) {
               const auto via = static_cast<Node>(key % un);
               if (via == v) return true;
               const NodePair e = pair_nodes(n, static_cast<std::size_t>(key / un));
               return e.lo == v || e.hi == v;
           });
}

DistanceReport distance_report(const NetworkState& x, const NetworkState& y) {
    DistanceReport report;
    report.l1 = l1_distance(x, y);
    report.per_node.resize(static_cast<std::size_t>(x.n()));
    for (Node v = 0; v < x.n(); ++v) report.per_node[static_cast<std::size_t>(v)] = node_distance(x, y, v);
    return report;
}

Pairing build_pairing(const NetworkState& x, const NetworkState& y) {
    require_same(x, y);
    const std::vector<RouteKey> xs = canonical_calls(x);
    const std::vector<RouteKey> ys = canonical_calls(y);
    Pairing out;
    std::vector<CallId> spare_x;
    std::vector<CallId> spare_y;

    // Merge the two sorted lists route by route.
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < xs.size() || j < ys.size()) {
        if (j == ys.size() || (i < xs.size() && !xs[i].same_route(ys[j]) &&
                               std::tie(xs[i].pair, xs[i].via) < std::tie(ys[j].pair, ys[j].via))) {
            spare_x.push_back(xs[i++].id);
        } else if (i == xs.size() || !xs[i].same_route(ys[j])) {
            spare_y.push_back(ys[j++].id);
        } else {
            out.slots.push_back({xs[i++].id, ys[j++].id});
            ++out.same_route;
        }
    }

    const std::size_t cross = std::min(spare_x.size(), spare_y.size());
    for (std::size_t k = 0; k < cross; ++k) out.slots.push_back({spare_x[k], spare_y[k]});
    out.cross = cross;
    for (std::size_t k = cross; k < spare_x.size(); ++k) out.slots.push_back({spare_x[k], std::nullopt});
    for (std::size_t k = cross; k < spare_y.size(); ++k) out.slots.push_back({std::nullopt, spare_y[k]});
    out.unpaired = out.slots.size() - out.same_route - out.cross;
    return out;
}

CoupledPair::CoupledPair(NetworkState x, NetworkState y, PolicyKind policy)
    : x_(std::move(x)), y_(std::move(y)), policy_(policy) {
    l1_ = l1_distance(x_, y_);
    candidates_.resize(static_cast<std::size_t>(x_.params().choices));
}

int CoupledPair::route_count(const NetworkState& s, const Call& c) const {
    return c.direct() ? s.direct_count(c.u, c.v) : s.alt_count(c.u, c.v, c.via);
}

void CoupledPair::add_to(NetworkState& s, bool is_x, Node u, Node v, Node via) {
    const Call probe{0, std::min(u, v), std::max(u, v), via};
    const int mine = route_count(s, probe);
    const int other = route_count(is_x ? y_ : x_, probe);
    l1_ += mine >= other ? 1 : -1;
    if (via == kDirect) {
        s.add_direct(u, v);
    } else {
        s.add_alternative(u, v, via);
    }
}

void CoupledPair::remove_from(NetworkState& s, bool is_x, CallId id) {
    const Call c = s.call(id);
    const int mine = route_count(s, c);
    const int other = route_count(is_x ? y_ : x_, c);
    l1_ += mine > other ? -1 : 1;
    s.remove(id);
}

CoupledStepResult CoupledPair::step(Rng& rng) {
    CoupledStepResult result;
    result.l1_before = l1_;
    result.x_frozen = !x_.regions().in_stilde;
    result.y_frozen = !y_.regions().in_stilde;
    if (result.x_frozen && result.y_frozen) {
        result.l1_after = l1_;
        return result;
    }
    const ModelParams& p = x_.params();
    if (rng.bernoulli(jump_arrival_probability(p))) {
        result.kind = CoupledStepKind::Arrival;
        const NodePair ends = sample_endpoints(rng, p.n);
        sample_candidates(rng, p.n, ends.lo, ends.hi, candidates_);
        for (const bool is_x : {true, false}) {
            if (is_x ? result.x_frozen : result.y_frozen) continue;
            NetworkState& s = is_x ? x_ : y_;
            const RouteDecision d = route_call(s, policy_, ends.lo, ends.hi, candidates_);
            if (!d.is_blocked()) add_to(s, is_x, ends.lo, ends.hi, d.is_direct() ? kDirect : d.via);
        }
    } else {
        result.kind = CoupledStepKind::Departure;
        const auto slot = rng.below(static_cast<std::uint64_t>(p.departure_slots()));
        if (!result.x_frozen && !result.y_frozen) {
            // The pairing is a function of the current states; it is only
            // needed when the slot is occupied.
            if (slot < std::max(x_.num_calls(), y_.num_calls())) {
                const Pairing pairing = build_pairing(x_, y_);
                const Pairing::Entry& e = pairing.slots[static_cast<std::size_t>(slot)];
                if (e.x) remove_from(x_, true, *e.x);
                if (e.y) remove_from(y_, false, *e.y);
            }
        } else {
            const bool is_x = !result.x_frozen;
            NetworkState& s = is_x ? x_ : y_;
            if (slot < s.num_calls()) remove_from(s, is_x, s.call_at(static_cast<std::size_t>(slot)).id);
        }
    }
    result.l1_after = l1_;
    return result;
}

CoupledStepResult coupled_step(CoupledPair& pair, Rng& rng) { return pair.step(rng); }

GrowthReport coupling_growth_experiment(const NetworkState& x0, const NetworkState& y0, PolicyKind policy,
                                        int steps, int replicas, std::uint64_t seed, unsigned threads) {
    require_same(x0, y0);
    if (steps < 0 || replicas < 1) throw std::invalid_argument("need steps >= 0 and replicas >= 1");
    const auto width = static_cast<std::size_t>(steps) + 1;

    // Integer sums are exact, so the merge is independent of scheduling.
    struct Partial {
        std::vector<std::int64_t> s1, s2, cross;
        std::int64_t frozen = 0;
    };
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(replicas), 64);
    std::vector<Partial> partials(chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
        Partial& part = partials[c];
        part.s1.assign(width, 0);
        part.s2.assign(width, 0);
        part.cross.assign(width, 0);
        for (auto r = static_cast<std::size_t>(c); r < static_cast<std::size_t>(replicas); r += chunks) {
            Rng rng = Rng::for_replica(seed, r);
            CoupledPair pair(x0, y0, policy);
            std::int64_t prev = pair.l1();
            part.s1[0] += prev;
            part.s2[0] += prev * prev;
            for (int t = 1; t <= steps; ++t) {
                const CoupledStepResult res = pair.step(rng);
                if (res.x_frozen || res.y_frozen) ++part.frozen;
                const std::int64_t cur = pair.l1();
                const auto ut = static_cast<std::size_t>(t);
                part.s1[ut] += cur;
                part.s2[ut] += cur * cur;
                part.cross[ut] += cur * prev;
                prev = cur;
            }
        }
    });

    std::vector<std::int64_t> s1(width, 0), s2(width, 0), cross(width, 0);
    GrowthReport report;
    for (const Partial& part : partials) {
        for (std::size_t t = 0; t < width; ++t) {
            s1[t] += part.s1[t];
            s2[t] += part.s2[t];
            cross[t] += part.cross[t];
        }
        report.frozen_steps += part.frozen;
    }

    const double R = replicas;
    const double bound = 1.0 + 12.0 * x0.params().choices / static_cast<double>(x0.num_links());
    auto variance = [&](double sum, double sq) {
        return replicas > 1 ? std::max(0.0, (sq - sum * sum / R) / (R - 1.0)) : 0.0;
    };
    report.steps.resize(width);
    for (std::size_t t = 0; t < width; ++t) {
        GrowthStep& g = report.steps[t];
        g.step = static_cast<int>(t);
        g.mean_l1 = static_cast<double>(s1[t]) / R;
        g.se_l1 = std::sqrt(variance(static_cast<double>(s1[t]), static_cast<double>(s2[t])) / R);
        g.bound = bound;
        if (t == 0) {
            g.growth_factor = 1.0;
            continue;
        }
        const double prev_mean = static_cast<double>(s1[t - 1]) / R;
        if (prev_mean == 0.0) {
            g.growth_factor = std::numeric_limits<double>::quiet_NaN();
            g.se_growth = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double r = g.mean_l1 / prev_mean;
        const double var_a = variance(static_cast<double>(s1[t]), static_cast<double>(s2[t]));
        const double var_b = variance(static_cast<double>(s1[t - 1]), static_cast<double>(s2[t - 1]));
        const double cov = replicas > 1
                               ? (static_cast<double>(cross[t]) - static_cast<double>(s1[t]) *
                                                                      static_cast<double>(s1[t - 1]) / R) /
                                     (R - 1.0)
                               : 0.0;
        const double var_ratio = std::max(0.0, var_a + r * r * var_b - 2.0 * r * cov);
        g.growth_factor = r;
        g.se_growth = std::sqrt(var_ratio / R) / prev_mean;
    }
    return report;
}

}  // namespace dar
