#include "dar/observables.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dar/routing.hpp"

namespace dar {

namespace {

void require_nodes(const NetworkState& state, Node u, Node v) {
    const int n = state.n();
    if (u < 0 || u >= n || v < 0 || v >= n) throw std::out_of_range("node out of range");
    if (u == v) throw std::invalid_argument("nodes must be distinct");
}

void require_three(const NetworkState& state) {
    if (state.n() < 3) throw std::invalid_argument("needs n >= 3");
}

// sum_{r=1}^d a^{r-1} b^{d-r}
double choice_weight(double a, double b, int d) {
    double sum = 1.0;
    double pb = 1.0;
    for (int r = d - 1; r >= 1; --r) {
        pb *= b;
        sum = sum * a + pb;
    }
    return sum;
}

std::size_t flat(Node v, int k, int cap) {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(cap + 1) + static_cast<std::size_t>(k);
}

}  // namespace

JointLoadTable::JointLoadTable(const NetworkState& state, Node u, Node v)
    : cap_(state.capacity()),
      counts_(static_cast<std::size_t>((cap_ + 1) * (cap_ + 1)), 0),
      rows_(static_cast<std::size_t>(cap_ + 1), 0),
      cols_(static_cast<std::size_t>(cap_ + 1), 0),
      max_cum_(static_cast<std::size_t>(cap_ + 1), 0) {
    require_nodes(state, u, v);
    const int n = state.n();
    for (Node w = 0; w < n; ++w) {
        if (w == u || w == v) continue;
        const int j = state.load_at(pair_index(n, u, w));
        const int k = state.load_at(pair_index(n, v, w));
        ++counts_[index(j, k)];
        ++rows_[static_cast<std::size_t>(j)];
        ++cols_[static_cast<std::size_t>(k)];
        ++max_cum_[static_cast<std::size_t>(std::max(j, k))];
        ++total_;
    }
    for (std::size_t i = 1; i < max_cum_.size(); ++i) max_cum_[i] += max_cum_[i - 1];
}

double phi1_component(const NetworkState& state, Node u, Node v, int j, int k) {
    require_three(state);
    const JointLoadTable table(state, u, v);
    const double m = state.n() - 2;
    return table.count(j, k) / m - static_cast<double>(table.row_sum(j)) * table.col_sum(k) / (m * m);
}

double phi2_component(const NetworkState& state, Node u, Node v, int j) {
    require_three(state);
    require_nodes(state, u, v);
    return (state.f(u, j) - state.f(v, j)) / static_cast<double>(state.n() - 2);
}

double phi3_component(const NetworkState& state, Node u, Node v) {
    require_three(state);
    require_nodes(state, u, v);
    return state.alt_between(u, v) / static_cast<double>(state.n() - 2);
}

PhiReport phi_report(const NetworkState& state) {
    require_three(state);
    const int n = state.n();
    const int cap = state.capacity();
    const double m = n - 2;
    PhiReport report;
    // Zero-valued statistics still report a valid pair.
    report.witness1 = {0, 1, 0, 0};
    report.witness2 = {0, 1, 0, -1};
    report.witness3 = {0, 1, -1, -1};

    // phi1 is symmetric under (u, j) <-> (v, k), so unordered pairs suffice.
    std::vector<int> load_u(static_cast<std::size_t>(n));
    std::vector<int> counts(static_cast<std::size_t>((cap + 1) * (cap + 1)));
    std::vector<int> rows(static_cast<std::size_t>(cap + 1));
    std::vector<int> cols(static_cast<std::size_t>(cap + 1));
    for (Node u = 0; u < n; ++u) {
        for (Node w = 0; w < n; ++w) load_u[static_cast<std::size_t>(w)] = w == u ? -1 : state.load(u, w);
        for (Node v = u + 1; v < n; ++v) {
            std::fill(counts.begin(), counts.end(), 0);
            std::fill(rows.begin(), rows.end(), 0);
            std::fill(cols.begin(), cols.end(), 0);
            for (Node w = 0; w < n; ++w) {
                if (w == u || w == v) continue;
                const int j = load_u[static_cast<std::size_t>(w)];
                const int k = state.load_at(pair_index(n, v, w));
                ++counts[static_cast<std::size_t>(j * (cap + 1) + k)];
                ++rows[static_cast<std::size_t>(j)];
                ++cols[static_cast<std::size_t>(k)];
            }
            for (int j = 0; j <= cap; ++j) {
                for (int k = 0; k <= cap; ++k) {
                    const double value =
                        std::abs(counts[static_cast<std::size_t>(j * (cap + 1) + k)] / m -
                                 static_cast<double>(rows[static_cast<std::size_t>(j)]) *
                                     cols[static_cast<std::size_t>(k)] / (m * m));
                    if (value > report.phi1) {
                        report.phi1 = value;
                        report.witness1 = {u, v, j, k};
                    }
                }
            }
        }
    }

    // phi2: the extreme nodes of each column of the profile matrix.
    for (int j = 0; j <= cap; ++j) {
        Node lo = 0;
        Node hi = 0;
        for (Node v = 1; v < n; ++v) {
            if (state.f(v, j) < state.f(lo, j)) lo = v;
            if (state.f(v, j) > state.f(hi, j)) hi = v;
        }
        const double value = (state.f(hi, j) - state.f(lo, j)) / m;
        if (value > report.phi2) {
            report.phi2 = value;
            report.witness2 = {hi, lo, j, -1};
        }
    }

    for (std::size_t p = 0; p < state.num_links(); ++p) {
        const NodePair e = pair_nodes(n, p);
        const double value = state.alt_between(e.lo, e.hi) / m;
        if (value > report.phi3) {
            report.phi3 = value;
            report.witness3 = {e.lo, e.hi, -1, -1};
        }
    }

    report.phi = std::max({report.phi1, report.phi2, report.phi3});
    return report;
}

GTable g_table(const NetworkState& state, PolicyKind policy) {
    const int n = state.n();
    const int cap = state.capacity();
    const int d = state.params().choices;
    GTable table(n, cap);
    if (n < 3) return table;
    const double m = n - 2;

    std::vector<int> leg_a(static_cast<std::size_t>(n));
    std::vector<int> leg_b(static_cast<std::size_t>(n));
    std::vector<int> cum(static_cast<std::size_t>(cap + 1));
    std::vector<double> weight(static_cast<std::size_t>(cap));

    for (std::size_t p = 0; p < state.num_links(); ++p) {
        if (policy != PolicyKind::NoDirectBdar && state.load_at(p) < cap) continue;
        const auto [a, b] = pair_nodes(n, p);
        std::fill(cum.begin(), cum.end(), 0);
        for (Node w = 0; w < n; ++w) {
            if (w == a || w == b) continue;
            const int la = state.load_at(pair_index(n, a, w));
            const int lb = state.load_at(pair_index(n, b, w));
            leg_a[static_cast<std::size_t>(w)] = la;
            leg_b[static_cast<std::size_t>(w)] = lb;
            ++cum[static_cast<std::size_t>(std::max(la, lb))];
        }
        for (int i = 1; i <= cap; ++i) cum[static_cast<std::size_t>(i)] += cum[static_cast<std::size_t>(i - 1)];
        if (cum[static_cast<std::size_t>(cap - 1)] == 0) continue;  // no feasible route

        if (policy == PolicyKind::Fdar) {
            // First feasible candidate wins: earlier slots all infeasible, later ones free.
            const double full = (m - cum[static_cast<std::size_t>(cap - 1)]) / m;
            std::fill(weight.begin(), weight.end(), choice_weight(full, 1.0, d) / m);
        } else {
            // Route with max leg load i wins at slot r when earlier slots have max > i
            // and later slots max >= i.
            for (int i = 0; i < cap; ++i) {
                const double worse = (m - cum[static_cast<std::size_t>(i)]) / m;
                const double not_better = (m - (i > 0 ? cum[static_cast<std::size_t>(i - 1)] : 0)) / m;
                weight[static_cast<std::size_t>(i)] = choice_weight(worse, not_better, d) / m;
            }
        }

        for (Node w = 0; w < n; ++w) {
            if (w == a || w == b) continue;
            const int la = leg_a[static_cast<std::size_t>(w)];
            const int lb = leg_b[static_cast<std::size_t>(w)];
            const int top = std::max(la, lb);
            if (top >= cap) continue;
            const double wt = weight[static_cast<std::size_t>(top)];
            table.at(a, la) += wt;
            table.at(w, la) += wt;
            table.at(b, lb) += wt;
            table.at(w, lb) += wt;
        }
    }
    return table;
}

double g_exact(const NetworkState& state, Node v, int j, PolicyKind policy) {
    if (v < 0 || v >= state.n()) throw std::out_of_range("node out of range");
    if (j < 0 || j >= state.capacity()) throw std::out_of_range("g index must lie in [0, C-1]");
    return g_table(state, policy).at(v, j);
}

std::vector<double> drift_table(const NetworkState& state, PolicyKind policy) {
    const int n = state.n();
    const int cap = state.capacity();
    const double lam = state.params().lambda;
    const bool direct = policy != PolicyKind::NoDirectBdar;
    const GTable g = g_table(state, policy);
    std::vector<double> out(static_cast<std::size_t>(n * (cap + 1)));
    for (Node v = 0; v < n; ++v) {
        for (int j = 0; j <= cap; ++j) {
            double value = -static_cast<double>(j) * state.f(v, j);
            if (j < cap) value += (j + 1.0) * state.f(v, j + 1) - lam * g.at(v, j);
            if (j > 0) value += lam * g.at(v, j - 1);
            if (direct) {
                if (j > 0) value += lam * state.f(v, j - 1);
                if (j < cap) value -= lam * state.f(v, j);
            }
            out[flat(v, j, cap)] = value;
        }
    }
    return out;
}

double drift_f(const NetworkState& state, Node v, int j, PolicyKind policy) {
    if (v < 0 || v >= state.n()) throw std::out_of_range("node out of range");
    if (j < 0 || j > state.capacity()) throw std::out_of_range("load index must lie in [0, C]");
    return drift_table(state, policy)[flat(v, j, state.capacity())];
}

std::vector<double> generator_bruteforce_table(const NetworkState& state, PolicyKind policy) {
    const int n = state.n();
    if (n > kBruteForceMaxNodes) throw std::invalid_argument("generator_bruteforce is limited to n <= 8");
    require_three(state);
    const int cap = state.capacity();
    const int d = state.params().choices;
    const double lam = state.params().lambda;
    const std::size_t width = static_cast<std::size_t>(n * (cap + 1));
    std::vector<double> out(width, 0.0);

    std::vector<int> before(width);
    for (Node v = 0; v < n; ++v)
        for (int k = 0; k <= cap; ++k) before[flat(v, k, cap)] = state.f(v, k);

    NetworkState scratch = state;
    auto accumulate = [&](double rate) {
        for (Node v = 0; v < n; ++v)
            for (int k = 0; k <= cap; ++k)
                out[flat(v, k, cap)] += rate * (scratch.f(v, k) - before[flat(v, k, cap)]);
    };

    const double tuple_rate = lam / std::pow(n - 2.0, d);
    std::vector<int> digits(static_cast<std::size_t>(d));
    std::vector<Node> others;
    std::vector<Node> candidates(static_cast<std::size_t>(d));
    for (std::size_t p = 0; p < state.num_links(); ++p) {
        const auto [a, b] = pair_nodes(n, p);
        others.clear();
        for (Node w = 0; w < n; ++w)
            if (w != a && w != b) others.push_back(w);
        std::fill(digits.begin(), digits.end(), 0);
        while (true) {
            for (int s = 0; s < d; ++s)
                candidates[static_cast<std::size_t>(s)] = others[static_cast<std::size_t>(digits[static_cast<std::size_t>(s)])];
            const RouteDecision decision = route_call(scratch, policy, a, b, candidates);
            if (const auto id = apply_decision(scratch, a, b, decision)) {
                accumulate(tuple_rate);
                scratch.remove(*id);
            }
            int s = d - 1;
            while (s >= 0 && ++digits[static_cast<std::size_t>(s)] == n - 2) digits[static_cast<std::size_t>(s--)] = 0;
            if (s < 0) break;
        }
    }

    for (const Call& call : state.calls()) {
        NetworkState after = state;
        after.remove(call.id);
        for (Node v = 0; v < n; ++v)
            for (int k = 0; k <= cap; ++k) out[flat(v, k, cap)] += after.f(v, k) - before[flat(v, k, cap)];
    }
    return out;
}

double generator_bruteforce(const NetworkState& state, Node v, int j, PolicyKind policy) {
    if (v < 0 || v >= state.n()) throw std::out_of_range("node out of range");
    if (j < 0 || j > state.capacity()) throw std::out_of_range("load index must lie in [0, C]");
    return generator_bruteforce_table(state, policy)[flat(v, j, state.capacity())];
}

double cross_statistic(const NetworkState& state, Node u, Node v, int j, int k, CrossMode mode) {
    require_three(state);
    require_nodes(state, u, v);
    const int cap = state.capacity();
    if (j < 0 || j > cap || k < 0 || k > cap) throw std::out_of_range("load index must lie in [0, C]");
    const int d = state.params().choices;
    const double m = state.n() - 2;
    const int link = state.load(u, v);

    auto at_most = [&](Node x, int i) {
        if (i < 0) return 0;
        int total = 0;
        for (int q = 0; q <= i; ++q) total += state.f(x, q);
        return total - (link <= i ? 1 : 0);
    };
    // Joint count of (w, w') pairs with both legs at most i, scaled by (n-2)^-2.
    auto joint = [&](int i) { return static_cast<double>(at_most(u, i)) * at_most(v, i) / (m * m); };

    const double lead_u = mode == CrossMode::Exact ? state.f(u, j) - (link == j ? 1 : 0) : at_most(u, j);
    const double lead_v = state.f(v, k) - (link == k ? 1 : 0);
    // Each slot factor is scaled by (n-2)^-2, which leaves a single 1/(n-2) in front.
    return lead_u * lead_v / m * choice_weight(1.0 - joint(j), 1.0 - joint(j - 1), d);
}

MeanFieldGap meanfield_gap(const NetworkState& state, const GTable& table, Node v, int j, PolicyKind policy) {
    const int cap = state.capacity();
    if (v < 0 || v >= state.n()) throw std::out_of_range("node out of range");
    if (j < 0 || j >= cap) throw std::out_of_range("g index must lie in [0, C-1]");
    const OdeParams params = ode_params_for(state.params(), policy);
    const std::span<const int> profile = state.f_profile(v);
    const double n1 = state.n() - 1;
    const double n2 = state.n() - 2;
    std::vector<double> zeta(profile.size());
    std::vector<double> eta(profile.size());
    for (std::size_t k = 0; k < profile.size(); ++k) {
        zeta[k] = profile[k] / n1;
        eta[k] = profile[k] / n2;
    }
    MeanFieldGap gap;
    gap.g_exact = table.at(v, j);
    gap.g_meanfield = n1 * g_field(zeta, params, j);
    gap.gap = std::abs(gap.g_exact - gap.g_meanfield);
    gap.g_meanfield_eta = n2 * g_field(eta, params, j);
    gap.gap_eta = std::abs(gap.g_exact - gap.g_meanfield_eta);
    return gap;
}

MeanFieldGap meanfield_gap(const NetworkState& state, Node v, int j, PolicyKind policy) {
    return meanfield_gap(state, g_table(state, policy), v, j, policy);
}

}  // namespace dar
