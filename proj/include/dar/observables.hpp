#pragma once

#include <vector>

#include "dar/mean_field.hpp"
#include "dar/network_state.hpp"
#include "dar/params.hpp"

namespace dar {

struct PhiWitness {
    Node u = -1;
    Node v = -1;
    int j = -1;
    int k = -1;
};

/// Values of the three near-independence statistics and their maximum.
/// phi1: geometry independence, phi2: node exchangeability, phi3: dispersion
/// of alternatively routed calls. Each carries the (u, v, j, k) attaining it.
struct PhiReport {
    double phi1 = 0.0;
    double phi2 = 0.0;
    double phi3 = 0.0;
    double phi = 0.0;
    PhiWitness witness1;
    PhiWitness witness2;  // k unused
    PhiWitness witness3;  // j, k unused
};

/// Exact phi statistics, O(n^3 + n^2 C^2). Requires n >= 3.
[[nodiscard]] PhiReport phi_report(const NetworkState& state);

/// For a pair (u, v): counts[j][k] = #{w not in {u,v} : load(u,w) = j, load(v,w) = k}.
class JointLoadTable {
public:
    JointLoadTable(const NetworkState& state, Node u, Node v);

    [[nodiscard]] int count(int j, int k) const noexcept { return counts_[index(j, k)]; }
    /// #{w : load(u,w) = j}, equal to f_{u,j} - I^j_{uv}.
    [[nodiscard]] int row_sum(int j) const noexcept { return rows_[static_cast<std::size_t>(j)]; }
    /// #{w : load(v,w) = k}, equal to f_{v,k} - I^k_{uv}.
    [[nodiscard]] int col_sum(int k) const noexcept { return cols_[static_cast<std::size_t>(k)]; }
    /// #{w : max(load(u,w), load(v,w)) <= i}; zero for i < 0.
    [[nodiscard]] int max_at_most(int i) const noexcept {
        return i < 0 ? 0 : max_cum_[static_cast<std::size_t>(i)];
    }
    [[nodiscard]] int total() const noexcept { return total_; }
    [[nodiscard]] int capacity() const noexcept { return cap_; }

private:
    [[nodiscard]] std::size_t index(int j, int k) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(cap_ + 1) + static_cast<std::size_t>(k);
    }

    int cap_;
    int total_ = 0;
    std::vector<int> counts_;
    std::vector<int> rows_;
    std::vector<int> cols_;
    std::vector<int> max_cum_;
};

/// Signed components: phi1 = max |phi1_{u,v,j,k}| and so on.
[[nodiscard]] double phi1_component(const NetworkState& state, Node u, Node v, int j, int k);
[[nodiscard]] double phi2_component(const NetworkState& state, Node u, Node v, int j);
[[nodiscard]] double phi3_component(const NetworkState& state, Node u, Node v);

/// g_{v,j}(x): the rate (per unit lambda) at which alternatively routed arrivals
/// raise a link at v from load j to j+1, counted per link, for v in 0..n-1 and
/// j in 0..C-1.
class GTable {
public:
    GTable(int n, int capacity) : n_(n), cap_(capacity), values_(static_cast<std::size_t>(n * capacity), 0.0) {}

    [[nodiscard]] double at(Node v, int j) const {
        return values_[static_cast<std::size_t>(v) * static_cast<std::size_t>(cap_) + static_cast<std::size_t>(j)];
    }
    double& at(Node v, int j) {
        return values_[static_cast<std::size_t>(v) * static_cast<std::size_t>(cap_) + static_cast<std::size_t>(j)];
    }
    [[nodiscard]] int n() const noexcept { return n_; }
    [[nodiscard]] int capacity() const noexcept { return cap_; }

private:
    int n_;
    int cap_;
    std::vector<double> values_;
};

/// Every g_{v,j} at once. Each blocked endpoint pair is visited once and each
/// candidate route's contribution, (n-2)^{-d} times the number of candidate
/// tuples in which it wins, is added at both ends of both of its links.
/// Cost O(#blocked pairs * (n + C d)).
[[nodiscard]] GTable g_table(const NetworkState& state, PolicyKind policy = PolicyKind::Bdar);
[[nodiscard]] double g_exact(const NetworkState& state, Node v, int j, PolicyKind policy = PolicyKind::Bdar);

/// Generator applied to f_{v,j}: arrivals (direct at rate lambda per pair, plus
/// lambda g), departures at unit rate per call. Supports every policy.
[[nodiscard]] double drift_f(const NetworkState& state, Node v, int j, PolicyKind policy = PolicyKind::Bdar);

/// (A f_{v,j})(x) for all v, j, row-major n x (C+1), from one g_table pass.
[[nodiscard]] std::vector<double> drift_table(const NetworkState& state, PolicyKind policy = PolicyKind::Bdar);

inline constexpr int kBruteForceMaxNodes = 8;

/// The generator by exhaustive enumeration: every endpoint pair, every
/// candidate d-tuple, every live call, applied to a scratch copy and undone.
/// Row-major n x (C+1). Throws std::invalid_argument if n > 8.
[[nodiscard]] std::vector<double> generator_bruteforce_table(const NetworkState& state,
                                                             PolicyKind policy = PolicyKind::Bdar);
[[nodiscard]] double generator_bruteforce(const NetworkState& state, Node v, int j,
                                          PolicyKind policy = PolicyKind::Bdar);

enum class CrossMode { Exact, Cumulative };

/// f_{u,v,j,k} (Exact) or f_{u,v,<=j,k} (Cumulative) via the closed form in
/// the node profiles.
[[nodiscard]] double cross_statistic(const NetworkState& state, Node u, Node v, int j, int k, CrossMode mode);

struct MeanFieldGap {
    double g_exact = 0.0;
    double g_meanfield = 0.0;      // (n-1) g_j(zeta), zeta = f_{v,.}/(n-1)
    double gap = 0.0;              // |g_exact - g_meanfield|
    double g_meanfield_eta = 0.0;  // (n-2) g_j(eta), eta = f_{v,.}/(n-2)
    double gap_eta = 0.0;
};

/// Per-state diagnostic comparing g_{v,j}(x) with its mean-field plug-in.
[[nodiscard]] MeanFieldGap meanfield_gap(const NetworkState& state, Node v, int j,
                                         PolicyKind policy = PolicyKind::Bdar);
/// Same, reusing a precomputed g_table.
[[nodiscard]] MeanFieldGap meanfield_gap(const NetworkState& state, const GTable& table, Node v, int j,
                                         PolicyKind policy = PolicyKind::Bdar);

}  // namespace dar
