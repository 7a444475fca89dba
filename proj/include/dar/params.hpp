#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace dar {

// Nodes are numbered 0..n-1.
using Node = int;

struct ModelParams {
    int n = 2;
    int capacity = 1;
    int choices = 1;
    double lambda = 1.0;

    /// Throws std::invalid_argument unless n >= 2, capacity >= 1, choices >= 1, lambda > 0.
    void validate() const;

    [[nodiscard]] std::size_t num_links() const noexcept {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
    }
    /// Total arrival rate lambda * N, N = n(n-1)/2.
    [[nodiscard]] double arrival_rate() const noexcept {
        return lambda * static_cast<double>(num_links());
    }
    /// floor(6 lambda N): size of the potential-departure slot range of the jump chain.
    [[nodiscard]] std::int64_t departure_slots() const noexcept;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

enum class PolicyKind { Bdar, Fdar, NoDirectBdar };

std::string_view to_string(PolicyKind policy) noexcept;
PolicyKind parse_policy(std::string_view text);

// Canonical index of the unordered pair {u, v}, u != v, in [0, n(n-1)/2).
[[nodiscard]] inline std::size_t pair_index(int n, Node u, Node v) noexcept {
    if (u > v) {
        const Node t = u;
        u = v;
        v = t;
    }
    const auto a = static_cast<std::size_t>(u);
    const auto b = static_cast<std::size_t>(v);
    const auto nn = static_cast<std::size_t>(n);
    return a * (2 * nn - a - 1) / 2 + (b - a - 1);
}

struct NodePair {
    Node lo;
    Node hi;
};

/// Inverse of pair_index.
[[nodiscard]] NodePair pair_nodes(int n, std::size_t index) noexcept;

}  // namespace dar
