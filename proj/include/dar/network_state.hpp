#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dar/params.hpp"

namespace dar {

using CallId = std::uint32_t;

/// Route tag of a directly routed call.
inline constexpr Node kDirect = -1;

struct Call {
    CallId id = 0;
    Node u = 0;  // u < v
    Node v = 0;
    Node via = kDirect;

    [[nodiscard]] bool direct() const noexcept { return via == kDirect; }
};

struct DirectArrival {
    Node u;
    Node v;
};
struct AltArrival {
    Node u;
    Node v;
    Node via;
};
struct Departure {
    CallId id;
};
using Event = std::variant<DirectArrival, AltArrival, Departure>;

/// Raised when an arrival would push a link above capacity.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RegionFlags {
    bool in_s1 = true;      // ||x||_1 <= 2 lambda N
    bool in_s0 = true;      // ||x||_1 <= 4 lambda N
    bool in_stilde = true;  // ||x||_1 <= 6 lambda N
};

/// Load vector of the loss network on K_n: direct counts x(e,0), alternative
/// counts x(e,w), induced link loads x(e), per-node load profiles f_{v,k} and
/// the registry of live calls. Every mutation is O(1) expected.
class NetworkState {
public:
    explicit NetworkState(const ModelParams& params);

    [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
    [[nodiscard]] int n() const noexcept { return params_.n; }
    [[nodiscard]] int capacity() const noexcept { return params_.capacity; }
    [[nodiscard]] std::size_t num_links() const noexcept { return load_.size(); }

    [[nodiscard]] int load(Node u, Node v) const { return load_[checked_pair(u, v)]; }
    [[nodiscard]] int load_at(std::size_t pair) const noexcept { return load_[pair]; }
    [[nodiscard]] int direct_count(Node u, Node v) const { return direct_[checked_pair(u, v)]; }
    [[nodiscard]] int direct_at(std::size_t pair) const noexcept { return direct_[pair]; }
    /// x({u,v}, w): calls between u and v routed via w.
    [[nodiscard]] int alt_count(Node u, Node v, Node w) const;
    /// Sum over w of x({u,v}, w).
    [[nodiscard]] int alt_between(Node u, Node v) const { return alt_total_[checked_pair(u, v)]; }

    /// Nonzero alternative counts keyed by alt_key(pair, via).
    [[nodiscard]] const std::unordered_map<std::uint64_t, int>& alt_entries() const noexcept {
        return alt_;
    }
    [[nodiscard]] std::uint64_t alt_key(std::size_t pair, Node via) const noexcept {
        return static_cast<std::uint64_t>(pair) * static_cast<std::uint64_t>(params_.n) +
               static_cast<std::uint64_t>(via);
    }

    /// (f_{v,0}, ..., f_{v,C}): number of links at v carrying exactly k calls.
    [[nodiscard]] std::span<const int> f_profile(Node v) const;
    [[nodiscard]] int f(Node v, int k) const noexcept {
        return profile_[static_cast<std::size_t>(v) * static_cast<std::size_t>(params_.capacity + 1) +
                        static_cast<std::size_t>(k)];
    }

    /// ||x||_1 = sum_e x(e,0) + sum_{e,w} x(e,w), i.e. the number of live calls.
    [[nodiscard]] std::int64_t norm1() const noexcept { return static_cast<std::int64_t>(calls_.size()); }
    [[nodiscard]] RegionFlags regions() const noexcept;

    [[nodiscard]] std::size_t num_calls() const noexcept { return calls_.size(); }
    [[nodiscard]] const Call& call_at(std::size_t slot) const { return calls_.at(slot); }
    [[nodiscard]] std::span<const Call> calls() const noexcept { return calls_; }
    [[nodiscard]] bool is_live(CallId id) const noexcept;
    [[nodiscard]] const Call& call(CallId id) const;

    [[nodiscard]] bool direct_feasible(Node u, Node v) const { return load(u, v) < params_.capacity; }
    [[nodiscard]] bool via_feasible(Node u, Node v, Node w) const {
        return load(u, w) < params_.capacity && load(v, w) < params_.capacity;
    }

    CallId add_direct(Node u, Node v);
    CallId add_alternative(Node u, Node v, Node via);
    /// Removes a live call and returns its record.
    Call remove(CallId id);
    /// Arrivals return the id of the new call; departures return nullopt.
    std::optional<CallId> apply(const Event& event);

    /// The load identity x({u,v}) = x({u,v},0) + sum_w (x({u,w},v) + x({v,w},u)),
    /// evaluated from the counts. O(n).
    [[nodiscard]] int decomposed_load(Node u, Node v) const;

    /// Recomputes every derived quantity from the call registry and throws
    /// std::logic_error on the first mismatch.
    void check_invariants() const;

    /// Equality of all counts (x(e,0), x(e,w), loads); call ids are ignored.
    [[nodiscard]] bool same_counts(const NetworkState& other) const;

private:
    [[nodiscard]] std::size_t checked_pair(Node u, Node v) const;
    void check_node(Node v) const;
    void bump_load(std::size_t pair, Node a, Node b, int delta);
    CallId register_call(Node u, Node v, Node via);

    ModelParams params_;
    std::vector<int> direct_;
    std::vector<int> load_;
    std::vector<int> alt_total_;
    std::unordered_map<std::uint64_t, int> alt_;
    std::vector<int> profile_;
    std::vector<Call> calls_;
    std::vector<std::uint32_t> slot_of_;
    std::vector<CallId> free_ids_;
};

/// Line-delimited snapshot: header lines `n`, `C`, `d`, `lambda`, `calls`, then
/// one `u v D -1` or `u v A w` line per call.
void write_snapshot(std::ostream& out, const NetworkState& state);
/// Replays the calls through NetworkState::apply, so every invariant is rechecked.
NetworkState read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const NetworkState& state);
NetworkState load_snapshot(const std::string& path);

}  // namespace dar
