#include "dar/network_state.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

namespace dar {

namespace {

constexpr std::uint32_t kNoSlot = std::numeric_limits<std::uint32_t>::max();

}  // namespace

NetworkState::NetworkState(const ModelParams& params) : params_(params) {
    params_.validate();
    const std::size_t links = params_.num_links();
    direct_.assign(links, 0);
    load_.assign(links, 0);
    alt_total_.assign(links, 0);
    const auto width = static_cast<std::size_t>(params_.capacity + 1);
    profile_.assign(static_cast<std::size_t>(params_.n) * width, 0);
    for (Node v = 0; v < params_.n; ++v)
        profile_[static_cast<std::size_t>(v) * width] = params_.n - 1;
}

void NetworkState::check_node(Node v) const {
    if (v < 0 || v >= params_.n)
        throw std::out_of_range("node " + std::to_string(v) + " out of range for n=" +
                                std::to_string(params_.n));
}

std::size_t NetworkState::checked_pair(Node u, Node v) const {
    check_node(u);
    check_node(v);
    if (u == v) throw std::invalid_argument("link endpoints must be distinct");
    return pair_index(params_.n, u, v);
}

int NetworkState::alt_count(Node u, Node v, Node w) const {
    const std::size_t pair = checked_pair(u, v);
    check_node(w);
    const auto it = alt_.find(alt_key(pair, w));
    return it == alt_.end() ? 0 : it->second;
}

std::span<const int> NetworkState::f_profile(Node v) const {
    check_node(v);
    const auto width = static_cast<std::size_t>(params_.capacity + 1);
    return {profile_.data() + static_cast<std::size_t>(v) * width, width};
}

RegionFlags NetworkState::regions() const noexcept {
    const double norm = static_cast<double>(norm1());
    const double base = params_.arrival_rate();
    return {norm <= 2.0 * base, norm <= 4.0 * base, norm <= 6.0 * base};
}

bool NetworkState::is_live(CallId id) const noexcept {
    return id < slot_of_.size() && slot_of_[id] != kNoSlot;
}

const Call& NetworkState::call(CallId id) const {
    if (!is_live(id)) throw std::invalid_argument("unknown call id " + std::to_string(id));
    return calls_[slot_of_[id]];
}

void NetworkState::bump_load(std::size_t pair, Node a, Node b, int delta) {
    const int before = load_[pair];
    const int after = before + delta;
    load_[pair] = after;
    const auto width = static_cast<std::size_t>(params_.capacity + 1);
    for (const Node end : {a, b}) {
        int* row = profile_.data() + static_cast<std::size_t>(end) * width;
        --row[before];
        ++row[after];
    }
}

CallId NetworkState::register_call(Node u, Node v, Node via) {
    CallId id;
    if (!free_ids_.empty()) {
        id = free_ids_.back();
        free_ids_.pop_back();
    } else {
        id = static_cast<CallId>(slot_of_.size());
        slot_of_.push_back(kNoSlot);
    }
    slot_of_[id] = static_cast<std::uint32_t>(calls_.size());
    calls_.push_back(Call{id, std::min(u, v), std::max(u, v), via});
    return id;
}

CallId NetworkState::add_direct(Node u, Node v) {
    const std::size_t pair = checked_pair(u, v);
    if (load_[pair] >= params_.capacity)
        throw CapacityError("direct link {" + std::to_string(u) + "," + std::to_string(v) + "} is full");
    ++direct_[pair];
    bump_load(pair, u, v, +1);
#ifndef NDEBUG
    assert(decomposed_load(u, v) == load_[pair]);
#endif
    return register_call(u, v, kDirect);
}

CallId NetworkState::add_alternative(Node u, Node v, Node via) {
    const std::size_t pair = checked_pair(u, v);
    check_node(via);
    if (via == u || via == v) throw std::invalid_argument("intermediate node must differ from endpoints");
    const std::size_t leg_u = pair_index(params_.n, u, via);
    const std::size_t leg_v = pair_index(params_.n, v, via);
    if (load_[leg_u] >= params_.capacity || load_[leg_v] >= params_.capacity)
        throw CapacityError("alternative route via " + std::to_string(via) + " has a full leg");
    ++alt_[alt_key(pair, via)];
    ++alt_total_[pair];
    bump_load(leg_u, u, via, +1);
    bump_load(leg_v, v, via, +1);
#ifndef NDEBUG
    assert(decomposed_load(u, via) == load_[leg_u]);
    assert(decomposed_load(v, via) == load_[leg_v]);
#endif
    return register_call(u, v, via);
}

Call NetworkState::remove(CallId id) {
    if (!is_live(id)) throw std::invalid_argument("unknown call id " + std::to_string(id));
    const std::uint32_t slot = slot_of_[id];
    const Call gone = calls_[slot];
    const std::size_t pair = pair_index(params_.n, gone.u, gone.v);
    if (gone.direct()) {
        --direct_[pair];
        bump_load(pair, gone.u, gone.v, -1);
    } else {
        const auto it = alt_.find(alt_key(pair, gone.via));
        if (--it->second == 0) alt_.erase(it);
        --alt_total_[pair];
        bump_load(pair_index(params_.n, gone.u, gone.via), gone.u, gone.via, -1);
        bump_load(pair_index(params_.n, gone.v, gone.via), gone.v, gone.via, -1);
    }
    // Swap-remove keeps the registry dense.
    const std::uint32_t last = static_cast<std::uint32_t>(calls_.size() - 1);
    if (slot != last) {
        calls_[slot] = calls_[last];
        slot_of_[calls_[slot].id] = slot;
    }
    calls_.pop_back();
    slot_of_[id] = kNoSlot;
    free_ids_.push_back(id);
    return gone;
}

std::optional<CallId> NetworkState::apply(const Event& event) {
    if (const auto* d = std::get_if<DirectArrival>(&event)) return add_direct(d->u, d->v);
    if (const auto* a = std::get_if<AltArrival>(&event)) return add_alternative(a->u, a->v, a->via);
    remove(std::get<Departure>(event).id);
    return std::nullopt;
}

int NetworkState::decomposed_load(Node u, Node v) const {
    const std::size_t pair = checked_pair(u, v);
    int total = direct_[pair];
    for (Node w = 0; w < params_.n; ++w) {
        if (w == u || w == v) continue;
        const auto a = alt_.find(alt_key(pair_index(params_.n, u, w), v));
        if (a != alt_.end()) total += a->second;
        const auto b = alt_.find(alt_key(pair_index(params_.n, v, w), u));
        if (b != alt_.end()) total += b->second;
    }
    return total;
}

void NetworkState::check_invariants() const {
    const std::size_t links = params_.num_links();
    std::vector<int> direct(links, 0), load(links, 0), alt_total(links, 0);
    std::unordered_map<std::uint64_t, int> alt;
    for (std::size_t slot = 0; slot < calls_.size(); ++slot) {
        const Call& c = calls_[slot];
        if (!is_live(c.id) || slot_of_[c.id] != slot) throw std::logic_error("registry slot map corrupted");
        if (c.u >= c.v) throw std::logic_error("call endpoints not canonical");
        const std::size_t pair = pair_index(params_.n, c.u, c.v);
        if (c.direct()) {
            ++direct[pair];
            ++load[pair];
        } else {
            if (c.via == c.u || c.via == c.v) throw std::logic_error("call routed via its own endpoint");
            ++alt[alt_key(pair, c.via)];
            ++alt_total[pair];
            ++load[pair_index(params_.n, c.u, c.via)];
            ++load[pair_index(params_.n, c.v, c.via)];
        }
    }
    if (direct != direct_) throw std::logic_error("direct counts disagree with registry");
    if (load != load_) throw std::logic_error("link loads disagree with registry");
    if (alt_total != alt_total_) throw std::logic_error("per-pair alternative totals disagree");
    if (alt != alt_) throw std::logic_error("alternative counts disagree with registry");
    for (std::size_t p = 0; p < links; ++p)
        if (load_[p] < 0 || load_[p] > params_.capacity) throw std::logic_error("capacity violated");
    for (Node u = 0; u < params_.n; ++u) {
        for (Node v = u + 1; v < params_.n; ++v)
            if (decomposed_load(u, v) != load_[pair_index(params_.n, u, v)])
                throw std::logic_error("load identity violated");
        std::vector<int> profile(static_cast<std::size_t>(params_.capacity + 1), 0);
        for (Node w = 0; w < params_.n; ++w)
            if (w != u) ++profile[static_cast<std::size_t>(load_[pair_index(params_.n, u, w)])];
        const auto stored = f_profile(u);
        if (!std::equal(profile.begin(), profile.end(), stored.begin()))
            throw std::logic_error("load profile of node " + std::to_string(u) + " is stale");
    }
}

bool NetworkState::same_counts(const NetworkState& other) const {
    return params_ == other.params_ && direct_ == other.direct_ && load_ == other.load_ &&
           alt_ == other.alt_;
}

void write_snapshot(std::ostream& out, const NetworkState& state) {
    const ModelParams& p = state.params();
    out << "n " << p.n << '\n'
        << "C " << p.capacity << '\n'
        << "d " << p.choices << '\n';
    out.precision(17);
    out << "lambda " << p.lambda << '\n';
    // Canonical call order so equal states serialize identically.
    std::vector<Call> calls(state.calls().begin(), state.calls().end());
    std::sort(calls.begin(), calls.end(), [](const Call& a, const Call& b) {
        return std::tie(a.u, a.v, a.via) < std::tie(b.u, b.v, b.via);
    });
    out << "calls " << calls.size() << '\n';
    for (const Call& c : calls) {
        if (c.direct())
            out << c.u << ' ' << c.v << " D -1\n";
        else
            out << c.u << ' ' << c.v << " A " << c.via << '\n';
    }
}

NetworkState read_snapshot(std::istream& in) {
    std::map<std::string, std::string> header;
    std::string line;
    std::size_t expected_calls = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream fields(line);
        std::string key, value;
        fields >> key >> value;
        if (value.empty()) throw std::invalid_argument("malformed snapshot header line: " + line);
        if (key == "calls") {
            expected_calls = std::stoull(value);
            break;
        }
        header[key] = value;
    }
    for (const char* key : {"n", "C", "d", "lambda"})
        if (!header.count(key)) throw std::invalid_argument(std::string("snapshot missing field ") + key);
    ModelParams params;
    params.n = std::stoi(header["n"]);
    params.capacity = std::stoi(header["C"]);
    params.choices = std::stoi(header["d"]);
    params.lambda = std::stod(header["lambda"]);
    NetworkState state(params);
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream fields(line);
        Node u = 0, v = 0, via = 0;
        std::string tag;
        if (!(fields >> u >> v >> tag >> via)) throw std::invalid_argument("malformed call line: " + line);
        if (tag == "D")
            state.apply(DirectArrival{u, v});
        else if (tag == "A")
            state.apply(AltArrival{u, v, via});
        else
            throw std::invalid_argument("unknown route tag " + tag);
        ++seen;
    }
    if (seen != expected_calls)
        throw std::invalid_argument("snapshot declares " + std::to_string(expected_calls) + " calls but lists " +
                                    std::to_string(seen));
    return state;
}

void save_snapshot(const std::string& path, const NetworkState& state) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_snapshot(out, state);
}

NetworkState load_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_snapshot(in);
}

}  // namespace dar
