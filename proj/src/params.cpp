#include "dar/params.hpp"

#include <cmath>
#include <stdexcept>

namespace dar {

void ModelParams::validate() const {
    if (n < 2) throw std::invalid_argument("n must be at least 2");
    if (capacity < 1) throw std::invalid_argument("capacity must be at least 1");
    if (choices < 1) throw std::invalid_argument("choices (d) must be at least 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("lambda must be a positive finite number");
}

std::int64_t ModelParams::departure_slots() const noexcept {
    return static_cast<std::int64_t>(std::floor(6.0 * arrival_rate()));
}

std::string_view to_string(PolicyKind policy) noexcept {
    switch (policy) {
        case PolicyKind::Bdar: return "bdar";
        case PolicyKind::Fdar: return "fdar";
        case PolicyKind::NoDirectBdar: return "nodirect";
    }
    return "bdar";
}

PolicyKind parse_policy(std::string_view text) {
    if (text == "bdar" || text == "BDAR") return PolicyKind::Bdar;
    if (text == "fdar" || text == "FDAR") return PolicyKind::Fdar;
    if (text == "nodirect" || text == "NoDirectBDAR" || text == "nodirect-bdar")
        return PolicyKind::NoDirectBdar;
    throw std::invalid_argument("unknown routing policy: " + std::string(text));
}

NodePair pair_nodes(int n, std::size_t index) noexcept {
    // Row u holds n-1-u pairs; walk rows. n is small enough that this is cheap,
    // and callers on hot paths iterate pairs directly instead.
    Node u = 0;
    auto row = static_cast<std::size_t>(n - 1);
    while (index >= row) {
        index -= row;
        ++u;
        --row;
    }
    return {u, u + 1 + static_cast<Node>(index)};
}

}  // namespace dar
