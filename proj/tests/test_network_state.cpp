#include <doctest.h>

#include <sstream>

#include "dar/network_state.hpp"
#include "support.hpp"

using namespace dar;
using test::params;

TEST_CASE("empty states") {
    NetworkState s3(params(3, 1, 1));
    CHECK(s3.num_links() == 3);
    for (Node v = 0; v < 3; ++v) {
        CHECK(s3.f(v, 0) == 2);
        CHECK(s3.f(v, 1) == 0);
    }

    NetworkState s2(params(2, 5, 1));
    CHECK(s2.num_links() == 1);
    CHECK(s2.f(0, 0) == 1);
    CHECK(s2.f(1, 0) == 1);

    ModelParams p = params(4, 2, 2, 0.5);
    NetworkState s4(p);
    CHECK(s4.num_links() == 6);
    CHECK(s4.regions().in_s1);

    NetworkState s5(params(5, 3, 1));
    const auto prof = s5.f_profile(2);
    CHECK(prof.size() == 4);
    CHECK(prof[0] == 4);
    CHECK(prof[1] + prof[2] + prof[3] == 0);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(NetworkState(params(1, 1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(NetworkState(params(4, 0, 1)), std::invalid_argument);
    CHECK_THROWS_AS(NetworkState(params(4, 1, 0)), std::invalid_argument);
    CHECK_THROWS_AS(NetworkState(params(4, 1, 1, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(NetworkState(params(4, 1, 1, -1.0)), std::invalid_argument);
}

TEST_CASE("pair_index is a bijection onto [0, N)") {
    for (int n : {2, 3, 7, 20}) {
        std::vector<int> hit(static_cast<std::size_t>(n * (n - 1) / 2), 0);
        for (Node u = 0; u < n; ++u)
            for (Node v = u + 1; v < n; ++v) {
                const auto i = pair_index(n, u, v);
                REQUIRE(i < hit.size());
                ++hit[i];
                CHECK(pair_index(n, v, u) == i);
                const NodePair back = pair_nodes(n, i);
                CHECK(back.lo == u);
                CHECK(back.hi == v);
            }
        for (int h : hit) CHECK(h == 1);
    }
}

TEST_CASE("scripted events on K_3") {
    NetworkState s(params(3, 1, 1));
    const CallId direct = *s.apply(DirectArrival{0, 1});
    CHECK(s.load(0, 1) == 1);
    CHECK(s.f(0, 1) == 1);
    CHECK(s.f(0, 0) == 1);

    // A second call between 0 and 1 routed via 2 loads both legs.
    const CallId alt = *s.apply(AltArrival{0, 1, 2});
    CHECK(s.load(0, 2) == 1);
    CHECK(s.load(1, 2) == 1);
    CHECK(s.alt_count(0, 1, 2) == 1);
    CHECK(s.alt_between(0, 1) == 1);
    CHECK(s.decomposed_load(0, 2) == 1);
    CHECK(s.direct_count(0, 2) == 0);

    CHECK_FALSE(s.apply(Departure{direct}).has_value());
    CHECK(s.load(0, 1) == 0);
    NetworkState only_alt(params(3, 1, 1));
    only_alt.add_alternative(0, 1, 2);
    CHECK(s.same_counts(only_alt));
    CHECK(s.is_live(alt));
    CHECK_FALSE(s.is_live(direct));
    s.check_invariants();
}

TEST_CASE("profile with one direct call") {
    NetworkState s(params(3, 2, 1));
    s.add_direct(0, 1);
    const auto f = s.f_profile(0);
    CHECK(f[0] == 1);
    CHECK(f[1] == 1);
    CHECK(f[2] == 0);
}

TEST_CASE("profiles agree with a recount after scripted events") {
    NetworkState s(params(4, 2, 1));
    s.add_direct(0, 1);
    s.add_alternative(0, 1, 3);
    s.add_alternative(2, 3, 1);
    const auto loads = test::recount_loads(s);
    for (Node v = 0; v < 4; ++v) {
        std::vector<int> f(3, 0);
        for (Node w = 0; w < 4; ++w)
            if (w != v) ++f[static_cast<std::size_t>(loads[pair_index(4, v, w)])];
        for (int k = 0; k <= 2; ++k) CHECK(s.f(v, k) == f[static_cast<std::size_t>(k)]);
    }
}

TEST_CASE("region thresholds") {
    NetworkState s(params(3, 10, 1, 1.0));
    CHECK(s.regions().in_s1);
    for (int i = 0; i < 7; ++i) s.add_direct(0, 1);
    const RegionFlags r = s.regions();
    CHECK(s.norm1() == 7);
    CHECK_FALSE(r.in_s1);
    CHECK(r.in_s0);
    CHECK(r.in_stilde);
    for (int i = 0; i < 3; ++i) s.add_direct(0, 1);
    for (int i = 0; i < 3; ++i) s.add_direct(0, 2);
    CHECK_FALSE(s.regions().in_s0);
    CHECK(s.regions().in_stilde);
    for (int i = 0; i < 6; ++i) s.add_direct(1, 2);
    CHECK(s.norm1() == 19);
    CHECK_FALSE(s.regions().in_stilde);
}

TEST_CASE("regions agree with the registry count on random states") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const NetworkState s = test::scattered_state(params(6, 3, 2, 0.25), seed, 60);
        const double N = 15.0;
        const auto calls = static_cast<double>(s.calls().size());
        const RegionFlags r = s.regions();
        CHECK(r.in_s1 == (calls <= 2 * 0.25 * N));
        CHECK(r.in_s0 == (calls <= 4 * 0.25 * N));
        CHECK(r.in_stilde == (calls <= 6 * 0.25 * N));
    }
}

TEST_CASE("invalid events are rejected without side effects") {
    NetworkState s(params(4, 1, 1));
    s.add_direct(0, 1);
    const NetworkState before = s;
    CHECK_THROWS_AS(s.add_direct(0, 1), CapacityError);
    CHECK_THROWS_AS(s.add_alternative(0, 2, 1), CapacityError);
    CHECK_THROWS_AS(s.add_alternative(0, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(s.add_direct(2, 2), std::invalid_argument);
    CHECK_THROWS_AS(s.add_direct(0, 4), std::out_of_range);
    CHECK_THROWS_AS(s.remove(12345), std::invalid_argument);
    CHECK(s.same_counts(before));
    s.check_invariants();
}

TEST_CASE("snapshot round trip") {
    const NetworkState s = test::scattered_state(params(7, 3, 2, 0.7), 42, 80);
    std::stringstream io;
    write_snapshot(io, s);
    const NetworkState back = read_snapshot(io);
    CHECK(back.params() == s.params());
    CHECK(back.same_counts(s));
    back.check_invariants();
}

TEST_CASE("malformed snapshots") {
    std::stringstream missing("n 4\nC 1\ncalls 0\n");
    CHECK_THROWS_AS(read_snapshot(missing), std::invalid_argument);
    std::stringstream over("n 3\nC 1\nd 1\nlambda 1\ncalls 2\n0 1 D -1\n0 1 D -1\n");
    CHECK_THROWS_AS(read_snapshot(over), CapacityError);
    std::stringstream count("n 3\nC 2\nd 1\nlambda 1\ncalls 2\n0 1 D -1\n");
    CHECK_THROWS_AS(read_snapshot(count), std::invalid_argument);
}
