#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dar/mean_field.hpp"
#include "dar/rng.hpp"
#include "oracles.hpp"

using namespace dar;

namespace {

OdeParams ode(double lambda, int C, int d, OdeVariant variant = OdeVariant::WithDirect) {
    OdeParams p;
    p.lambda = lambda;
    p.capacity = C;
    p.choices = d;
    p.variant = variant;
    return p;
}

// Uniform point of the simplex (normalized exponentials), optionally with zeroed coordinates.
std::vector<double> random_simplex(Rng& rng, int size, double zero_prob = 0.0) {
    std::vector<double> x(static_cast<std::size_t>(size));
    double sum = 0.0;
    for (double& v : x) {
        v = rng.bernoulli(zero_prob) ? 0.0 : rng.exponential(1.0);
        sum += v;
    }
    if (sum == 0.0) {
        x[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(size)))] = 1.0;
        return x;
    }
    for (double& v : x) v /= sum;
    return x;
}

double binom(int n, int k, double p) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) * std::pow(p, k) *
           std::pow(1 - p, n - k);
}

}  // namespace

TEST_CASE("g at a hand-evaluated point") {
    const std::vector<double> xi{0.5, 0.5};
    CHECK(g_field(xi, ode(1, 1, 1), 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(g_field(xi, ode(1, 1, 1, OdeVariant::NoDirect), 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS((void)g_field(xi, ode(1, 1, 1), 1), std::out_of_range);
}

TEST_CASE("single-choice simplification") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const int C = 1 + static_cast<int>(rng.below(5));
        const auto xi = random_simplex(rng, C + 1, 0.2);
        for (int j = 0; j < C; ++j) {
            const double want = 2 * xi[static_cast<std::size_t>(C)] * (1 - xi[static_cast<std::size_t>(C)]) * xi[static_cast<std::size_t>(j)];
            CHECK(std::abs(g_field(xi, ode(1, C, 1), j) - want) <= 1e-12);
        }
    }
}

TEST_CASE("g agrees with the route enumeration") {
    Rng rng(2);
    for (int d = 1; d <= 3; ++d)
        for (int C = 1; C <= 3; ++C)
            for (int i = 0; i < 30; ++i) {
                const auto xi = random_simplex(rng, C + 1, 0.15);
                const auto g = g_fields(xi, ode(1, C, d));
                const auto gn = g_fields(xi, ode(1, C, d, OdeVariant::NoDirect));
                for (int j = 0; j < C; ++j) {
                    CHECK(std::abs(g[static_cast<std::size_t>(j)] - oracle::g_field(xi, d, j)) <= 1e-13);
                    CHECK(std::abs(gn[static_cast<std::size_t>(j)] - oracle::g_field(xi, d, j, false)) <= 1e-13);
                }
            }
}

TEST_CASE("F at the empty profile") {
    for (int C = 2; C <= 5; ++C) {
        std::vector<double> e0(static_cast<std::size_t>(C + 1), 0.0);
        e0[0] = 1.0;
        const auto F = F_field(e0, ode(1, C, 2));
        CHECK(F[0] == doctest::Approx(-1.0));
        CHECK(F[1] == doctest::Approx(1.0));
        for (int k = 2; k <= C; ++k) CHECK(F[static_cast<std::size_t>(k)] == 0.0);
    }
}

TEST_CASE("F conserves mass and points inward") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const int C = 1 + static_cast<int>(rng.below(4));
        const int d = 1 + static_cast<int>(rng.below(3));
        const double lambda = 3.0 * rng.uniform01();
        const auto variant = rng.bernoulli(0.5) ? OdeVariant::WithDirect : OdeVariant::NoDirect;
        const auto xi = random_simplex(rng, C + 1, 0.3);
        const auto F = F_field(xi, ode(lambda, C, d, variant));
        CHECK(std::abs(std::accumulate(F.begin(), F.end(), 0.0)) <= 1e-14);
        for (int k = 0; k <= C; ++k)
            if (xi[static_cast<std::size_t>(k)] == 0.0) CHECK(F[static_cast<std::size_t>(k)] >= -1e-14);
    }
}

TEST_CASE("Lipschitz audit") {
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        const int C = 1 + static_cast<int>(rng.below(4));
        const int d = 1 + static_cast<int>(rng.below(3));
        const OdeParams p = ode(0.1 + 3.0 * rng.uniform01(), C, d);
        // Points of the sub-simplex: mass at most 1.
        auto a = random_simplex(rng, C + 1);
        auto b = random_simplex(rng, C + 1);
        const double sa = rng.uniform01(), sb = rng.uniform01();
        for (auto& x : a) x *= sa;
        for (auto& x : b) x *= sb;
        const auto Fa = F_field(a, p);
        const auto Fb = F_field(b, p);
        double num = 0.0, den = 0.0;
        for (int k = 0; k <= C; ++k) {
            num = std::max(num, std::abs(Fa[static_cast<std::size_t>(k)] - Fb[static_cast<std::size_t>(k)]));
            den = std::max(den, std::abs(a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]));
        }
        if (den > 0) CHECK(num / den <= lipschitz_bound(p).best());
    }
    CHECK(lipschitz_bound(ode(1, 1, 1)).specialized == 10.0);
    CHECK(lipschitz_bound(ode(1, 1, 1)).general == 64.0);
    CHECK(max_step(ode(1, 1, 1)) == doctest::Approx(0.05));
}

TEST_CASE("integration stays on the simplex") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const int C = 1 + static_cast<int>(rng.below(4));
        const int d = 1 + static_cast<int>(rng.below(3));
        const OdeParams p = ode(0.2 + 2.0 * rng.uniform01(), C, d);
        const SimplexVector xi0(random_simplex(rng, C + 1, 0.3));
        const OdeTrajectory t = integrate(xi0, p, 10.0, max_step(p));
        for (const auto& x : t.states) {
            double sum = 0.0;
            for (double v : x) {
                CHECK(v >= -1e-9);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("pure death dynamics are binomial thinning") {
    // lambda = 0: each call leaves at rate 1 independently, so from all links at
    // load C the profile at time t is Binomial(C, e^{-t}).
    const int C = 4;
    const OdeParams p = ode(0.0, C, 2);
    const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
    const OdeTrajectory t = integrate(SimplexVector::unit(C, C), p, 2.0, max_step(p), grid);
    REQUIRE(t.size() == grid.size());
    for (std::size_t s = 0; s < grid.size(); ++s) {
        CHECK(t.times[s] == grid[s]);
        for (int k = 0; k <= C; ++k)
            CHECK(std::abs(t.states[s][static_cast<std::size_t>(k)] - binom(C, k, std::exp(-grid[s]))) <= 1e-9);
    }
}

TEST_CASE("fourth-order convergence") {
    // d = 1 has a small Lipschitz bound, so coarse steps are admissible.
    const OdeParams p = ode(1.0, 3, 1);
    const SimplexVector xi0 = SimplexVector::unit(3, 0);
    const auto ref = integrate(xi0, p, 1.0, 1e-3).back();
    auto err = [&](double h) {
        const auto x = integrate(xi0, p, 1.0, h).back();
        double e = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) e = std::max(e, std::abs(x[k] - ref[k]));
        return e;
    };
    const double ratio = err(0.03) / err(0.015);
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("fixed point for one circuit per link and one choice") {
    const double want = oracle::fixed_point_c1_d1();
    CHECK(want == doctest::Approx(0.5970).epsilon(5e-4));
    const SimplexVector fp = fixed_point(ode(1, 1, 1));
    CHECK(std::abs(fp[1] - want) <= 1e-9);
}

TEST_CASE("fixed points are roots of F") {
    for (int C : {1, 2, 3, 5})
        for (int d : {1, 2})
            for (double lambda : {0.5, 1.0, 2.0}) {
                const OdeParams p = ode(lambda, C, d);
                const SimplexVector fp = fixed_point(p);
                const auto F = F_field(fp.values(), p);
                for (double f : F) CHECK(std::abs(f) <= 1e-10);
            }
}

TEST_CASE("simplex vector validation") {
    CHECK_THROWS_AS(SimplexVector({0.5, 0.6}), SimplexViolation);
    CHECK_THROWS_AS(SimplexVector({1.1, -0.1}), SimplexViolation);
    const SimplexVector clipped({1.0 + 5e-10, -5e-10});
    CHECK(clipped[1] == 0.0);
    const std::vector<int> prof{3, 1, 0};
    const SimplexVector fp = SimplexVector::from_profile(prof);
    CHECK(fp[0] == 0.75);
    CHECK(fp.capacity() == 2);
}

TEST_CASE("output times out of range") {
    const std::vector<double> bad{0.5, 2.0};
    CHECK_THROWS((void)integrate(SimplexVector::unit(1, 0), ode(1, 1, 1), 1.0, 0.01, bad));
}

TEST_CASE("ODE parameters from a model") {
    ModelParams m;
    m.n = 10;
    m.capacity = 3;
    m.choices = 2;
    m.lambda = 0.7;
    const OdeParams p = ode_params_for(m, PolicyKind::NoDirectBdar);
    CHECK(p.variant == OdeVariant::NoDirect);
    CHECK(p.capacity == 3);
    CHECK(ode_params_for(m, PolicyKind::Bdar).variant == OdeVariant::WithDirect);
    CHECK_THROWS_AS((void)ode_params_for(m, PolicyKind::Fdar), std::invalid_argument);
}

TEST_CASE("theorem constants in log space") {
    const TheoremConstants k = theorem_constants(1.0, 1, 1, 1.0);
    CHECK(std::abs(k.log_gamma - (-824.6)) <= 0.1);
    CHECK(k.gamma == 0.0);
    CHECK(k.n0_polynomial_term == doctest::Approx(1073741824.0).epsilon(1e-12));
    CHECK(k.log_n0_polynomial_term == doctest::Approx(30 * std::log(2.0)).epsilon(1e-12));
    CHECK(std::isinf(k.log_n0_exponential_term));
    CHECK(k.log_log_n0_exponential_term == doctest::Approx(std::log(8.0) + 824.6135).epsilon(1e-6));
    CHECK(k.drift_c1 == doctest::Approx(104.0));
    CHECK(k.drift_c2 == doctest::Approx(128.0));

    const TheoremConstants k2 = theorem_constants(1.0, 2, 2, 1.0);
    CHECK(k2.drift_c1 == doctest::Approx(26.0 * 2 * 4 * 27));
    CHECK(k2.drift_c2 == doctest::Approx(64.0 * 4 * 27));
    CHECK(std::isfinite(k2.log_error_envelope(1.0, 1e6, 0.0, 0.0)));
    CHECK_THROWS_AS((void)theorem_constants(0.0, 1, 1, 1.0), std::invalid_argument);
}
