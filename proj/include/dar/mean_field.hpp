#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "dar/params.hpp"

namespace dar {

enum class OdeVariant { WithDirect, NoDirect };

struct OdeParams {
    double lambda = 1.0;
    int capacity = 1;
    int choices = 1;
    OdeVariant variant = OdeVariant::WithDirect;

    /// lambda >= 0 (the ODE is well defined at lambda = 0), capacity >= 1, choices >= 1.
    void validate() const;
};

/// ODE parameters matching a simulated model; Fdar has no mean-field field here.
OdeParams ode_params_for(const ModelParams& params, PolicyKind policy);

inline constexpr double kSimplexTolerance = 1e-9;

class SimplexViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point of the probability simplex over link loads 0..C.
class SimplexVector {
public:
    /// Throws SimplexViolation if a component is below -1e-9 or the sum is more
    /// than 1e-9 away from 1. Components in [-1e-9, 0) are clipped to 0.
    explicit SimplexVector(std::vector<double> xi);

    /// All mass at load k.
    static SimplexVector unit(int capacity, int k);
    /// Normalized load profile f_{v,.} / (n-1).
    static SimplexVector from_profile(std::span<const int> profile);

    [[nodiscard]] std::span<const double> values() const noexcept { return xi_; }
    [[nodiscard]] double operator[](std::size_t k) const noexcept { return xi_[k]; }
    [[nodiscard]] std::size_t size() const noexcept { return xi_.size(); }
    [[nodiscard]] int capacity() const noexcept { return static_cast<int>(xi_.size()) - 1; }

private:
    std::vector<double> xi_;
};

/// g_j(xi) for one j in [0, C-1]. NoDirect drops the leading xi(C) factor.
[[nodiscard]] double g_field(std::span<const double> xi, const OdeParams& params, int j);
/// (g_0, ..., g_{C-1}) in O(C d).
[[nodiscard]] std::vector<double> g_fields(std::span<const double> xi, const OdeParams& params);

/// The drift F(xi); `xi` need not lie on the simplex.
[[nodiscard]] std::vector<double> F_field(std::span<const double> xi, const OdeParams& params);
void F_field(std::span<const double> xi, const OdeParams& params, std::span<double> out);

struct LipschitzBounds {
    double general = 0.0;      // 8 d^2 (lambda + 1) (C + 1)^2
    double specialized = 0.0;  // 2 lambda + 2 C + 6 when d = 1, otherwise equal to `general`

    [[nodiscard]] double best() const noexcept { return specialized < general ? specialized : general; }
};

/// l_inf Lipschitz constants of F on the sub-simplex {xi >= 0, sum xi <= 1}.
[[nodiscard]] LipschitzBounds lipschitz_bound(const OdeParams& params);

/// Largest admissible integration step, 0.5 / lipschitz_bound(params).best().
[[nodiscard]] double max_step(const OdeParams& params);

struct OdeTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] const std::vector<double>& back() const { return states.back(); }
};

/// Classical fourth-order Runge-Kutta on [0, t0] with step at most h.
/// If `output_times` is empty every step is recorded, otherwise only the listed
/// (sorted, within [0, t0]) times, which the integrator lands on exactly.
/// After each step, components below -1e-9 or a mass defect above 1e-9 raise
/// SimplexViolation; smaller negative parts are clipped and the vector renormalized.
[[nodiscard]] OdeTrajectory integrate(const SimplexVector& xi0, const OdeParams& params, double t0, double h,
                                      std::span<const double> output_times = {});

class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FixedPointOptions {
    double residual_tolerance = 1e-12;
    double settle_chunk = 10.0;   // time units integrated per settling round
    int settle_rounds = 20;
    double settle_residual = 1e-8;
    int newton_iterations = 60;
};

/// A simplex root of F: settles by integrating from e_0, then polishes with a
/// damped Newton iteration on {F_1..F_C = 0, sum xi = 1}.
[[nodiscard]] SimplexVector fixed_point(const OdeParams& params, const FixedPointOptions& options = {});

/// Explicit constants of the law-of-large-numbers theorems, in log space.
struct TheoremConstants {
    double lambda = 0.0;
    int choices = 1;
    int capacity = 1;
    double t0 = 0.0;

    double log_gamma = 0.0;
    double gamma = 0.0;  // underflows to 0 for any realistic parameters
    double n0_polynomial_term = 0.0;
    double log_n0_polynomial_term = 0.0;
    /// ln(e^{8/gamma}) = 8/gamma; +inf once it exceeds the double range.
    double log_n0_exponential_term = 0.0;
    /// ln(8/gamma), always finite.
    double log_log_n0_exponential_term = 0.0;
    /// Exponent coefficient in the error envelope: 216(l+1)d^2(C+1)^3, or 216(l+1)(C+1) if d = 1.
    double envelope_rate = 0.0;
    /// Per-step drift constants c1, c2 for phi1 (d = 1 variants when choices == 1).
    double drift_c1 = 0.0;
    double drift_c2 = 0.0;
    /// Exponent coefficient of the E phi(X_t) bound: 208(l+1)d^2(C+1)^3, or 208(l+1)(C+1).
    double phi_growth_rate = 0.0;
    /// Prefactor of the node-aggregated statement (23, versus 64 per node).
    double aggregated_prefactor = 23.0;

    /// ln of the per-node deviation bound for horizon t (t plays the role of t0),
    /// n nodes, initial phi value phi0 and initial profile gap initial_gap.
    [[nodiscard]] double log_error_envelope(double t, double n, double phi0, double initial_gap) const;
    /// ln of 2 e^{rate t}(phi0 + 3 log n / sqrt n).
    [[nodiscard]] double log_phi_bound(double t, double n, double phi0) const;
};

[[nodiscard]] TheoremConstants theorem_constants(double lambda, int choices, int capacity, double t0);

}  // namespace dar
