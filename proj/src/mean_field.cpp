#include "dar/mean_field.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dar {

void OdeParams::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ODE lambda must be >= 0");
    if (capacity < 1) throw std::invalid_argument("capacity must be at least 1");
    if (choices < 1) throw std::invalid_argument("choices (d) must be at least 1");
}

OdeParams ode_params_for(const ModelParams& params, PolicyKind policy) {
    if (policy == PolicyKind::Fdar) throw std::invalid_argument("no mean-field drift is defined for FDAR");
    return {params.lambda, params.capacity, params.choices,
            policy == PolicyKind::NoDirectBdar ? OdeVariant::NoDirect : OdeVariant::WithDirect};
}

SimplexVector::SimplexVector(std::vector<double> xi) : xi_(std::move(xi)) {
    if (xi_.size() < 2) throw std::invalid_argument("simplex vector needs at least two components");
    double sum = 0.0;
    for (double& x : xi_) {
        if (!(x >= -kSimplexTolerance)) throw SimplexViolation("negative simplex component " + std::to_string(x));
        if (x < 0.0) x = 0.0;
        sum += x;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw SimplexViolation("simplex components sum to " + std::to_string(sum));
}

SimplexVector SimplexVector::unit(int capacity, int k) {
    if (k < 0 || k > capacity) throw std::out_of_range("load index out of range");
    std::vector<double> xi(static_cast<std::size_t>(capacity + 1), 0.0);
    xi[static_cast<std::size_t>(k)] = 1.0;
    return SimplexVector(std::move(xi));
}

SimplexVector SimplexVector::from_profile(std::span<const int> profile) {
    const double total = std::accumulate(profile.begin(), profile.end(), 0.0);
    if (!(total > 0.0)) throw std::invalid_argument("empty load profile");
    std::vector<double> xi(profile.size());
    for (std::size_t k = 0; k < profile.size(); ++k) xi[k] = profile[k] / total;
    return SimplexVector(std::move(xi));
}

namespace {

// sum_{r=1}^d a^{r-1} b^{d-r}, by Horner's rule in a.
double choice_weight(double a, double b, int d) {
    double sum = 1.0;
    double pb = 1.0;
    for (int r = d - 1; r >= 1; --r) {
        pb *= b;
        sum = sum * a + pb;
    }
    return sum;
}

}  // namespace

std::vector<double> g_fields(std::span<const double> xi, const OdeParams& params) {
    const int cap = params.capacity;
    if (xi.size() != static_cast<std::size_t>(cap + 1)) throw std::invalid_argument("xi has wrong dimension");
    const int d = params.choices;
    std::vector<double> cum(static_cast<std::size_t>(cap + 1));
    std::partial_sum(xi.begin(), xi.end(), cum.begin());
    // weight[i] = sum_r (1 - xi(<=i)^2)^{r-1} (1 - xi(<=i-1)^2)^{d-r}, xi(<=-1) = 0.
    std::vector<double> weight(static_cast<std::size_t>(cap));
    for (int i = 0; i < cap; ++i) {
        const double a = 1.0 - cum[static_cast<std::size_t>(i)] * cum[static_cast<std::size_t>(i)];
        const double below = i > 0 ? cum[static_cast<std::size_t>(i - 1)] : 0.0;
        weight[static_cast<std::size_t>(i)] = choice_weight(a, 1.0 - below * below, d);
    }
    const double lead = params.variant == OdeVariant::WithDirect ? xi[static_cast<std::size_t>(cap)] : 1.0;
    std::vector<double> g(static_cast<std::size_t>(cap));
    double tail = 0.0;  // sum_{i=j+1}^{C-1} xi(i) weight[i]
    for (int j = cap - 1; j >= 0; --j) {
        const auto uj = static_cast<std::size_t>(j);
        g[uj] = 2.0 * lead * xi[uj] * (cum[uj] * weight[uj] + tail);
        tail += xi[uj] * weight[uj];
    }
    return g;
}

double g_field(std::span<const double> xi, const OdeParams& params, int j) {
    if (j < 0 || j >= params.capacity) throw std::out_of_range("g index must lie in [0, C-1]");
    return g_fields(xi, params)[static_cast<std::size_t>(j)];
}

void F_field(std::span<const double> xi, const OdeParams& params, std::span<double> out) {
    const int cap = params.capacity;
    if (xi.size() != static_cast<std::size_t>(cap + 1) || out.size() != xi.size())
        throw std::invalid_argument("F: dimension mismatch");
    const std::vector<double> g = g_fields(xi, params);
    const double lam = params.lambda;
    const bool direct = params.variant == OdeVariant::WithDirect;
    for (int k = 0; k <= cap; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        double value = -k * xi[uk];
        if (k < cap) value += (k + 1) * xi[uk + 1] - lam * g[uk];
        if (k > 0) value += lam * g[uk - 1];
        if (direct) {
            if (k > 0) value += lam * xi[uk - 1];
            if (k < cap) value -= lam * xi[uk];
        }
        out[uk] = value;
    }
}

std::vector<double> F_field(std::span<const double> xi, const OdeParams& params) {
    std::vector<double> out(xi.size());
    F_field(xi, params, out);
    return out;
}

LipschitzBounds lipschitz_bound(const OdeParams& params) {
    const double d = params.choices;
    const double c1 = params.capacity + 1.0;
    LipschitzBounds bounds;
    bounds.general = 8.0 * d * d * (params.lambda + 1.0) * c1 * c1;
    bounds.specialized =
        params.choices == 1 ? 2.0 * params.lambda + 2.0 * params.capacity + 6.0 : bounds.general;
    return bounds;
}

double max_step(const OdeParams& params) { return 0.5 / lipschitz_bound(params).best(); }

namespace {

void project_to_simplex(std::vector<double>& xi, double t) {
    double sum = 0.0;
    for (double& x : xi) {
        if (!(x >= -kSimplexTolerance))
            throw SimplexViolation("component " + std::to_string(x) + " below tolerance at t=" + std::to_string(t));
        if (x < 0.0) x = 0.0;
        sum += x;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw SimplexViolation("mass " + std::to_string(sum) + " drifted off the simplex at t=" + std::to_string(t));
    for (double& x : xi) x /= sum;
}

void rk4_step(std::vector<double>& xi, const OdeParams& params, double h, std::vector<double>* scratch) {
    const std::size_t m = xi.size();
    auto& k1 = scratch[0];
    auto& k2 = scratch[1];
    auto& k3 = scratch[2];
    auto& k4 = scratch[3];
    auto& tmp = scratch[4];
    F_field(xi, params, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = xi[i] + 0.5 * h * k1[i];
    F_field(tmp, params, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = xi[i] + 0.5 * h * k2[i];
    F_field(tmp, params, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = xi[i] + h * k3[i];
    F_field(tmp, params, k4);
    for (std::size_t i = 0; i < m; ++i) xi[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
}

}  // namespace

OdeTrajectory integrate(const SimplexVector& xi0, const OdeParams& params, double t0, double h,
                        std::span<const double> output_times) {
    params.validate();
    if (xi0.capacity() != params.capacity) throw std::invalid_argument("initial condition has wrong dimension");
    if (!(t0 >= 0.0)) throw std::invalid_argument("horizon must be non-negative");
    if (!(h > 0.0)) throw std::invalid_argument("step must be positive");
    if (h > max_step(params) * (1.0 + 1e-12))
        throw std::invalid_argument("step " + std::to_string(h) + " exceeds 0.5 / Lipschitz bound = " +
                                    std::to_string(max_step(params)));
    for (std::size_t i = 0; i < output_times.size(); ++i) {
        if (output_times[i] < 0.0 || output_times[i] > t0)
            throw std::invalid_argument("output time outside [0, t0]");
        if (i > 0 && output_times[i] <= output_times[i - 1])
            throw std::invalid_argument("output times must be strictly increasing");
    }

    const bool record_all = output_times.empty();
    OdeTrajectory out;
    std::vector<double> xi(xi0.values().begin(), xi0.values().end());
    std::vector<double> scratch[5];
    for (auto& s : scratch) s.resize(xi.size());

    std::size_t next_out = 0;
    double t = 0.0;
    auto record = [&](double time) {
        out.times.push_back(time);
        out.states.push_back(xi);
    };
    if (record_all) {
        record(0.0);
    } else {
        while (next_out < output_times.size() && output_times[next_out] <= 0.0) record(output_times[next_out++]);
    }
    while (t < t0) {
        double target = std::min(t + h, t0);
        if (!record_all && next_out < output_times.size()) target = std::min(target, output_times[next_out]);
        // Absorb a sliver left by floating-point accumulation into this step.
        if (t0 - target < 1e-12 * std::max(1.0, t0)) target = t0;
        rk4_step(xi, params, target - t, scratch);
        t = target;
        project_to_simplex(xi, t);
        if (record_all) {
            record(t);
        } else {
            while (next_out < output_times.size() && output_times[next_out] <= t + 1e-12 * std::max(1.0, t0))
                record(output_times[next_out++]);
        }
    }
    return out;
}

namespace {

double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// F_1..F_C together with sum(xi) - 1; F_0 is implied by mass conservation.
Eigen::VectorXd root_system(const std::vector<double>& xi, const OdeParams& params) {
    const std::vector<double> f = F_field(xi, params);
    Eigen::VectorXd r(static_cast<Eigen::Index>(xi.size()));
    for (std::size_t k = 1; k < xi.size(); ++k) r(static_cast<Eigen::Index>(k - 1)) = f[k];
    r(static_cast<Eigen::Index>(xi.size() - 1)) = std::accumulate(xi.begin(), xi.end(), 0.0) - 1.0;
    return r;
}

}  // namespace

SimplexVector fixed_point(const OdeParams& params, const FixedPointOptions& options) {
    params.validate();
    const double h = max_step(params);
    const SimplexVector start = SimplexVector::unit(params.capacity, 0);
    std::vector<double> xi(start.values().begin(), start.values().end());
    for (int round = 0; round < options.settle_rounds; ++round) {
        if (sup_norm(F_field(xi, params)) <= options.settle_residual) break;
        xi = integrate(SimplexVector(xi), params, options.settle_chunk, h).back();
    }

    const auto m = static_cast<Eigen::Index>(xi.size());
    for (int it = 0; it < options.newton_iterations; ++it) {
        const double residual = sup_norm(F_field(xi, params));
        if (residual <= options.residual_tolerance) return SimplexVector(xi);
        const Eigen::VectorXd r = root_system(xi, params);
        Eigen::MatrixXd jac(m, m);
        for (Eigen::Index c = 0; c < m; ++c) {
            const double step = 1e-7;
            std::vector<double> plus = xi, minus = xi;
            plus[static_cast<std::size_t>(c)] += step;
            minus[static_cast<std::size_t>(c)] -= step;
            jac.col(c) = (root_system(plus, params) - root_system(minus, params)) / (2.0 * step);
        }
        const Eigen::VectorXd delta = jac.partialPivLu().solve(-r);
        // Damped update: halve until the residual decreases and the iterate stays nonnegative.
        double scale = 1.0;
        bool accepted = false;
        for (int tries = 0; tries < 30; ++tries, scale *= 0.5) {
            std::vector<double> trial = xi;
            bool nonneg = true;
            for (Eigen::Index k = 0; k < m; ++k) {
                trial[static_cast<std::size_t>(k)] += scale * delta(k);
                if (trial[static_cast<std::size_t>(k)] < 0.0) nonneg = false;
            }
            if (!nonneg) continue;
            if (sup_norm(F_field(trial, params)) < residual || scale < 1e-6) {
                xi = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    const double residual = sup_norm(F_field(xi, params));
    if (residual <= options.residual_tolerance) return SimplexVector(xi);
    throw NonConvergence("fixed point residual " + std::to_string(residual) + " above tolerance");
}

double TheoremConstants::log_error_envelope(double t, double n, double phi0, double initial_gap) const {
    const double d = choices;
    const double c1 = capacity + 1.0;
    const double log_pref = std::log(64.0 * (lambda + 1.0) * (t + 1.0) * d * d * c1 * c1 * c1) +
                            std::log(n * phi0 + 3.0 * std::sqrt(n) * std::log(n));
    const double exponent = envelope_rate * t;
    if (choices == 1) {
        // gap + prefactor * e^{rate t}
        const double a = initial_gap > 0.0 ? std::log(initial_gap) : -std::numeric_limits<double>::infinity();
        const double b = log_pref + exponent;
        const double hi = std::max(a, b);
        return hi + std::log1p(std::exp(std::min(a, b) - hi));
    }
    // (gap + prefactor) * e^{rate t}
    const double base = std::exp(log_pref);
    return std::log(initial_gap + base) + exponent;
}

double TheoremConstants::log_phi_bound(double t, double n, double phi0) const {
    return std::log(2.0) + phi_growth_rate * t + std::log(phi0 + 3.0 * std::log(n) / std::sqrt(n));
}

TheoremConstants theorem_constants(double lambda, int choices, int capacity, double t0) {
    if (!(lambda > 0.0) || !(t0 > 0.0) || choices < 1 || capacity < 1)
        throw std::invalid_argument("theorem constants need positive lambda, t0, d and C");
    TheoremConstants k;
    k.lambda = lambda;
    k.choices = choices;
    k.capacity = capacity;
    k.t0 = t0;
    const double d = choices;
    const double cap = capacity;
    const double c1 = cap + 1.0;

    k.log_gamma = -(25.0 * std::log(2.0) + std::log(std::pow(d, 8) + std::pow(d, 4) * cap / lambda) +
                    3.0 * std::log(8.0 * lambda * t0 + 1.0) + 800.0 * d * lambda * t0);
    k.gamma = std::exp(k.log_gamma);
    k.log_n0_polynomial_term = 18.0 * std::log(2.0) + 4.0 * std::log(lambda + 1.0 / lambda) + 4.0 * std::log(d) +
                               6.0 * std::log(c1) + 2.0 * std::log(t0 + 1.0 / t0);
    k.n0_polynomial_term = std::pow(2.0, 18) * std::pow(lambda + 1.0 / lambda, 4) * std::pow(d, 4) *
                           std::pow(c1, 6) * std::pow(t0 + 1.0 / t0, 2);
    k.log_log_n0_exponential_term = std::log(8.0) - k.log_gamma;
    k.log_n0_exponential_term = std::exp(k.log_log_n0_exponential_term);

    if (choices == 1) {
        k.envelope_rate = 216.0 * (lambda + 1.0) * c1;
        k.phi_growth_rate = 208.0 * (lambda + 1.0) * c1;
        k.drift_c1 = 26.0 * (1.0 + 1.0 / lambda) * c1;
        k.drift_c2 = 64.0 * lambda * c1;
    } else {
        k.envelope_rate = 216.0 * (lambda + 1.0) * d * d * c1 * c1 * c1;
        k.phi_growth_rate = 208.0 * (lambda + 1.0) * d * d * c1 * c1 * c1;
        k.drift_c1 = 26.0 * (1.0 + 1.0 / lambda) * d * d * c1 * c1 * c1;
        k.drift_c2 = 64.0 * lambda * d * d * c1 * c1 * c1;
    }
    return k;
}

}  // namespace dar
