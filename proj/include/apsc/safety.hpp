#pragma once

// Long-term safety probability and the probabilistic safety certificate.
//
// Everything here is generic over a `StochasticSystem`: the lane-keeping
// vehicle is one model, the tests also drive a 1-D random walk whose
// safety probability can be enumerated exactly.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "apsc/belief.hpp"
#include "apsc/rng.hpp"

namespace apsc::safety {

/// Lane-error safe set: phi = 1 - (e / e_max)^2 >= 0.
struct SafeSetSpec {
    double e_max = 3.0;  // [m]
};

double phi(double lateral_error, const SafeSetSpec& spec);
inline bool in_safe_set(double lateral_error, const SafeSetSpec& spec) {
    return phi(lateral_error, spec) >= 0.0;
}

/// 1 iff every sample of the trajectory lies in the safe set.
/// Throws std::invalid_argument on an empty trajectory.
int long_term_safe(std::span<const double> lateral_errors, const SafeSetSpec& spec);

/// Look-ahead of the safety indicator: `steps` transitions of `dt` seconds.
struct SafetyHorizon {
    int steps = 75;
    double dt = 0.1;  // [s]
};

struct SafetyEstimate {
    double value = 0.0;       // in [0, 1]
    int n_samples = 0;
    double half_width = 0.0;  // 95% normal-approximation half width
    int safe_count = 0;
};

/// Nested Monte Carlo budget for E[Psi(X_{k+1}) | X_k, U_k]: one-step
/// propagations, each followed by its own safety rollouts.
struct GeneratorBudget {
    int propagations = 16;
    int rollouts_per_propagation = 7;
};

struct PSCConfig {
    double epsilon = 0.1;  // risk tolerance
    double gain = 1.0;     // gamma(q) = gain * q, gain in [0, 1]
    double dt = 0.2;       // control interval [s]
    int mc_samples = 100;  // rollouts per Psi evaluation
    GeneratorBudget generator{};
    int workers = 1;

    void validate() const;
};

/// Selects the random numbers of a Monte Carlo evaluation. Two evaluations
/// with the same key reuse the same noise (common random numbers).
struct CrnKey {
    std::uint64_t seed = 0;
    std::uint64_t offset = 0;
};

// ---------------------------------------------------------------------------

template <class S>
concept StochasticSystem =
    requires(const S& sys, const typename S::State& x, const typename S::Input& u, double xi,
             double dt, Rng& rng) {
        { sys.propagate(x, u, xi, dt, rng) } -> std::same_as<std::optional<typename S::State>>;
        { sys.reference_input(x, xi) } -> std::same_as<typename S::Input>;
        { sys.in_safe_set(x) } -> std::same_as<bool>;
        { sys.clamp_parameter(xi) } -> std::same_as<double>;
    };

/// gamma(q) = a q. Increasing and linear; gamma(q) <= q whenever q >= 0 or a = 1.
inline double gamma(double q, double gain) { return gain * q; }

struct ConstraintCheck {
    bool satisfied = false;
    double margin = 0.0;  // generator + gamma(psi - (1 - eps)) [1/s]
};

/// Certificate condition: generator >= -gamma(psi_k - (1 - eps)).
ConstraintCheck constraint_satisfied(double psi_k, double generator_value, const PSCConfig& cfg);

/// Discrete-time generator from its two expectation terms.
inline double generator_from(double expected_next, double psi_k, double dt) {
    return (expected_next - psi_k) / dt;
}

/// Sums `pred(i)` for i in [0, n) over `workers` threads. The result is an
/// integer count, so it does not depend on the partition.
int parallel_count(int n, int workers, const std::function<bool(int)>& pred);

template <StochasticSystem S>
double draw_parameter(const S& sys, const belief::GaussianBelief& b, Rng& rng) {
    return sys.clamp_parameter(b.mean + std::sqrt(b.variance) * standard_normal(rng));
}

/// One closed-loop rollout under the reference policy: controller sees
/// `xi_hat`, the plant runs with `xi`.
template <StochasticSystem S>
bool rollout_safe(const S& sys, typename S::State x, double xi, double xi_hat,
                  const SafetyHorizon& horizon, Rng& rng) {
    if (!sys.in_safe_set(x)) return false;
    for (int k = 0; k < horizon.steps; ++k) {
        const auto u = sys.reference_input(x, xi_hat);
        auto next = sys.propagate(x, u, xi, horizon.dt, rng);
        if (!next || !sys.in_safe_set(*next)) return false;
        x = std::move(*next);
    }
    return true;
}

namespace detail {
inline SafetyEstimate make_estimate(int safe, int n) {
    SafetyEstimate e;
    e.n_samples = n;
    e.safe_count = safe;
    e.value = n > 0 ? static_cast<double>(safe) / n : 0.0;
    e.half_width = n > 0 ? 1.96 * std::sqrt(e.value * (1.0 - e.value) / n) : 0.0;
    return e;
}
}  // namespace detail

/// Monte Carlo estimate of the long-term safety probability Psi_H(x).
/// Rollout i draws its parameter and noise from stream (seed, offset + i).
template <StochasticSystem S>
SafetyEstimate estimate_psi(const S& sys, const typename S::State& x,
                            const belief::GaussianBelief& b, const SafetyHorizon& horizon,
                            int samples, CrnKey key, int workers = 1) {
    samples = std::max(samples, 1);
    if (!sys.in_safe_set(x)) return detail::make_estimate(0, samples);
    const int safe = parallel_count(samples, workers, [&](int i) {
        Rng rng = make_rng(key.seed, streams::kRollout, key.offset + static_cast<std::uint64_t>(i));
        const double xi = draw_parameter(sys, b, rng);
        return rollout_safe(sys, x, xi, b.mean, horizon, rng);
    });
    return detail::make_estimate(safe, samples);
}

/// E[Psi_{H_next}(X_{k+1}) | X_k = x, U_k = u] by nested Monte Carlo.
/// Propagation j uses stream (seed, offset + j); its r-th safety rollout
/// shares stream (seed, offset + j R + r) with `estimate_psi`, so the two
/// are positively correlated.
template <StochasticSystem S>
SafetyEstimate expected_next_psi(const S& sys, const typename S::State& x,
                                 const typename S::Input& u, const belief::GaussianBelief& next,
                                 const SafetyHorizon& horizon, double dt,
                                 const GeneratorBudget& budget, CrnKey key, int workers = 1) {
    const int props = std::max(budget.propagations, 1);
    const int per = std::max(budget.rollouts_per_propagation, 1);
    // Propagations are cheap next to rollouts; do them serially up front.
    std::vector<std::optional<typename S::State>> states;
    states.reserve(props);
    for (int j = 0; j < props; ++j) {
        Rng rng = make_rng(key.seed, streams::kPropagation, key.offset + static_cast<std::uint64_t>(j));
        const double xi = draw_parameter(sys, next, rng);
        states.push_back(sys.propagate(x, u, xi, dt, rng));
    }
    const int safe = parallel_count(props * per, workers, [&](int idx) {
        const auto& start = states[static_cast<std::size_t>(idx / per)];
        if (!start) return false;
        Rng rng = make_rng(key.seed, streams::kRollout, key.offset + static_cast<std::uint64_t>(idx));
        const double xi = draw_parameter(sys, next, rng);
        return rollout_safe(sys, *start, xi, next.mean, horizon, rng);
    });
    return detail::make_estimate(safe, props * per);
}

/// Smallest safe count out of `n` next-step rollouts for which the
/// certificate holds at `psi_k`; n + 1 when no count does. Uses the same
/// arithmetic as `constraint_satisfied`, so the two always agree.
int required_safe_count(double psi_k, int n, const PSCConfig& cfg);

/// `expected_next_psi`, abandoned as soon as fewer than `required` safe
/// rollouts are possible. Same streams and outcomes as the full estimate, so
/// a returned value is bit-identical to it. Serial.
template <StochasticSystem S>
std::optional<SafetyEstimate> expected_next_psi_if_at_least(
    const S& sys, const typename S::State& x, const typename S::Input& u,
    const belief::GaussianBelief& next, const SafetyHorizon& horizon, double dt,
    const GeneratorBudget& budget, CrnKey key, int required) {
    const int props = std::max(budget.propagations, 1);
    const int per = std::max(budget.rollouts_per_propagation, 1);
    const int total = props * per;
    if (required > total) return std::nullopt;
    int safe = 0;
    int failed = 0;
    for (int j = 0; j < props; ++j) {
        Rng prng = make_rng(key.seed, streams::kPropagation, key.offset + static_cast<std::uint64_t>(j));
        const double xi_j = draw_parameter(sys, next, prng);
        const auto start = sys.propagate(x, u, xi_j, dt, prng);
        for (int r = 0; r < per; ++r) {
            bool ok = false;
            if (start) {
                const int idx = j * per + r;
                Rng rng = make_rng(key.seed, streams::kRollout, key.offset + static_cast<std::uint64_t>(idx));
                const double xi = draw_parameter(sys, next, rng);
                ok = rollout_safe(sys, *start, xi, next.mean, horizon, rng);
            }
            if (ok) {
                ++safe;
            } else if (++failed > total - required) {
                return std::nullopt;
            }
        }
    }
    return detail::make_estimate(safe, total);
}

/// The generator and its prediction/update split, all from one sample set:
///   S = (E[Psi_{k+1}(X_{k+1})] - Psi_{k+1}(X_k)) / dt
///   T = (Psi_{k+1}(X_k) - Psi_k(X_k)) / dt
///   A = (E[Psi_{k+1}(X_{k+1})] - Psi_k(X_k)) / dt
struct GeneratorSplit {
    double psi_current = 0.0;       // Psi_{H_k}(X_k)
    double psi_next_belief = 0.0;   // Psi_{H_{k+1}}(X_k)
    double expected_next = 0.0;     // E[Psi_{H_{k+1}}(X_{k+1})]
    double state_term = 0.0;        // S
    double belief_term = 0.0;       // T
    double generator = 0.0;         // A
};

inline GeneratorSplit split_from(double psi_current, double psi_next_belief, double expected_next,
                                 double dt) {
    GeneratorSplit g;
    g.psi_current = psi_current;
    g.psi_next_belief = psi_next_belief;
    g.expected_next = expected_next;
    g.state_term = (expected_next - psi_next_belief) / dt;
    g.belief_term = (psi_next_belief - psi_current) / dt;
    g.generator = generator_from(expected_next, psi_current, dt);
    return g;
}

template <StochasticSystem S>
GeneratorSplit generator_split(const S& sys, const typename S::State& x,
                               const typename S::Input& u, const belief::GaussianBelief& current,
                               const belief::GaussianBelief& next, const SafetyHorizon& horizon,
                               const PSCConfig& cfg, CrnKey key) {
    const auto psi_k = estimate_psi(sys, x, current, horizon, cfg.mc_samples, key, cfg.workers);
    const auto psi_k1 = estimate_psi(sys, x, next, horizon, cfg.mc_samples, key, cfg.workers);
    const auto e_next =
        expected_next_psi(sys, x, u, next, horizon, cfg.dt, cfg.generator, key, cfg.workers);
    return split_from(psi_k.value, psi_k1.value, e_next.value, cfg.dt);
}

/// Discrete-time generator A (direct evaluation path).
template <StochasticSystem S>
double generator(const S& sys, const typename S::State& x, const typename S::Input& u,
                 const belief::GaussianBelief& current, const belief::GaussianBelief& next,
                 const SafetyHorizon& horizon, const PSCConfig& cfg, CrnKey key) {
    const auto psi_k = estimate_psi(sys, x, current, horizon, cfg.mc_samples, key, cfg.workers);
    const auto e_next =
        expected_next_psi(sys, x, u, next, horizon, cfg.dt, cfg.generator, key, cfg.workers);
    return generator_from(e_next.value, psi_k.value, cfg.dt);
}

// --- small-step (Ito) evaluation path ------------------------------------

/// grad . E[f] + 1/2 trace(sigma sigma^T Hessian): the small-dt limit of the
/// state term S.
double ito_drift_term(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian,
                      const Eigen::VectorXd& mean_drift, const Eigen::MatrixXd& diffusion);

struct PsiDerivatives {
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
    double max_half_width = 0.0;
    bool high_variance = false;
};

/// Value and CI half-width of a (possibly Monte Carlo) Psi evaluation.
struct PsiSample {
    double value = 0.0;
    double half_width = 0.0;
};

/// Central finite-difference gradient and Hessian of `psi` at `x`.
/// Callers pass an evaluator with common random numbers so differences are
/// not swamped by sampling noise; `high_variance` is raised whenever any
/// evaluation's half-width exceeds `half_width_limit`.
PsiDerivatives finite_difference_derivatives(
    const std::function<PsiSample(const Eigen::VectorXd&)>& psi, const Eigen::VectorXd& x,
    const Eigen::VectorXd& steps, double half_width_limit);

}  // namespace apsc::safety
