#include "apsc/episode.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace apsc::sim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct KindName {
    ControllerKind kind;
    std::string_view name;
};
constexpr KindName kKindNames[] = {
    {ControllerKind::Nominal, "nominal"},
    {ControllerKind::ApscFilter, "apsc-filter"},
    {ControllerKind::Ampc, "ampc"},
    {ControllerKind::ApscMpc, "apsc-mpc"},
};

}  // namespace

std::string_view to_string(ControllerKind k) {
    for (const auto& kn : kKindNames) {
        if (kn.kind == k) return kn.name;
    }
    return "unknown";
}

ControllerKind controller_from_string(std::string_view s) {
    for (const auto& kn : kKindNames) {
        if (kn.name == s) return kn.kind;
    }
    throw std::invalid_argument("unknown controller kind '" + std::string(s) + "'");
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::Duration: return "duration";
        case Termination::RoadEnd: return "road-end";
        case Termination::InvalidState: return "invalid-state";
    }
    return "unknown";
}

void Scenario::validate() const {
    params.validate();
    if (!prior.valid()) throw std::invalid_argument("prior belief must have finite mean and positive variance");
    sensor.validate();
    estimator.validate();
    if (!(estimator.noise_variance > 0.0)) {
        throw std::invalid_argument("estimator noise variance must be positive");
    }
    if (!(friction.lo > 0.0 && friction.lo <= friction.hi)) {
        throw std::invalid_argument("friction range must satisfy 0 < lo <= hi");
    }
    if (measurement_every < 1) throw std::invalid_argument("measurement_every must be >= 1");
    if (!(safe_set.e_max > 0.0)) throw std::invalid_argument("e_max must be positive");
    if (horizon.steps < 1 || !(horizon.dt > 0.0)) {
        throw std::invalid_argument("safety horizon needs steps >= 1 and dt > 0");
    }
    psc.validate();
    controller.validate();
    mpc.validate();
    if (steer_levels < 1 || torque_levels < 1) throw std::invalid_argument("candidate levels must be >= 1");
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
    if (!(initial.speed > integrator.min_speed)) {
        throw std::invalid_argument("initial speed must exceed the speed floor");
    }
    if (!(empirical_bound > 0.0)) throw std::invalid_argument("empirical bound must be positive");
}

int Scenario::max_steps() const {
    return static_cast<int>(std::llround(duration / psc.dt));
}

double draw_friction(const Scenario& s, std::uint64_t seed) {
    if (s.friction.lo == s.friction.hi) return s.friction.lo;
    Rng rng = make_rng(seed, streams::kScenario, 0);
    std::uniform_real_distribution<double> u(s.friction.lo, s.friction.hi);
    return u(rng);
}

control::VehicleSystem make_system(const Scenario& s) {
    control::VehicleSystem sys;
    sys.params = s.params;
    sys.road = s.road;
    sys.noise = s.noise;
    sys.integrator = s.integrator;
    sys.controller = s.controller;
    sys.safe_set = s.safe_set;
    sys.friction_lo = s.sensor.clamp_lo;
    sys.friction_hi = s.sensor.clamp_hi;
    return sys;
}

RunMetrics compute_metrics(const std::vector<RunRow>& rows, const Scenario& s,
                           Termination termination, double true_friction) {
    RunMetrics m;
    m.steps = static_cast<int>(rows.size());
    m.termination = termination;
    m.true_friction = true_friction;
    if (rows.empty()) return m;

    // A run that broke down counts its unexecuted steps as unsafe with zero
    // safety probability; otherwise crashing early would look good.
    const int missing =
        termination == Termination::InvalidState ? std::max(0, s.max_steps() - m.steps) : 0;
    const double n_eff = static_cast<double>(m.steps + missing);

    double psi_sum = 0.0;
    double vx_sum = 0.0, vx_sq = 0.0;
    double e_sum = 0.0, e_sq = 0.0;
    int safe_steps = 0;
    bool all_in_set = true;
    m.min_psi = rows.front().psi;
    for (const auto& r : rows) {
        const double e = std::abs(r.state.lateral_error);
        psi_sum += r.psi;
        m.min_psi = std::min(m.min_psi, r.psi);
        vx_sum += r.state.vx;
        vx_sq += r.state.vx * r.state.vx;
        e_sum += e;
        e_sq += e * e;
        m.max_abs_e = std::max(m.max_abs_e, e);
        if (e < s.empirical_bound) ++safe_steps;
        if (!safety::in_safe_set(r.state.lateral_error, s.safe_set)) all_in_set = false;
        if (!r.feasible) ++m.infeasible_steps;
    }
    const double n = static_cast<double>(m.steps);
    m.mean_psi = psi_sum / n_eff;
    if (missing > 0) m.min_psi = 0.0;
    m.mean_vx = vx_sum / n;
    m.std_vx = std::sqrt(std::max(0.0, vx_sq / n - m.mean_vx * m.mean_vx));
    m.mean_abs_e = e_sum / n;
    m.std_abs_e = std::sqrt(std::max(0.0, e_sq / n - m.mean_abs_e * m.mean_abs_e));
    m.empirical_safety = safe_steps / n_eff;
    m.long_term_safe = all_in_set && termination != Termination::InvalidState;
    m.feasible = m.infeasible_steps == 0;
    m.initial_psi = rows.front().psi;
    m.initial_gate_ok = m.initial_psi > 1.0 - s.psc.epsilon;
    m.final_mean = rows.back().posterior_mean;
    m.final_var = rows.back().posterior_var;
    return m;
}

RunLog run_episode(const Scenario& s, std::uint64_t seed) {
    s.validate();
    using clock = std::chrono::steady_clock;
    const auto wall_start = clock::now();

    RunLog log;
    log.seed = seed;
    log.scenario = s;

    const auto sys = make_system(s);
    const double mu = draw_friction(s, seed);
    const int max_steps = s.max_steps();
    const auto grid = control::candidate_grid(s.controller.bounds, s.steer_levels, s.torque_levels);
    const auto weights = control::DeviationWeights::normalised(s.controller.bounds);
    control::PredictionModel model{s.params, s.road, s.controller.bounds, s.prior.mean};

    vehicle::VehicleState x = vehicle::rolling_state(s.initial.speed, s.params);
    x.lateral_error = s.initial.lateral_error;
    x.heading_error = s.initial.heading_error;
    belief::GaussianBelief belief = s.prior;

    Termination termination = Termination::Duration;
    double decision_time = 0.0;
    double search_time = 0.0;
    log.rows.reserve(static_cast<std::size_t>(max_steps));

    for (int k = 0; k < max_steps; ++k) {
        if (x.station >= s.road.length()) {
            termination = Termination::RoadEnd;
            break;
        }
        const std::uint64_t step_seed = derive_seed(seed, streams::kControlStep, static_cast<std::uint64_t>(k));
        const safety::CrnKey key{step_seed, 0};

        RunRow row;
        row.step = k;
        row.time = k * s.psc.dt;
        row.state = x;
        row.belief_mean = belief.mean;
        row.belief_var = belief.variance;

        const auto psi = safety::estimate_psi(sys, x, belief, s.horizon, s.psc.mc_samples, key,
                                              s.psc.workers);
        row.psi = psi.value;
        row.psi_half_width = psi.half_width;

        belief::GaussianBelief next = belief;
        row.measurement = kNaN;
        if (s.adaptive && k % s.measurement_every == 0) {
            Rng mrng = make_rng(seed, streams::kMeasurement, static_cast<std::uint64_t>(k));
            row.measurement = belief::sample_measurement(mu, s.sensor, mrng);
            next = belief::update(belief, row.measurement, s.estimator);
        }
        row.posterior_mean = next.mean;
        row.posterior_var = next.variance;

        const auto t0 = clock::now();
        control::Certificate cert;
        cert.evaluate = [&](const control::ControlInput& u) {
            const auto e_next = safety::expected_next_psi(sys, x, u, next, s.horizon, s.psc.dt,
                                                          s.psc.generator, key, s.psc.workers);
            return safety::constraint_satisfied(
                psi.value, safety::generator_from(e_next.value, psi.value, s.psc.dt), s.psc);
        };
        if (s.psc.workers <= 1) {
            const int total = s.psc.generator.propagations * s.psc.generator.rollouts_per_propagation;
            const int required = safety::required_safe_count(psi.value, total, s.psc);
            cert.screen = [&, required](const control::ControlInput& u)
                -> std::optional<safety::ConstraintCheck> {
                const auto e_next = safety::expected_next_psi_if_at_least(
                    sys, x, u, next, s.horizon, s.psc.dt, s.psc.generator, key, required);
                if (!e_next) return std::nullopt;
                return safety::constraint_satisfied(
                    psi.value, safety::generator_from(e_next->value, psi.value, s.psc.dt), s.psc);
            };
        }
        row.nominal_input = control::nominal(x, next.mean, s.road, s.controller);
        row.margin = kNaN;
        switch (s.kind) {
            case ControllerKind::Nominal:
                row.input = row.nominal_input;
                break;
            case ControllerKind::ApscFilter: {
                std::vector<control::ControlInput> candidates;
                candidates.reserve(grid.size() + 1);
                candidates.push_back(row.nominal_input);
                candidates.insert(candidates.end(), grid.begin(), grid.end());
                const auto r = control::safe_filter(row.nominal_input, candidates, weights, cert);
                row.input = r.input;
                row.margin = r.margin;
                row.feasible = r.feasible;
                row.evaluations = r.evaluated;
                break;
            }
            case ControllerKind::Ampc:
            case ControllerKind::ApscMpc: {
                model.friction = next.mean;
                const bool constrained = s.kind == ControllerKind::ApscMpc;
                const auto plan = control::mpc_plan(x, model, s.mpc, constrained ? &cert : nullptr);
                row.input = plan.sequence.front();
                search_time += plan.search_seconds;
                if (constrained) {
                    row.margin = plan.margin;
                    row.feasible = plan.feasible;
                    row.evaluations = plan.evaluated;
                }
                break;
            }
        }
        decision_time += std::chrono::duration<double>(clock::now() - t0).count();
        log.rows.push_back(row);

        Rng prng = make_rng(seed, streams::kPlant, static_cast<std::uint64_t>(k));
        const auto result = vehicle::step(x, row.input, s.params, mu, s.road, s.noise, s.psc.dt,
                                          prng, s.integrator);
        belief = next;
        if (!result.valid) {
            termination = Termination::InvalidState;
            break;
        }
        x = result.state;
    }

    log.metrics = compute_metrics(log.rows, s, termination, mu);
    log.metrics.wall_time = std::chrono::duration<double>(clock::now() - wall_start).count();
    log.metrics.mean_step_time = log.rows.empty() ? 0.0 : decision_time / log.rows.size();
    log.metrics.mean_search_time = log.rows.empty() ? 0.0 : search_time / log.rows.size();
    return log;
}

}  // namespace apsc::sim
