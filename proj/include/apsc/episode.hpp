#pragma once

// Closed-loop episodes: estimator update, safety probability, control
// decision and plant step, once per control interval.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "apsc/belief.hpp"
#include "apsc/control.hpp"
#include "apsc/safety.hpp"
#include "apsc/vehicle.hpp"

namespace apsc::sim {

enum class ControllerKind { Nominal, ApscFilter, Ampc, ApscMpc };

std::string_view to_string(ControllerKind k);
/// Accepts the names produced by `to_string`; throws std::invalid_argument otherwise.
ControllerKind controller_from_string(std::string_view s);

/// True friction of an episode, drawn uniformly from [lo, hi] per seed.
struct FrictionRange {
    double lo = 0.2;
    double hi = 0.4;
};

struct InitialCondition {
    double speed = 20.0 / 3.6;  // [m/s], rolling without slip
    double lateral_error = 0.0;
    double heading_error = 0.0;
};

struct Scenario {
    std::string name = "icy-curve";
    vehicle::VehicleParams params{};
    vehicle::RoadProfile road = vehicle::RoadProfile::standard_curve();
    vehicle::NoiseSpec noise{};
    vehicle::IntegratorConfig integrator{};
    InitialCondition initial{};
    FrictionRange friction{};

    belief::GaussianBelief prior{0.3, 0.01, 0};
    /// What the sensor really does.
    belief::MeasurementModel sensor{0.1, 0.05, 1.2};
    /// What the estimator assumes about the sensor.
    belief::MeasurementModel estimator{0.1, 0.05, 1.2};
    bool adaptive = true;       // false: belief frozen at the prior
    int measurement_every = 1;  // control steps between measurements

    safety::SafeSetSpec safe_set{};
    safety::SafetyHorizon horizon{};
    safety::PSCConfig psc{};
    control::NominalControllerConfig controller{};
    control::MPCConfig mpc{};
    ControllerKind kind = ControllerKind::ApscFilter;
    int steer_levels = 7;   // filter candidate grid
    int torque_levels = 5;

    double duration = 30.0;             // [s]
    double empirical_bound = 3.0;       // |e| threshold of the empirical safety metric [m]

    void validate() const;
    int max_steps() const;
};

/// One executed control step.
struct RunRow {
    int step = 0;
    double time = 0.0;
    vehicle::VehicleState state{};  // X_k
    control::ControlInput input{};  // U_k
    control::ControlInput nominal_input{};
    double belief_mean = 0.0;       // H_k
    double belief_var = 0.0;
    double measurement = 0.0;       // M_k, NaN when no measurement this step
    double posterior_mean = 0.0;    // H_{k+1}
    double posterior_var = 0.0;
    double psi = 0.0;               // Psi_{H_k}(X_k)
    double psi_half_width = 0.0;
    double margin = 0.0;            // certificate margin of U_k; NaN when unchecked
    bool feasible = true;
    int evaluations = 0;            // certificate evaluations spent on U_k
};

enum class Termination { Duration, RoadEnd, InvalidState };
std::string_view to_string(Termination t);

struct RunMetrics {
    int steps = 0;
    double min_psi = 0.0;
    double mean_psi = 0.0;
    double initial_psi = 0.0;
    bool initial_gate_ok = false;    // Psi(X_0) > 1 - eps
    double mean_vx = 0.0;            // [m/s]
    double mean_abs_e = 0.0;         // [m]
    double std_abs_e = 0.0;
    double max_abs_e = 0.0;
    double std_vx = 0.0;
    double empirical_safety = 0.0;   // fraction of steps with |e| < empirical bound
    bool long_term_safe = false;     // every logged state inside the safe set, no invalid state
    bool feasible = true;            // every step had a certificate-feasible input
    int infeasible_steps = 0;
    double true_friction = 0.0;
    double final_mean = 0.0;
    double final_var = 0.0;
    Termination termination = Termination::Duration;
    // Timing, excluded from replay comparisons.
    double wall_time = 0.0;          // [s]
    double mean_step_time = 0.0;     // control decision per step [s]
    double mean_search_time = 0.0;   // MPC search alone per step [s], 0 for the filter
};

struct RunLog {
    std::uint64_t seed = 0;
    std::uint64_t scenario_hash = 0;
    Scenario scenario{};
    std::vector<RunRow> rows;
    RunMetrics metrics{};
};

/// Metrics that depend only on the rows (timing left untouched).
RunMetrics compute_metrics(const std::vector<RunRow>& rows, const Scenario& s,
                           Termination termination, double true_friction);

/// True friction of an episode.
double draw_friction(const Scenario& s, std::uint64_t seed);

/// The safety system the certificate reasons about under scenario `s`.
control::VehicleSystem make_system(const Scenario& s);

RunLog run_episode(const Scenario& s, std::uint64_t seed);

}  // namespace apsc::sim
