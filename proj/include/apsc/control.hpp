#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "apsc/safety.hpp"
#include "apsc/vehicle.hpp"

namespace apsc::control {

using vehicle::ActuatorBounds;
using vehicle::ControlInput;
using vehicle::VehicleParams;
using vehicle::VehicleState;

/// Gains of the state-feedback reference controller.
///
/// Steering rate: K_lat . ([vy, r, delta, e, psi] - [0, vx rho(s), 0, 0, 0]).
/// Torque rate:   -K_v (vx - V_ref) - K_T tau.
///
/// The lateral gains come from `derive_lateral_gains` (continuous-time LQR
/// on the linear bicycle model at V_ref); the default values below are that
/// derivation frozen, and a unit test keeps them in sync.
struct NominalControllerConfig {
    std::array<double, 5> lateral_gain{-0.0400871334, -0.1292265838, -4.3843072697,
                                       -0.2211558372, -2.5703314456};
    double speed_gain = 29.05;  // K_v [N m / m]
    double torque_gain = 0.5;   // K_T [1/s]
    double v_ref = 40.0 / 3.6;  // [m/s]
    ActuatorBounds bounds{};

    void validate() const;
};

/// Reference controller pi(x, xi_hat). The friction estimate is accepted for
/// interface symmetry with the safety rollouts; this law does not use it.
ControlInput nominal(const VehicleState& x, double xi_hat, const vehicle::RoadProfile& road,
                     const NominalControllerConfig& cfg);

struct LqrWeights {
    std::array<double, 5> state{0.0, 0.0, 0.1, 0.05, 1.0};  // vy, r, delta, e, psi
    double input = 1.0;
};

/// Continuous-time LQR steering gain for the linearised single-track model
/// (tire cornering stiffness from the small-slip LuGre limit). Returns the
/// gain in the `lateral_gain` sign convention.
std::array<double, 5> derive_lateral_gains(const VehicleParams& p, double speed,
                                           const LqrWeights& w = {});

/// Speed-loop gains giving a critically damped response with natural
/// frequency `omega_n` [rad/s] under the rigid-wheel approximation.
std::pair<double, double> derive_speed_gains(const VehicleParams& p, double omega_n);

// --- candidate sets ----------------------------------------------------------

/// Cross product of evenly spaced steer-rate and torque-rate levels spanning
/// the actuator bounds. Row-major in steer level.
std::vector<ControlInput> candidate_grid(const ActuatorBounds& bounds, int steer_levels,
                                         int torque_levels);

// --- safety filter -------------------------------------------------------------

struct FilterResult {
    ControlInput input{};
    bool feasible = false;
    double margin = 0.0;     // certificate margin of the chosen input [1/s]
    double deviation = 0.0;  // 1/2 ||u - u_nom||_W^2
    int candidate_index = -1;
    int evaluated = 0;       // candidates tested against the certificate
};

/// Per-channel weights of the deviation cost. Default normalises each
/// channel by its actuator bound so steering and torque are comparable.
struct DeviationWeights {
    double steer_rate = 1.0 / (0.5 * 0.5);
    double torque_rate = 1.0 / (2000.0 * 2000.0);

    static DeviationWeights normalised(const ActuatorBounds& b);
};

double deviation_cost(const ControlInput& u, const ControlInput& reference,
                      const DeviationWeights& w);

using CertificateCheck = std::function<safety::ConstraintCheck(const ControlInput&)>;

/// Certificate oracle handed to the filter and the MPC. `screen` is an
/// optional shortcut: nullopt for inputs that fail, otherwise exactly
/// `evaluate(u)`. It may give up early on failing inputs.
struct Certificate {
    CertificateCheck evaluate;
    std::function<std::optional<safety::ConstraintCheck>(const ControlInput&)> screen;
};

/// Minimal-deviation projection of `nominal_input` onto the candidates that
/// satisfy the certificate. Candidates are checked lazily in order of
/// deviation; ties go to the larger margin, then to the lower index. With no
/// feasible candidate the max-margin one is returned with feasible = false.
FilterResult safe_filter(const ControlInput& nominal_input,
                         const std::vector<ControlInput>& candidates, const DeviationWeights& w,
                         const Certificate& cert);

// --- model predictive control --------------------------------------------------

struct MPCConfig {
    int horizon = 10;          // prediction steps
    double dt = 0.2;           // [s]
    int control_horizon = 2;   // free moves; rates are zero afterwards
    double speed_weight = 0.05;
    double lateral_weight = 1.0;
    double heading_weight = 1.0;
    int steer_levels = 7;
    int torque_levels = 5;
    double v_ref = 40.0 / 3.6;
    vehicle::IntegratorConfig prediction{};

    void validate() const;
};

struct MPCPlan {
    std::vector<ControlInput> sequence;
    double cost = 0.0;
    bool feasible = true;     // certificate satisfied by the first move
    double margin = 0.0;
    bool fallback = false;    // no valid prediction; hold sequence returned
    int evaluated = 0;        // first moves tested against the certificate
    int first_index = -1;
    double search_seconds = 0.0;  // wall time of the unconstrained search
};

struct PredictionModel {
    VehicleParams params;
    vehicle::RoadProfile road;
    ActuatorBounds bounds;
    double friction = 0.3;  // belief mean
};

/// Exhaustive search over the quantised control-horizon moves. When `cert`
/// is set it constrains the first move only.
MPCPlan mpc_plan(const VehicleState& x, const PredictionModel& model, const MPCConfig& cfg,
                 const Certificate* cert = nullptr);

/// Cost of one move sequence under the deterministic prediction model;
/// +inf if the prediction leaves the valid region.
double mpc_sequence_cost(const VehicleState& x, const PredictionModel& model, const MPCConfig& cfg,
                         const std::vector<ControlInput>& moves);

// --- the vehicle as a stochastic system ----------------------------------------

/// Plant + reference controller + safe set, in the shape the safety
/// certificate consumes.
struct VehicleSystem {
    using State = VehicleState;
    using Input = ControlInput;

    VehicleParams params;
    vehicle::RoadProfile road;
    vehicle::NoiseSpec noise;
    vehicle::IntegratorConfig integrator;
    NominalControllerConfig controller;
    safety::SafeSetSpec safe_set;
    double friction_lo = 0.05;
    double friction_hi = 1.2;

    std::optional<State> propagate(const State& x, const Input& u, double xi, double dt,
                                   Rng& rng) const;
    Input reference_input(const State& x, double xi_hat) const;
    bool in_safe_set(const State& x) const;
    double clamp_parameter(double xi) const;
};

static_assert(safety::StochasticSystem<VehicleSystem>);

}  // namespace apsc::control
