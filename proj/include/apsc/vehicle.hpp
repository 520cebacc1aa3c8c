#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "apsc/rng.hpp"

namespace apsc::vehicle {

enum Wheel : std::size_t { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };
inline constexpr std::size_t kWheels = 4;
inline constexpr std::size_t kStateDim = 12;

/// Vehicle motion, wheel dynamics and pose relative to the road centerline.
struct VehicleState {
    double vx = 0.0;        // longitudinal velocity [m/s]
    double vy = 0.0;        // lateral velocity [m/s]
    double yaw_rate = 0.0;  // [rad/s]
    double steer = 0.0;     // front steering angle [rad]
    std::array<double, kWheels> wheel_speed{};  // fl, fr, rl, rr [rad/s]
    double torque = 0.0;          // drive (>0) / brake (<0) torque [N m]
    double station = 0.0;         // distance along the road [m]
    double lateral_error = 0.0;   // offset from centerline, left positive [m]
    double heading_error = 0.0;   // heading relative to the road tangent [rad]

    std::array<double, kStateDim> to_array() const;
    static VehicleState from_array(const std::array<double, kStateDim>& a);
    bool finite() const;

    bool operator==(const VehicleState&) const = default;
};

/// Actuator command: rates of the steering angle and the drive torque.
struct ControlInput {
    double steer_rate = 0.0;   // [rad/s]
    double torque_rate = 0.0;  // [N m/s]

    bool operator==(const ControlInput&) const = default;
};

struct ActuatorBounds {
    double max_steer_rate = 0.5;     // [rad/s]
    double max_torque_rate = 2000.0; // [N m/s]

    ControlInput clamp(const ControlInput& u) const;
    bool contains(const ControlInput& u) const;
};

/// 3-DOF vehicle with LuGre combined-slip tires. Defaults are the reference
/// passenger-car parameter set.
struct VehicleParams {
    double mass = 1430.0;            // [kg]
    double wheel_radius = 0.325;     // [m]
    double yaw_inertia = 2059.0;     // [kg m^2]
    double wheel_inertia = 1.68;     // [kg m^2]
    double cg_to_front = 1.05;       // [m]
    double cg_to_rear = 1.61;        // [m]
    double track_width = 1.55;       // [m]
    double stribeck_velocity = 6.6;  // [m/s]
    double long_stiffness = 195.0;   // sigma_0x [1/m]
    double long_damping = 0.001;     // sigma_2x [s/m]
    double long_load_factor = 13.4;  // kappa_x
    double lat_stiffness = 195.0;    // sigma_0y [1/m]
    double lat_damping = 0.001;      // sigma_2y [s/m]
    double lat_load_factor = 13.4;   // kappa_y
    double static_friction = 0.55;   // mu_s
    double kinetic_friction = 0.35;  // mu_c
    double gravity = 9.8;            // [m/s^2]
    /// Static per-wheel normal load [N]; no load transfer.
    double normal_load = 1430.0 * 9.8 / 4.0;

    /// Throws std::invalid_argument when a parameter is out of its domain.
    void validate() const;
};

struct WheelSlip {
    double slip_angle = 0.0;  // [rad]
    double slip_ratio = 0.0;  // [-]
    double rel_vx = 0.0;      // longitudinal relative velocity [m/s]
    double rel_vy = 0.0;      // lateral relative velocity [m/s]
};

struct TireForces {
    std::array<double, kWheels> longitudinal{};  // F_L [N]
    std::array<double, kWheels> side{};          // F_S [N]
};

struct RoadSegment {
    double length = 0.0;     // [m]
    double curvature = 0.0;  // [1/m], positive turns left
};

/// Piecewise-constant-curvature centerline.
class RoadProfile {
public:
    RoadProfile() = default;
    RoadProfile(std::vector<RoadSegment> segments, double e_bound = 3.0);

    /// 60 m straight, 120 m arc of radius 50 m, 100 m straight.
    static RoadProfile standard_curve();
    static RoadProfile straight(double length);

    /// Curvature at `station`. Stations past the end continue the last
    /// segment; negative stations use the first.
    double curvature(double station) const;
    double length() const { return length_; }
    double e_bound() const { return e_bound_; }
    const std::vector<RoadSegment>& segments() const { return segments_; }

    struct Point {
        double x;
        double y;
    };
    /// Global position of the road-frame point (station, lateral offset).
    Point to_global(double station, double lateral) const;

private:
    std::vector<RoadSegment> segments_;
    std::vector<double> starts_;
    double length_ = 0.0;
    double e_bound_ = 3.0;
};

/// Diffusion scales of the additive process noise [channel unit / sqrt(s)].
struct NoiseSpec {
    double vx = 0.05;
    double vy = 0.05;
    double yaw_rate = 0.01;

    static NoiseSpec none() { return {0.0, 0.0, 0.0}; }
};

struct IntegratorConfig {
    /// Lower bound on Euler-Maruyama substeps per `step` call.
    int min_substeps = 4;
    /// Upper bound on the substep length [s]; keeps the lateral mode stable.
    double max_substep = 0.025;
    /// Below this longitudinal speed the slip model is invalid [m/s].
    double min_speed = 0.5;

    int substeps_for(double dt) const;
};

struct StepResult {
    VehicleState state;
    bool valid = true;  // false: left numeric validity, treat as terminal-unsafe
};

// ---------------------------------------------------------------------------

/// Per-wheel slip angle, slip ratio and relative (contact patch) velocity.
/// Throws std::domain_error when vx <= 0.
std::array<WheelSlip, kWheels> slip_quantities(const VehicleState& x, const VehicleParams& p);

/// Stribeck curve: kinetic + (static - kinetic) * exp(-sqrt(v / V_s)).
double stribeck(double rel_speed, const VehicleParams& p);

/// LuGre steady-state combined-slip forces on all four tires.
/// Throws std::domain_error on vx <= 0 or friction <= 0.
TireForces lugre_forces(const VehicleState& x, const VehicleParams& p, double friction);

/// Continuous-time drift of all twelve state channels.
VehicleState derivative(const VehicleState& x, const ControlInput& u, const VehicleParams& p,
                        double friction, const RoadProfile& road);

/// One control interval of Euler-Maruyama integration. Wheel speeds are
/// advanced linearly-implicitly because the tire-slip mode is stiff.
/// Deterministic given the engine state.
StepResult step(const VehicleState& x, const ControlInput& u, const VehicleParams& p,
                double friction, const RoadProfile& road, const NoiseSpec& noise, double dt,
                Rng& rng, const IntegratorConfig& integ = {});

/// Straight-line rolling state at speed `vx` with zero slip.
VehicleState rolling_state(double vx, const VehicleParams& p);

}  // namespace apsc::vehicle
