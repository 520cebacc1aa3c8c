#include "apsc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace apsc::vehicle {

std::array<double, kStateDim> VehicleState::to_array() const {
    return {vx, vy, yaw_rate, steer, wheel_speed[0], wheel_speed[1], wheel_speed[2],
            wheel_speed[3], torque, station, lateral_error, heading_error};
}

VehicleState VehicleState::from_array(const std::array<double, kStateDim>& a) {
    VehicleState x;
    x.vx = a[0];
    x.vy = a[1];
    x.yaw_rate = a[2];
    x.steer = a[3];
    x.wheel_speed = {a[4], a[5], a[6], a[7]};
    x.torque = a[8];
    x.station = a[9];
    x.lateral_error = a[10];
    x.heading_error = a[11];
    return x;
}

bool VehicleState::finite() const {
    // Any inf or NaN component poisons the sum.
    double sum = vx + vy + yaw_rate + steer + torque + station + lateral_error + heading_error;
    for (double w : wheel_speed) sum += w;
    return std::isfinite(sum);
}

ControlInput ActuatorBounds::clamp(const ControlInput& u) const {
    return {std::clamp(u.steer_rate, -max_steer_rate, max_steer_rate),
            std::clamp(u.torque_rate, -max_torque_rate, max_torque_rate)};
}

bool ActuatorBounds::contains(const ControlInput& u) const {
    return std::abs(u.steer_rate) <= max_steer_rate && std::abs(u.torque_rate) <= max_torque_rate;
}

void VehicleParams::validate() const {
    const std::pair<const char*, double> positive[] = {
        {"mass", mass},
        {"wheel_radius", wheel_radius},
        {"yaw_inertia", yaw_inertia},
        {"wheel_inertia", wheel_inertia},
        {"cg_to_front", cg_to_front},
        {"cg_to_rear", cg_to_rear},
        {"track_width", track_width},
        {"stribeck_velocity", stribeck_velocity},
        {"long_stiffness", long_stiffness},
        {"long_damping", long_damping},
        {"long_load_factor", long_load_factor},
        {"lat_stiffness", lat_stiffness},
        {"lat_damping", lat_damping},
        {"lat_load_factor", lat_load_factor},
        {"static_friction", static_friction},
        {"kinetic_friction", kinetic_friction},
        {"gravity", gravity},
        {"normal_load", normal_load},
    };
    for (const auto& [name, value] : positive) {
        if (!(value > 0.0) || !std::isfinite(value)) {
            throw std::invalid_argument(std::string("vehicle parameter '") + name +
                                        "' must be positive and finite");
        }
    }
    if (!(static_friction > kinetic_friction)) {
        throw std::invalid_argument("static_friction must exceed kinetic_friction");
    }
}

// --- road ------------------------------------------------------------------

RoadProfile::RoadProfile(std::vector<RoadSegment> segments, double e_bound)
    : segments_(std::move(segments)), e_bound_(e_bound) {
    if (segments_.empty()) throw std::invalid_argument("road needs at least one segment");
    double start = 0.0;
    for (const auto& seg : segments_) {
        if (!(seg.length > 0.0)) throw std::invalid_argument("road segment length must be positive");
        if (!std::isfinite(seg.curvature)) throw std::invalid_argument("road curvature must be finite");
        starts_.push_back(start);
        start += seg.length;
    }
    length_ = start;
}

RoadProfile RoadProfile::standard_curve() {
    return RoadProfile({{60.0, 0.0}, {120.0, 1.0 / 50.0}, {100.0, 0.0}}, 3.0);
}

RoadProfile RoadProfile::straight(double length) { return RoadProfile({{length, 0.0}}, 3.0); }

double RoadProfile::curvature(double station) const {
    if (segments_.empty()) return 0.0;
    // Few segments; a linear scan beats a binary search here.
    for (std::size_t i = segments_.size(); i-- > 1;) {
        if (station >= starts_[i]) return segments_[i].curvature;
    }
    return segments_.front().curvature;
}

RoadProfile::Point RoadProfile::to_global(double station, double lateral) const {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double remaining = std::max(station, 0.0);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& seg = segments_[i];
        const bool last = i + 1 == segments_.size();
        const double ds = last ? remaining : std::min(remaining, seg.length);
        const double k = seg.curvature;
        if (std::abs(k) < 1e-12) {
            x += ds * std::cos(heading);
            y += ds * std::sin(heading);
        } else {
            x += (std::sin(heading + k * ds) - std::sin(heading)) / k;
            y -= (std::cos(heading + k * ds) - std::cos(heading)) / k;
        }
        heading += k * ds;
        remaining -= ds;
        if (remaining <= 0.0) break;
    }
    return {x - lateral * std::sin(heading), y + lateral * std::cos(heading)};
}

int IntegratorConfig::substeps_for(double dt) const {
    const int by_size = static_cast<int>(std::ceil(dt / max_substep - 1e-9));
    return std::max(min_substeps, by_size);
}

// --- tires -----------------------------------------------------------------

std::array<WheelSlip, kWheels> slip_quantities(const VehicleState& x, const VehicleParams& p) {
    if (!(x.vx > 0.0)) throw std::domain_error("slip quantities need vx > 0");
    const double front = x.steer - (x.vy + p.cg_to_front * x.yaw_rate) / x.vx;
    // Rear contact-patch lateral velocity is vy - l_r r.
    const double rear = -(x.vy - p.cg_to_rear * x.yaw_rate) / x.vx;
    std::array<WheelSlip, kWheels> out{};
    for (std::size_t w = 0; w < kWheels; ++w) {
        const double alpha = w < 2 ? front : rear;
        const double rolling = p.wheel_radius * x.wheel_speed[w];
        out[w].slip_angle = alpha;
        out[w].slip_ratio = (rolling - x.vx) / std::max(rolling, x.vx);
        out[w].rel_vx = rolling - x.vx;
        out[w].rel_vy = x.vx * alpha;
    }
    return out;
}

double stribeck(double rel_speed, const VehicleParams& p) {
    return p.kinetic_friction + (p.static_friction - p.kinetic_friction) *
                                    std::exp(-std::sqrt(rel_speed / p.stribeck_velocity));
}

namespace {

struct TireCoefficients {
    std::array<double, kWheels> longitudinal{};  // F_L = c * v_rx * F_z
    std::array<double, kWheels> side{};          // F_S = c * v_ry * F_z
};

TireCoefficients lugre_coefficients(const VehicleState& x, const VehicleParams& p,
                                    const std::array<WheelSlip, kWheels>& slip, double friction) {
    TireCoefficients c;
    for (std::size_t w = 0; w < kWheels; ++w) {
        const double rel =
            std::sqrt(slip[w].rel_vx * slip[w].rel_vx + slip[w].rel_vy * slip[w].rel_vy);
        const double rolling = p.wheel_radius * std::abs(x.wheel_speed[w]);
        const double sliding = rel / (friction * stribeck(rel, p));
        c.longitudinal[w] =
            p.long_stiffness / (p.long_stiffness * sliding + p.long_load_factor * rolling) +
            p.long_damping;
        c.side[w] = p.lat_stiffness / (p.lat_stiffness * sliding + p.lat_load_factor * rolling) +
                    p.lat_damping;
    }
    return c;
}

TireForces forces_from(const TireCoefficients& c, const std::array<WheelSlip, kWheels>& slip,
                       const VehicleParams& p) {
    TireForces f;
    for (std::size_t w = 0; w < kWheels; ++w) {
        f.longitudinal[w] = c.longitudinal[w] * slip[w].rel_vx * p.normal_load;
        f.side[w] = c.side[w] * slip[w].rel_vy * p.normal_load;
    }
    return f;
}

void check_friction(double friction) {
    if (!(friction > 0.0)) throw std::domain_error("road friction must be positive");
}

VehicleState drift(const VehicleState& x, const ControlInput& u, const VehicleParams& p,
                   const TireForces& f, const RoadProfile& road) {
    const auto& FL = f.longitudinal;
    const auto& FS = f.side;
    const double cd = std::cos(x.steer);
    const double sd = std::sin(x.steer);
    const double front_long = FL[kFrontLeft] + FL[kFrontRight];
    const double front_side = FS[kFrontLeft] + FS[kFrontRight];
    const double half_track = 0.5 * p.track_width;

    VehicleState d;
    d.vx = x.vy * x.yaw_rate +
           (front_long * cd - front_side * sd + FL[kRearLeft] + FL[kRearRight]) / p.mass;
    d.vy = -x.vx * x.yaw_rate +
           (front_side * cd + front_long * sd + FS[kRearLeft] + FS[kRearRight]) / p.mass;
    d.yaw_rate = (p.cg_to_front * (front_side * cd + front_long * sd) -
                  p.cg_to_rear * (FS[kRearLeft] + FS[kRearRight]) +
                  half_track * (FL[kRearRight] - FL[kRearLeft]) +
                  half_track * ((FL[kFrontRight] - FL[kFrontLeft]) * cd +
                                (FS[kFrontLeft] - FS[kFrontRight]) * sd)) /
                 p.yaw_inertia;
    d.steer = u.steer_rate;
    for (std::size_t w = 0; w < kWheels; ++w) {
        d.wheel_speed[w] = (-p.wheel_radius * FL[w] + 0.25 * x.torque) / p.wheel_inertia;
    }
    d.torque = u.torque_rate;

    const double cp = std::cos(x.heading_error);
    const double sp = std::sin(x.heading_error);
    d.station = x.vx * cp - x.vy * sp;
    d.lateral_error = x.vy * cp + x.vx * sp;
    d.heading_error = x.yaw_rate - x.vx * road.curvature(x.station);
    return d;
}

}  // namespace

TireForces lugre_forces(const VehicleState& x, const VehicleParams& p, double friction) {
    check_friction(friction);
    const auto slip = slip_quantities(x, p);
    return forces_from(lugre_coefficients(x, p, slip, friction), slip, p);
}

VehicleState derivative(const VehicleState& x, const ControlInput& u, const VehicleParams& p,
                        double friction, const RoadProfile& road) {
    return drift(x, u, p, lugre_forces(x, p, friction), road);
}

StepResult step(const VehicleState& x0, const ControlInput& u, const VehicleParams& p,
                double friction, const RoadProfile& road, const NoiseSpec& noise, double dt,
                Rng& rng, const IntegratorConfig& integ) {
    if (!(dt > 0.0)) throw std::invalid_argument("step needs dt > 0");
    check_friction(friction);

    const int n = integ.substeps_for(dt);
    const double h = dt / n;
    const double sqrt_h = std::sqrt(h);
    const bool noisy = noise.vx > 0.0 || noise.vy > 0.0 || noise.yaw_rate > 0.0;
    std::normal_distribution<double> n01(0.0, 1.0);

    VehicleState x = x0;
    for (int i = 0; i < n; ++i) {
        if (!(x.vx > integ.min_speed) || !x.finite()) return {x, false};

        const auto slip = slip_quantities(x, p);
        const auto coef = lugre_coefficients(x, p, slip, friction);
        const auto d = drift(x, u, p, forces_from(coef, slip, p), road);

        VehicleState next = x;
        next.vx += h * d.vx;
        next.vy += h * d.vy;
        next.yaw_rate += h * d.yaw_rate;
        next.steer += h * d.steer;
        next.torque += h * d.torque;
        next.station += h * d.station;
        next.lateral_error += h * d.lateral_error;
        next.heading_error += h * d.heading_error;

        // Linearly-implicit wheel update with the tire coefficient frozen:
        // I w' = -R c F_z (R w' - vx) + tau / 4.
        const double load = p.normal_load;
        for (std::size_t w = 0; w < kWheels; ++w) {
            const double k = coef.longitudinal[w] * load;
            const double num =
                x.wheel_speed[w] + h / p.wheel_inertia * (p.wheel_radius * k * x.vx + 0.25 * x.torque);
            const double den = 1.0 + h * p.wheel_radius * p.wheel_radius * k / p.wheel_inertia;
            next.wheel_speed[w] = num / den;
        }

        if (noisy) {
            next.vx += noise.vx * sqrt_h * n01(rng);
            next.vy += noise.vy * sqrt_h * n01(rng);
            next.yaw_rate += noise.yaw_rate * sqrt_h * n01(rng);
        }
        x = next;
    }
    const bool valid = x.vx > integ.min_speed && x.finite();
    return {x, valid};
}

VehicleState rolling_state(double vx, const VehicleParams& p) {
    VehicleState x;
    x.vx = vx;
    x.wheel_speed.fill(vx / p.wheel_radius);
    return x;
}

}  // namespace apsc::vehicle
