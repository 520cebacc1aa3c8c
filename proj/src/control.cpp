#include "apsc/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace apsc::control {

void NominalControllerConfig::validate() const {
    for (double k : lateral_gain) {
        if (!std::isfinite(k)) throw std::invalid_argument("lateral gain must be finite");
    }
    if (!std::isfinite(speed_gain) || !std::isfinite(torque_gain)) {
        throw std::invalid_argument("speed gains must be finite");
    }
    if (!(v_ref > 0.0)) throw std::invalid_argument("v_ref must be positive");
}

ControlInput nominal(const VehicleState& x, double /*xi_hat*/, const vehicle::RoadProfile& road,
                     const NominalControllerConfig& cfg) {
    const double yaw_ff = x.vx * road.curvature(x.station);
    const std::array<double, 5> err{x.vy, x.yaw_rate - yaw_ff, x.steer, x.lateral_error,
                                    x.heading_error};
    double steer_rate = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) steer_rate += cfg.lateral_gain[i] * err[i];
    const double torque_rate = -cfg.speed_gain * (x.vx - cfg.v_ref) - cfg.torque_gain * x.torque;
    return cfg.bounds.clamp({steer_rate, torque_rate});
}

std::array<double, 5> derive_lateral_gains(const VehicleParams& p, double speed,
                                           const LqrWeights& w) {
    // Small-slip LuGre: F_S = (sigma_0y / kappa_y + sigma_2y v) alpha F_z per wheel.
    const double per_wheel = (p.lat_stiffness / p.lat_load_factor + p.lat_damping * speed) *
                             p.normal_load;
    const double cf = 2.0 * per_wheel;
    const double cr = 2.0 * per_wheel;
    const double m = p.mass;
    const double iz = p.yaw_inertia;
    const double lf = p.cg_to_front;
    const double lr = p.cg_to_rear;
    const double v = speed;

    Eigen::Matrix<double, 5, 5> a = Eigen::Matrix<double, 5, 5>::Zero();
    a(0, 0) = -(cf + cr) / (m * v);
    a(0, 1) = -v - (cf * lf - cr * lr) / (m * v);
    a(0, 2) = cf / m;
    a(1, 0) = -(cf * lf - cr * lr) / (iz * v);
    a(1, 1) = -(cf * lf * lf + cr * lr * lr) / (iz * v);
    a(1, 2) = cf * lf / iz;
    a(3, 0) = 1.0;
    a(3, 4) = v;
    a(4, 1) = 1.0;
    Eigen::Matrix<double, 5, 1> b = Eigen::Matrix<double, 5, 1>::Zero();
    b(2) = 1.0;

    // Fine zero-order-hold discretisation; the DARE solution then matches
    // the continuous-time Riccati solution to O(h).
    constexpr double h = 0.005;
    Eigen::Matrix<double, 6, 6> aug = Eigen::Matrix<double, 6, 6>::Zero();
    aug.topLeftCorner<5, 5>() = a * h;
    aug.topRightCorner<5, 1>() = b * h;
    const Eigen::Matrix<double, 6, 6> e = aug.exp();
    const Eigen::Matrix<double, 5, 5> ad = e.topLeftCorner<5, 5>();
    const Eigen::Matrix<double, 5, 1> bd = e.topRightCorner<5, 1>();

    Eigen::Matrix<double, 5, 5> q = Eigen::Matrix<double, 5, 5>::Zero();
    for (int i = 0; i < 5; ++i) q(i, i) = w.state[static_cast<std::size_t>(i)] * h;
    const double r = w.input * h;

    Eigen::Matrix<double, 5, 5> pmat = q;
    Eigen::Matrix<double, 1, 5> k = Eigen::Matrix<double, 1, 5>::Zero();
    for (int it = 0; it < 200000; ++it) {
        const double s = r + (bd.transpose() * pmat * bd)(0, 0);
        const Eigen::Matrix<double, 1, 5> k_new = (bd.transpose() * pmat * ad) / s;
        const Eigen::Matrix<double, 5, 5> p_new =
            q + ad.transpose() * pmat * ad - ad.transpose() * pmat * bd * k_new;
        const double change = (p_new - pmat).cwiseAbs().maxCoeff();
        pmat = 0.5 * (p_new + p_new.transpose());
        k = k_new;
        if (change < 1e-13 * std::max(1.0, pmat.cwiseAbs().maxCoeff())) break;
    }
    std::array<double, 5> gain{};
    for (int i = 0; i < 5; ++i) gain[static_cast<std::size_t>(i)] = -k(0, i);
    return gain;
}

std::pair<double, double> derive_speed_gains(const VehicleParams& p, double omega_n) {
    // Rigid wheels: vx' = tau / (R m), so (vx - V_ref)'' + K_T (vx)' + K_v / (R m) (vx - V_ref) = 0.
    const double k_v = omega_n * omega_n * p.wheel_radius * p.mass;
    const double k_t = 2.0 * omega_n;
    return {k_v, k_t};
}

std::vector<ControlInput> candidate_grid(const ActuatorBounds& bounds, int steer_levels,
                                         int torque_levels) {
    if (steer_levels < 1 || torque_levels < 1) throw std::invalid_argument("need >= 1 level");
    auto levels = [](double bound, int n) {
        std::vector<double> out;
        if (n == 1) return std::vector<double>{0.0};
        for (int i = 0; i < n; ++i) out.push_back(-bound + 2.0 * bound * i / (n - 1));
        // Exact zero for the middle level of an odd grid.
        if (n % 2 == 1) out[static_cast<std::size_t>(n / 2)] = 0.0;
        return out;
    };
    std::vector<ControlInput> grid;
    for (double s : levels(bounds.max_steer_rate, steer_levels)) {
        for (double t : levels(bounds.max_torque_rate, torque_levels)) grid.push_back({s, t});
    }
    return grid;
}

// --- filter ------------------------------------------------------------------

DeviationWeights DeviationWeights::normalised(const ActuatorBounds& b) {
    return {1.0 / (b.max_steer_rate * b.max_steer_rate),
            1.0 / (b.max_torque_rate * b.max_torque_rate)};
}

double deviation_cost(const ControlInput& u, const ControlInput& reference,
                      const DeviationWeights& w) {
    const double ds = u.steer_rate - reference.steer_rate;
    const double dt = u.torque_rate - reference.torque_rate;
    return 0.5 * (w.steer_rate * ds * ds + w.torque_rate * dt * dt);
}

namespace {

// Full check of a candidate the certificate accepts; nullopt otherwise.
std::optional<safety::ConstraintCheck> checked(const Certificate& cert, const ControlInput& u) {
    if (cert.screen) return cert.screen(u);
    const auto c = cert.evaluate(u);
    if (!c.satisfied) return std::nullopt;
    return c;
}

}  // namespace

FilterResult safe_filter(const ControlInput& nominal_input,
                         const std::vector<ControlInput>& candidates, const DeviationWeights& w,
                         const Certificate& cert) {
    if (candidates.empty()) throw std::invalid_argument("safe_filter needs candidates");
    const std::size_t n = candidates.size();
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = deviation_cost(candidates[i], nominal_input, w);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dev[a] < dev[b]; });

    const auto better = [](const FilterResult& a, const FilterResult& b) {
        return a.margin > b.margin || (a.margin == b.margin && a.candidate_index < b.candidate_index);
    };
    int evaluated = 0;

    std::size_t pos = 0;
    while (pos < n) {
        // Group of candidates with identical deviation.
        std::size_t end = pos + 1;
        while (end < n && dev[order[end]] == dev[order[pos]]) ++end;

        std::optional<FilterResult> group_best;
        for (std::size_t g = pos; g < end; ++g) {
            const std::size_t i = order[g];
            ++evaluated;
            const auto c = checked(cert, candidates[i]);
            if (!c) continue;
            FilterResult r{candidates[i], true, c->margin, dev[i], static_cast<int>(i), 0};
            if (!group_best || better(r, *group_best)) group_best = r;
        }
        if (group_best) {
            group_best->evaluated = evaluated;
            return *group_best;
        }
        pos = end;
    }

    // Nothing feasible: largest margin wins.
    FilterResult best;
    best.margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = cert.evaluate(candidates[i]);
        FilterResult r{candidates[i], false, c.margin, dev[i], static_cast<int>(i), 0};
        if (better(r, best)) best = r;
    }
    best.evaluated = evaluated;
    return best;
}

// --- MPC -----------------------------------------------------------------------

void MPCConfig::validate() const {
    if (horizon < 1) throw std::invalid_argument("MPC horizon must be >= 1");
    if (control_horizon < 1) throw std::invalid_argument("control horizon must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("MPC dt must be positive");
    if (speed_weight < 0.0 || lateral_weight < 0.0 || heading_weight < 0.0) {
        throw std::invalid_argument("MPC weights must be >= 0");
    }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Predictor {
    const PredictionModel& model;
    const MPCConfig& cfg;
    mutable Rng unused{0};

    std::optional<VehicleState> advance(const VehicleState& x, const ControlInput& u) const {
        auto r = vehicle::step(x, u, model.params, model.friction, model.road,
                               vehicle::NoiseSpec::none(), cfg.dt, unused, cfg.prediction);
        if (!r.valid) return std::nullopt;
        return r.state;
    }

    double stage(const VehicleState& x) const {
        const double dv = x.vx - cfg.v_ref;
        return cfg.speed_weight * dv * dv + cfg.lateral_weight * x.lateral_error * x.lateral_error +
               cfg.heading_weight * x.heading_error * x.heading_error;
    }

    // Cost of steps [from, horizon] holding zero rates, starting at x (already
    // the state after step `from - 1`).
    double hold_cost(VehicleState x, int remaining) const {
        double cost = 0.0;
        for (int i = 0; i < remaining; ++i) {
            auto next = advance(x, {});
            if (!next) return kInf;
            x = *next;
            cost += stage(x);
        }
        return cost;
    }

    // Best continuation cost from x with `moves_left` free moves and
    // `steps_left` prediction steps.
    double best_from(const VehicleState& x, const std::vector<ControlInput>& grid, int moves_left,
                     int steps_left, std::vector<ControlInput>* best_seq) const {
        if (steps_left == 0) return 0.0;
        if (moves_left == 0) return hold_cost(x, steps_left);
        double best = kInf;
        std::vector<ControlInput> tail;
        for (const auto& u : grid) {
            auto next = advance(x, u);
            if (!next) continue;
            std::vector<ControlInput> sub;
            const double c = stage(*next) + best_from(*next, grid, moves_left - 1, steps_left - 1,
                                                      best_seq ? &sub : nullptr);
            if (c < best) {
                best = c;
                if (best_seq) {
                    tail.clear();
                    tail.push_back(u);
                    tail.insert(tail.end(), sub.begin(), sub.end());
                }
            }
        }
        if (best_seq) *best_seq = std::move(tail);
        return best;
    }
};

}  // namespace

double mpc_sequence_cost(const VehicleState& x0, const PredictionModel& model, const MPCConfig& cfg,
                         const std::vector<ControlInput>& moves) {
    Predictor pred{model, cfg};
    VehicleState x = x0;
    double cost = 0.0;
    for (int k = 0; k < cfg.horizon; ++k) {
        const ControlInput u = k < static_cast<int>(moves.size()) ? moves[static_cast<std::size_t>(k)]
                                                                  : ControlInput{};
        auto next = pred.advance(x, u);
        if (!next) return kInf;
        x = *next;
        cost += pred.stage(x);
    }
    return cost;
}

MPCPlan mpc_plan(const VehicleState& x, const PredictionModel& model, const MPCConfig& cfg,
                 const Certificate* cert) {
    cfg.validate();
    const auto search_start = std::chrono::steady_clock::now();
    const auto grid = candidate_grid(model.bounds, cfg.steer_levels, cfg.torque_levels);
    Predictor pred{model, cfg};
    const int free_moves = std::min(cfg.control_horizon, cfg.horizon);

    struct FirstMove {
        int index;
        double cost;
        std::vector<ControlInput> sequence;
    };
    std::vector<FirstMove> firsts;
    firsts.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        FirstMove f{static_cast<int>(i), kInf, {grid[i]}};
        if (auto next = pred.advance(x, grid[i])) {
            std::vector<ControlInput> tail;
            f.cost = pred.stage(*next) +
                     pred.best_from(*next, grid, free_moves - 1, cfg.horizon - 1, &tail);
            f.sequence.insert(f.sequence.end(), tail.begin(), tail.end());
        }
        firsts.push_back(std::move(f));
    }
    std::stable_sort(firsts.begin(), firsts.end(),
                     [](const FirstMove& a, const FirstMove& b) { return a.cost < b.cost; });

    MPCPlan plan;
    plan.search_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - search_start).count();
    auto finish = [&](const FirstMove& f) {
        plan.sequence = f.sequence;
        plan.sequence.resize(static_cast<std::size_t>(cfg.horizon), ControlInput{});
        plan.cost = f.cost;
        plan.first_index = f.index;
    };

    if (!std::isfinite(firsts.front().cost)) {
        plan.sequence.assign(static_cast<std::size_t>(cfg.horizon), ControlInput{});
        plan.cost = kInf;
        plan.fallback = true;
        plan.feasible = cert == nullptr;
        return plan;
    }
    if (!cert) {
        finish(firsts.front());
        return plan;
    }

    // Certificate on the first move only; walk first moves in cost order.
    for (const auto& f : firsts) {
        if (!std::isfinite(f.cost)) break;
        const auto& u = grid[static_cast<std::size_t>(f.index)];
        ++plan.evaluated;
        if (const auto c = checked(*cert, u)) {
            finish(f);
            plan.feasible = true;
            plan.margin = c->margin;
            return plan;
        }
    }
    const FirstMove* fallback = nullptr;
    double fallback_margin = -kInf;
    for (const auto& f : firsts) {
        if (!std::isfinite(f.cost)) break;
        const double m = cert->evaluate(grid[static_cast<std::size_t>(f.index)]).margin;
        if (m > fallback_margin) {
            fallback_margin = m;
            fallback = &f;
        }
    }
    finish(*fallback);
    plan.feasible = false;
    plan.margin = fallback_margin;
    return plan;
}

// --- vehicle system ------------------------------------------------------------

std::optional<VehicleState> VehicleSystem::propagate(const State& x, const Input& u, double xi,
                                                     double dt, Rng& rng) const {
    auto r = vehicle::step(x, u, params, xi, road, noise, dt, rng, integrator);
    if (!r.valid) return std::nullopt;
    return r.state;
}

ControlInput VehicleSystem::reference_input(const State& x, double xi_hat) const {
    return nominal(x, xi_hat, road, controller);
}

bool VehicleSystem::in_safe_set(const State& x) const {
    return safety::in_safe_set(x.lateral_error, safe_set);
}

double VehicleSystem::clamp_parameter(double xi) const {
    return std::clamp(xi, friction_lo, friction_hi);
}

}  // namespace apsc::control
