#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "apsc/control.hpp"

using namespace apsc;
using namespace apsc::control;
using vehicle::RoadProfile;

namespace {

// Linear single-track model, rebuilt here for the stability check.
Eigen::Matrix<double, 5, 5> bicycle(const VehicleParams& p, double v) {
    const double c = 2.0 * (p.lat_stiffness / p.lat_load_factor + p.lat_damping * v) * p.normal_load;
    const double m = p.mass, iz = p.yaw_inertia, lf = p.cg_to_front, lr = p.cg_to_rear;
    Eigen::Matrix<double, 5, 5> a = Eigen::Matrix<double, 5, 5>::Zero();
    a(0, 0) = -2.0 * c / (m * v);
    a(0, 1) = -v - c * (lf - lr) / (m * v);
    a(0, 2) = c / m;
    a(1, 0) = -c * (lf - lr) / (iz * v);
    a(1, 1) = -c * (lf * lf + lr * lr) / (iz * v);
    a(1, 2) = c * lf / iz;
    a(3, 0) = 1.0;
    a(3, 4) = v;
    a(4, 1) = 1.0;
    return a;
}

struct FakeCert {
    std::vector<double> margins;  // per candidate index
    std::vector<ControlInput> candidates;
    mutable int calls = 0;

    safety::ConstraintCheck operator()(const ControlInput& u) const {
        ++calls;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (candidates[i] == u) return {margins[i] >= 0.0, margins[i]};
        }
        FAIL("unknown candidate");
        return {};
    }
};

}  // namespace

TEST_CASE("frozen lateral gains match the LQR derivation") {
    const NominalControllerConfig cfg;
    const auto derived = derive_lateral_gains(VehicleParams{}, cfg.v_ref);
    for (std::size_t i = 0; i < 5; ++i) {
        CAPTURE(i);
        CHECK(derived[i] == doctest::Approx(cfg.lateral_gain[i]).epsilon(1e-6));
    }
}

TEST_CASE("LQR gain stabilises the linear model") {
    const VehicleParams p;
    for (double v : {5.0, 40.0 / 3.6, 20.0}) {
        const auto k = derive_lateral_gains(p, v);
        Eigen::Matrix<double, 5, 5> acl = bicycle(p, v);
        for (int i = 0; i < 5; ++i) acl(2, i) += k[static_cast<std::size_t>(i)];
        const Eigen::VectorXcd ev = acl.eigenvalues();
        for (int i = 0; i < 5; ++i) CHECK(ev(i).real() < 0.0);
    }
}

TEST_CASE("speed gains: critically damped at omega_n = 0.25") {
    const VehicleParams p;
    const auto [kv, kt] = derive_speed_gains(p, 0.25);
    CHECK(kt == doctest::Approx(0.5));
    CHECK(kv == doctest::Approx(0.0625 * 0.325 * 1430.0));
    const NominalControllerConfig cfg;
    CHECK(cfg.speed_gain == doctest::Approx(kv).epsilon(1e-3));
    CHECK(cfg.torque_gain == kt);
    // discriminant of s^2 + K_T s + K_v / (R m) is zero
    CHECK(kt * kt - 4.0 * kv / (p.wheel_radius * p.mass) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nominal controller") {
    const NominalControllerConfig cfg;
    const VehicleParams p;
    const auto straight = RoadProfile::straight(500.0);
    auto x = vehicle::rolling_state(cfg.v_ref, p);
    CHECK(nominal(x, 0.3, straight, cfg) == ControlInput{0.0, 0.0});

    // steering corrects a left offset to the right, the speed loop accelerates when slow
    x.lateral_error = 0.5;
    x.vx = 8.0;
    const auto u = nominal(x, 0.3, straight, cfg);
    CHECK(u.steer_rate < 0.0);
    CHECK(u.torque_rate == doctest::Approx(-cfg.speed_gain * (8.0 - cfg.v_ref)));
    CHECK(nominal(x, 0.9, straight, cfg) == u);  // estimate not used by this law

    // yaw-rate feed-forward: on the arc, the curvature yaw rate is not an error
    const RoadProfile arc({{500.0, 0.02}});
    auto y = vehicle::rolling_state(cfg.v_ref, p);
    y.yaw_rate = cfg.v_ref * 0.02;
    CHECK(nominal(y, 0.3, arc, cfg).steer_rate == doctest::Approx(0.0).epsilon(1e-15));

    x.lateral_error = 100.0;
    x.vx = 100.0;
    CHECK(cfg.bounds.contains(nominal(x, 0.3, straight, cfg)));
}

TEST_CASE("candidate grid") {
    const ActuatorBounds b;
    const auto g = candidate_grid(b, 7, 5);
    REQUIRE(g.size() == 35);
    CHECK(g.front() == ControlInput{-0.5, -2000.0});
    CHECK(g.back() == ControlInput{0.5, 2000.0});
    CHECK(g[17] == ControlInput{0.0, 0.0});
    CHECK(g[1] == ControlInput{-0.5, -1000.0});
    for (const auto& u : g) CHECK(b.contains(u));
    CHECK(candidate_grid(b, 1, 1).size() == 1);
    CHECK_THROWS(candidate_grid(b, 0, 3));
}

TEST_CASE("safe filter equals brute-force minimal deviation") {
    const ActuatorBounds b;
    const auto cands = candidate_grid(b, 7, 5);
    const auto w = DeviationWeights::normalised(b);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        FakeCert fc{{}, cands};
        for (std::size_t i = 0; i < cands.size(); ++i) {
            // ~70% infeasible; margins quantised so ties happen
            fc.margins.push_back(std::round(4.0 * (u(rng) - 0.4)) / 4.0);
        }
        const ControlInput nom{0.6 * u(rng), 2400.0 * u(rng)};
        const Certificate cert{std::cref(fc), nullptr};
        const auto r = safe_filter(nom, cands, w, cert);

        int best = -1;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (fc.margins[i] < 0.0) continue;
            const double di = deviation_cost(cands[i], nom, w);
            if (best < 0) {
                best = static_cast<int>(i);
                continue;
            }
            const double db = deviation_cost(cands[static_cast<std::size_t>(best)], nom, w);
            if (di < db || (di == db && fc.margins[i] > fc.margins[static_cast<std::size_t>(best)])) {
                best = static_cast<int>(i);
            }
        }
        if (best >= 0) {
            CHECK(r.feasible);
            CHECK(r.candidate_index == best);
            CHECK(r.margin >= 0.0);
        } else {
            CHECK_FALSE(r.feasible);
            const auto top = std::max_element(fc.margins.begin(), fc.margins.end());
            CHECK(r.candidate_index == static_cast<int>(top - fc.margins.begin()));
        }
        CHECK(r.input == cands[static_cast<std::size_t>(r.candidate_index)]);
    }
}

TEST_CASE("safe filter stops at the first feasible deviation level") {
    const ActuatorBounds b;
    const auto cands = candidate_grid(b, 7, 5);
    FakeCert fc{std::vector<double>(cands.size(), 1.0), cands};
    const Certificate cert{std::cref(fc), nullptr};
    const auto r = safe_filter({0.0, 0.0}, cands, DeviationWeights::normalised(b), cert);
    CHECK(r.candidate_index == 17);
    CHECK(r.evaluated == 1);
    CHECK(fc.calls == 1);
    CHECK(r.deviation == 0.0);
    CHECK_THROWS(safe_filter({}, {}, DeviationWeights{}, cert));
}

TEST_CASE("safe filter uses the screen when given") {
    const ActuatorBounds b;
    const auto cands = candidate_grid(b, 3, 3);
    FakeCert fc{{-1, -1, -1, -1, -1, 0.5, -1, -1, -1}, cands};
    int screened = 0;
    Certificate cert{std::cref(fc), [&](const ControlInput& u) -> std::optional<safety::ConstraintCheck> {
                         ++screened;
                         const auto c = fc(u);
                         if (!c.satisfied) return std::nullopt;
                         return c;
                     }};
    const auto r = safe_filter({0.0, 0.0}, cands, DeviationWeights::normalised(b), cert);
    CHECK(r.feasible);
    CHECK(r.candidate_index == 5);
    CHECK(screened == r.evaluated);
}

TEST_CASE("MPC search equals exhaustive enumeration") {
    const VehicleParams p;
    PredictionModel model{p, RoadProfile::standard_curve(), {}, 0.4};
    MPCConfig cfg;
    cfg.horizon = 4;
    cfg.control_horizon = 2;
    cfg.steer_levels = 3;
    cfg.torque_levels = 3;
    const auto grid = candidate_grid(model.bounds, 3, 3);

    auto x = vehicle::rolling_state(9.0, p);
    x.station = 55.0;
    x.lateral_error = 0.4;
    x.heading_error = -0.03;

    double best = std::numeric_limits<double>::infinity();
    double best_constrained = best;
    for (const auto& a : grid) {
        for (const auto& c : grid) {
            const double cost = mpc_sequence_cost(x, model, cfg, {a, c});
            best = std::min(best, cost);
            if (a.steer_rate > 0.0) best_constrained = std::min(best_constrained, cost);
        }
    }
    const auto plan = mpc_plan(x, model, cfg);
    CHECK(plan.cost == doctest::Approx(best).epsilon(1e-12));
    CHECK(plan.sequence.size() == 4);
    CHECK(plan.sequence[2] == ControlInput{});
    CHECK(mpc_sequence_cost(x, model, cfg, plan.sequence) == doctest::Approx(plan.cost).epsilon(1e-12));
    CHECK(plan.search_seconds >= 0.0);

    // a certificate that accepts only left-steering first moves
    Certificate cert{[](const ControlInput& u) {
                         return safety::ConstraintCheck{u.steer_rate > 0.0, u.steer_rate - 0.1};
                     },
                     nullptr};
    const auto constrained = mpc_plan(x, model, cfg, &cert);
    CHECK(constrained.feasible);
    CHECK(constrained.sequence[0].steer_rate > 0.0);
    CHECK(constrained.cost == doctest::Approx(best_constrained).epsilon(1e-12));

    Certificate never{[](const ControlInput& u) {
                          return safety::ConstraintCheck{false, -1.0 - std::abs(u.torque_rate)};
                      },
                      nullptr};
    const auto none = mpc_plan(x, model, cfg, &never);
    CHECK_FALSE(none.feasible);
    CHECK(none.sequence[0].torque_rate == 0.0);  // max margin first move
}

TEST_CASE("vehicle as a stochastic system") {
    VehicleSystem sys{};
    sys.road = RoadProfile::standard_curve();
    sys.safe_set = {3.0};
    CHECK(sys.clamp_parameter(-1.0) == sys.friction_lo);
    CHECK(sys.clamp_parameter(5.0) == sys.friction_hi);
    CHECK(sys.clamp_parameter(0.4) == 0.4);

    auto x = vehicle::rolling_state(10.0, sys.params);
    CHECK(sys.in_safe_set(x));
    x.lateral_error = 3.01;
    CHECK_FALSE(sys.in_safe_set(x));

    Rng rng(1);
    CHECK_FALSE(sys.propagate(vehicle::rolling_state(0.3, sys.params), {}, 0.4, 0.2, rng).has_value());
    const auto y = sys.propagate(vehicle::rolling_state(10.0, sys.params), {}, 0.4, 0.2, rng);
    REQUIRE(y.has_value());
    CHECK(y->station > 1.9);
    CHECK(sys.reference_input(*y, 0.4) == nominal(*y, 0.4, sys.road, sys.controller));
}
