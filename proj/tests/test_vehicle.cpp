#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "apsc/vehicle.hpp"

using namespace apsc;
using namespace apsc::vehicle;

namespace {

VehicleState operating_point() {
    VehicleState x;
    x.vx = 10.0;
    x.vy = 0.3;
    x.yaw_rate = 0.1;
    x.steer = 0.02;
    x.wheel_speed = {32.0, 32.0, 32.0, 32.0};
    return x;
}

// One tire force written out as a single expression.
double force(double sigma0, double sigma2, double kappa, double rel_dir, double rel_x, double rel_y,
             double omega, double mu, const VehicleParams& p) {
    const double rel = std::hypot(rel_x, rel_y);
    const double g = 0.35 + 0.20 * std::exp(-std::sqrt(rel / 6.6));
    return (sigma0 / (sigma0 * rel / (mu * g) + kappa * p.wheel_radius * std::abs(omega)) + sigma2) *
           rel_dir * (1430.0 * 9.8 / 4.0);
}

}  // namespace

TEST_CASE("reference parameter set") {
    const VehicleParams p;
    CHECK(p.mass == 1430.0);
    CHECK(p.wheel_radius == 0.325);
    CHECK(p.yaw_inertia == 2059.0);
    CHECK(p.wheel_inertia == 1.68);
    CHECK(p.cg_to_front == 1.05);
    CHECK(p.cg_to_rear == 1.61);
    CHECK(p.track_width == 1.55);
    CHECK(p.stribeck_velocity == 6.6);
    CHECK(p.long_stiffness == 195.0);
    CHECK(p.lat_stiffness == 195.0);
    CHECK(p.long_damping == 0.001);
    CHECK(p.lat_damping == 0.001);
    CHECK(p.long_load_factor == 13.4);
    CHECK(p.lat_load_factor == 13.4);
    CHECK(p.static_friction == 0.55);
    CHECK(p.kinetic_friction == 0.35);
    CHECK(p.gravity == 9.8);
    CHECK(p.normal_load == doctest::Approx(1430.0 * 9.8 / 4.0));
    CHECK_NOTHROW(p.validate());

    VehicleParams bad = p;
    bad.kinetic_friction = 0.6;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = p;
    bad.mass = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("slip quantities") {
    const VehicleParams p;
    auto x = rolling_state(12.0, p);
    for (const auto& s : slip_quantities(x, p)) {
        CHECK(s.slip_ratio == doctest::Approx(0.0));
        CHECK(s.slip_angle == 0.0);
    }
    x.wheel_speed.fill(0.0);
    for (const auto& s : slip_quantities(x, p)) CHECK(s.slip_ratio == -1.0);

    x = rolling_state(7.0, p);
    x.steer = 0.05;
    const auto s = slip_quantities(x, p);
    CHECK(s[kFrontLeft].slip_angle == doctest::Approx(0.05));
    CHECK(s[kFrontRight].slip_angle == doctest::Approx(0.05));
    CHECK(s[kRearLeft].slip_angle == 0.0);

    x.vx = 0.0;
    CHECK_THROWS_AS(slip_quantities(x, p), std::domain_error);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        VehicleState y;
        y.vx = 0.1 + 40.0 * u(rng);
        for (auto& w : y.wheel_speed) w = 200.0 * u(rng);
        for (const auto& q : slip_quantities(y, p)) {
            CHECK(q.slip_ratio >= -1.0);
            CHECK(q.slip_ratio <= 1.0);
        }
    }
}

TEST_CASE("Stribeck curve") {
    const VehicleParams p;
    CHECK(stribeck(0.0, p) == doctest::Approx(0.55));
    CHECK(stribeck(1e12, p) == doctest::Approx(0.35).epsilon(1e-3));
    CHECK(stribeck(6.6, p) == doctest::Approx(0.35 + 0.20 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(stribeck(6.6, p) == doctest::Approx(0.4236).epsilon(1e-4));
    for (double v = 0.0; v < 500.0; v += 0.37) {
        const double g = stribeck(v, p);
        CHECK(g >= 0.35);
        CHECK(g <= 0.55);
    }
}

TEST_CASE("LuGre forces") {
    const VehicleParams p;
    // rolling with zero slip: no force anywhere
    const auto zero = lugre_forces(rolling_state(15.0, p), p, 0.3);
    for (std::size_t w = 0; w < kWheels; ++w) {
        CHECK(zero.longitudinal[w] == 0.0);
        CHECK(zero.side[w] == 0.0);
    }

    // independent scalar evaluation at a fixed operating point
    const auto x = operating_point();
    const double mu = 0.3;
    const auto f = lugre_forces(x, p, mu);
    const double rel_x = 0.325 * 32.0 - 10.0;
    const double a_front = 0.02 - (0.3 + 1.05 * 0.1) / 10.0;
    const double a_rear = -(0.3 - 1.61 * 0.1) / 10.0;
    for (std::size_t w = 0; w < kWheels; ++w) {
        const double a = w < 2 ? a_front : a_rear;
        const double ry = 10.0 * a;
        CHECK(std::abs(f.longitudinal[w] - force(195.0, 0.001, 13.4, rel_x, rel_x, ry, 32.0, mu, p)) < 1e-10);
        CHECK(std::abs(f.side[w] - force(195.0, 0.001, 13.4, ry, rel_x, ry, 32.0, mu, p)) < 1e-10);
    }

    // F_L carries the sign of the relative velocity
    for (double omega : {20.0, 30.0, 30.769, 31.0, 40.0}) {
        auto y = operating_point();
        y.wheel_speed.fill(omega);
        const double rel = p.wheel_radius * omega - y.vx;
        const auto g = lugre_forces(y, p, 0.5);
        CHECK((g.longitudinal[0] > 0.0) == (rel > 0.0));
    }

    CHECK_THROWS_AS(lugre_forces(x, p, 0.0), std::domain_error);
    CHECK_THROWS_AS(lugre_forces(x, p, -0.2), std::domain_error);
}

TEST_CASE("drift identities") {
    const VehicleParams p;
    const auto straight = RoadProfile::straight(500.0);
    const auto d = derivative(rolling_state(10.0, p), {}, p, 0.5, straight);
    CHECK(d.lateral_error == 0.0);
    CHECK(d.heading_error == 0.0);
    CHECK(d.vy == 0.0);
    CHECK(d.station == doctest::Approx(10.0));

    const RoadProfile arc({{200.0, 0.02}});
    auto x = rolling_state(12.0, p);
    x.station = 10.0;
    CHECK(derivative(x, {0.1, 50.0}, p, 0.5, arc).heading_error == doctest::Approx(-12.0 * 0.02));
    CHECK(derivative(x, {0.1, 50.0}, p, 0.5, arc).steer == 0.1);
    CHECK(derivative(x, {0.1, 50.0}, p, 0.5, arc).torque == 50.0);

    // quarter torque per wheel at zero slip
    x.torque = 100.0;
    const auto dw = derivative(x, {}, p, 0.5, arc);
    for (double w : dw.wheel_speed) CHECK(w == doctest::Approx(25.0 / 1.68));
}

TEST_CASE("dv_x/dt matches a finite difference of the zero-noise step") {
    const VehicleParams p;
    const auto road = RoadProfile::standard_curve();
    auto x = operating_point();
    x.torque = 80.0;
    x.station = 70.0;
    const double h = 1e-7;
    Rng rng(1);
    IntegratorConfig one;
    one.min_substeps = 1;
    const auto fwd = step(x, {}, p, 0.4, road, NoiseSpec::none(), h, rng, one);
    const auto d = derivative(x, {}, p, 0.4, road);
    CHECK(std::abs((fwd.state.vx - x.vx) / h - d.vx) < 1e-6 * std::max(1.0, std::abs(d.vx)));
    CHECK(std::abs((fwd.state.lateral_error - x.lateral_error) / h - d.lateral_error) < 1e-6);
}

TEST_CASE("step converges as substeps increase") {
    const VehicleParams p;
    const auto road = RoadProfile::standard_curve();
    auto x = rolling_state(10.0, p);
    x.steer = 0.03;
    x.station = 50.0;
    const ControlInput u{0.05, 100.0};
    Rng rng(1);
    auto run = [&](int substeps) {
        IntegratorConfig c;
        c.min_substeps = substeps;
        c.max_substep = 1.0;
        return step(x, u, p, 0.4, road, NoiseSpec::none(), 0.2, rng, c).state;
    };
    const auto ref = run(4000);
    const double e8 = std::abs(run(8).lateral_error - ref.lateral_error) + std::abs(run(8).vy - ref.vy);
    const double e80 = std::abs(run(80).lateral_error - ref.lateral_error) + std::abs(run(80).vy - ref.vy);
    CHECK(e80 < e8);
    CHECK(e80 < 0.2 * e8);  // first order: 10x substeps, about 10x smaller
}

TEST_CASE("process noise has variance sigma^2 dt") {
    const VehicleParams p;
    const auto road = RoadProfile::straight(1000.0);
    const NoiseSpec noise{0.0, 0.5, 0.0};
    const auto x = rolling_state(10.0, p);
    const double dt = 0.01;
    Rng rng(42);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = step(x, {}, p, 0.5, road, noise, dt, rng).state.vy;
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(0.25 * dt).epsilon(0.05));
}

TEST_CASE("step is deterministic given the engine state") {
    const VehicleParams p;
    const auto road = RoadProfile::standard_curve();
    auto x = rolling_state(11.0, p);
    Rng a(9), b(9);
    for (int k = 0; k < 50; ++k) {
        const auto sa = step(x, {0.01, 10.0}, p, 0.35, road, {}, 0.2, a);
        const auto sb = step(x, {0.01, 10.0}, p, 0.35, road, {}, 0.2, b);
        REQUIRE(sa.state == sb.state);
        x = sa.state;
    }
}

TEST_CASE("straight road keeps the lane exactly without disturbances") {
    const VehicleParams p;
    const auto road = RoadProfile::straight(1e5);
    auto x = rolling_state(10.0, p);
    x.torque = 30.0;
    Rng rng(0);
    for (int k = 0; k < 100; ++k) {
        x = step(x, {}, p, 0.5, road, NoiseSpec::none(), 0.2, rng).state;
    }
    CHECK(std::abs(x.lateral_error) <= 1e-9);
    CHECK(std::abs(x.heading_error) <= 1e-9);
}

TEST_CASE("leaving the speed floor is reported, not thrown") {
    const VehicleParams p;
    Rng rng(0);
    const auto r = step(rolling_state(0.4, p), {}, p, 0.5, RoadProfile::straight(10.0), {}, 0.2, rng);
    CHECK_FALSE(r.valid);
    CHECK_THROWS_AS(step(rolling_state(5.0, p), {}, p, 0.5, RoadProfile::straight(10.0), {}, 0.0, rng),
                    std::invalid_argument);
    CHECK(IntegratorConfig{}.substeps_for(0.2) == 8);
    CHECK(IntegratorConfig{}.substeps_for(0.05) == 4);
}

TEST_CASE("road profile geometry") {
    const auto road = RoadProfile::standard_curve();
    CHECK(road.length() == 280.0);
    CHECK(road.curvature(-5.0) == 0.0);
    CHECK(road.curvature(59.9) == 0.0);
    CHECK(road.curvature(60.0) == 0.02);
    CHECK(road.curvature(179.9) == 0.02);
    CHECK(road.curvature(400.0) == 0.0);

    const auto end_of_arc = road.to_global(180.0, 0.0);
    CHECK(end_of_arc.x == doctest::Approx(60.0 + 50.0 * std::sin(2.4)));
    CHECK(end_of_arc.y == doctest::Approx(50.0 * (1.0 - std::cos(2.4))));
    const auto left = road.to_global(30.0, 2.0);
    CHECK(left.x == doctest::Approx(30.0));
    CHECK(left.y == doctest::Approx(2.0));

    CHECK_THROWS_AS(RoadProfile(std::vector<RoadSegment>{}), std::invalid_argument);
    CHECK_THROWS_AS(RoadProfile({{0.0, 0.1}}), std::invalid_argument);
    CHECK_THROWS_AS(RoadProfile({{10.0, std::nan("")}}), std::invalid_argument);
}

TEST_CASE("state array round trip and actuator clamp") {
    auto x = operating_point();
    x.torque = 5.0;
    x.station = 3.0;
    x.lateral_error = -0.4;
    x.heading_error = 0.01;
    CHECK(VehicleState::from_array(x.to_array()) == x);
    CHECK(x.finite());
    x.vy = std::nan("");
    CHECK_FALSE(x.finite());

    const ActuatorBounds b;
    CHECK(b.clamp({2.0, -5000.0}) == ControlInput{0.5, -2000.0});
    CHECK(b.contains({0.5, 2000.0}));
    CHECK_FALSE(b.contains({0.51, 0.0}));
}
