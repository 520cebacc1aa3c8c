#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "apsc/safety.hpp"
#include "support/theorem.hpp"
#include "support/toy.hpp"

using namespace apsc;
using belief::GaussianBelief;
namespace sf = apsc::safety;

namespace {

// Psi by brute force over all 3^T noise paths; checks the DP oracle itself.
double psi_paths(const toy::Walk& sys, int x, double xi, int steps) {
    if (!sys.in_safe_set(x)) return 0.0;
    if (steps == 0) return 1.0;
    const int base = x + sys.reference_input(x, 0.0);
    return 0.5 * xi * psi_paths(sys, base - 1, xi, steps - 1) +
           (1.0 - xi) * psi_paths(sys, base, xi, steps - 1) +
           0.5 * xi * psi_paths(sys, base + 1, xi, steps - 1);
}

bool within(double estimate, double exact, int n, double z = 4.5) {
    const double p = std::clamp(exact, 1e-3, 1.0 - 1e-3);
    return std::abs(estimate - exact) <= z * std::sqrt(p * (1.0 - p) / n) + 2e-3;
}

}  // namespace

TEST_CASE("phi and the trajectory indicator") {
    const sf::SafeSetSpec s{3.0};
    CHECK(sf::phi(0.0, s) == 1.0);
    CHECK(sf::phi(3.0, s) == 0.0);
    CHECK(sf::phi(-1.5, s) == doctest::Approx(0.75));
    CHECK(sf::in_safe_set(-3.0, s));
    CHECK_FALSE(sf::in_safe_set(3.0001, s));

    const std::vector<double> inside{0.0, 1.0, -2.9, 3.0};
    const std::vector<double> outside{0.0, 3.1, 0.0};
    CHECK(sf::long_term_safe(inside, s) == 1);
    CHECK(sf::long_term_safe(outside, s) == 0);
    CHECK_THROWS_AS(sf::long_term_safe(std::vector<double>{}, s), std::invalid_argument);
    const std::vector<double> nan{0.0, std::nan("")};
    CHECK(sf::long_term_safe(nan, s) == 0);
}

TEST_CASE("constraint uses gamma(psi - (1 - eps))") {
    sf::PSCConfig cfg;
    cfg.epsilon = 0.1;
    cfg.gain = 1.0;
    // psi above 1 - eps leaves room for a negative generator
    CHECK(sf::constraint_satisfied(0.95, -0.0499, cfg).satisfied);
    CHECK_FALSE(sf::constraint_satisfied(0.95, -0.0501, cfg).satisfied);
    // below 1 - eps the generator must pull back up
    CHECK_FALSE(sf::constraint_satisfied(0.8, 0.05, cfg).satisfied);
    CHECK(sf::constraint_satisfied(0.8, 0.1, cfg).satisfied);
    CHECK(sf::constraint_satisfied(0.8, 0.1, cfg).margin == doctest::Approx(0.0).epsilon(1e-12));
    cfg.gain = 0.0;
    CHECK_FALSE(sf::constraint_satisfied(0.99, -1e-9, cfg).satisfied);
}

TEST_CASE("PSC config validation") {
    sf::PSCConfig c;
    CHECK_NOTHROW(c.validate());
    c.epsilon = 1.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.gain = 1.5;
    CHECK_THROWS(c.validate());
    c = {};
    c.generator.propagations = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("toy oracle agrees with path enumeration") {
    const toy::Walk sys{};
    const toy::Oracle oracle(sys);
    for (int x = -5; x <= 5; ++x) {
        for (double xi : {0.0, 0.3, 0.5, 0.9, 1.0}) {
            for (int t : {0, 1, 4, 7}) {
                CHECK(oracle.psi_fixed(x, xi, t) == doctest::Approx(psi_paths(sys, x, xi, t)).epsilon(1e-12));
            }
        }
    }
    // deterministic pull toward zero never leaves the set
    CHECK(oracle.psi_fixed(4, 0.0, 20) == 1.0);
    // a point-mass belief reduces to the fixed-parameter value
    CHECK(oracle.psi(2, {0.4, 1e-14, 0}, 6) == doctest::Approx(oracle.psi_fixed(2, 0.4, 6)).epsilon(1e-9));
}

TEST_CASE("estimate_psi matches the exact safety probability") {
    const toy::Walk sys{};
    const toy::Oracle oracle(sys);
    const int n = 20000;
    int key = 0;
    for (int x : {0, 2, 3, 4, 5}) {
        for (auto b : {GaussianBelief::from_std(0.5, 0.05), GaussianBelief::from_std(0.8, 0.3),
                       GaussianBelief::from_std(0.2, 0.1)}) {
            for (int t : {3, 10}) {
                const auto est = sf::estimate_psi(sys, x, b, {t, 1.0}, n, {17, static_cast<std::uint64_t>(++key) << 32});
                const double exact = oracle.psi(x, b, t);
                CAPTURE(x);
                CAPTURE(b.mean);
                CAPTURE(t);
                CHECK(within(est.value, exact, n));
                CHECK(est.n_samples == n);
                CHECK(est.half_width == doctest::Approx(1.96 * std::sqrt(est.value * (1 - est.value) / n)));
            }
        }
    }
}

TEST_CASE("expected_next_psi matches the exact one-step expectation") {
    const toy::Walk sys{};
    const toy::Oracle oracle(sys);
    const sf::GeneratorBudget budget{2000, 10};
    int key = 0;
    for (int x : {0, 3, 4}) {
        for (int u : {-1, 0, 1}) {
            const auto next = GaussianBelief::from_std(0.6, 0.1);
            const auto est = sf::expected_next_psi(sys, x, u, next, {8, 1.0}, 1.0, budget,
                                                   {23, static_cast<std::uint64_t>(++key) << 32});
            const double exact = oracle.expected_next(x, u, next, 8);
            CAPTURE(x);
            CAPTURE(u);
            // propagations are the coarse level: bound the error by them
            CHECK(within(est.value, exact, budget.propagations));
        }
    }
}

TEST_CASE("Monte Carlo results do not depend on the worker count") {
    const toy::Walk sys{};
    const auto b = GaussianBelief::from_std(0.7, 0.2);
    const sf::CrnKey key{5, 77};
    const auto one = sf::estimate_psi(sys, 3, b, {12, 1.0}, 3000, key, 1);
    const auto four = sf::estimate_psi(sys, 3, b, {12, 1.0}, 3000, key, 4);
    CHECK(one.safe_count == four.safe_count);
    const auto e1 = sf::expected_next_psi(sys, 3, 1, b, {12, 1.0}, 1.0, {30, 9}, key, 1);
    const auto e3 = sf::expected_next_psi(sys, 3, 1, b, {12, 1.0}, 1.0, {30, 9}, key, 3);
    CHECK(e1.safe_count == e3.safe_count);
}

TEST_CASE("required_safe_count agrees with constraint_satisfied") {
    sf::PSCConfig cfg;
    for (double gain : {0.0, 0.5, 1.0}) {
        for (double dt : {0.1, 0.2, 1.0}) {
            cfg.gain = gain;
            cfg.dt = dt;
            for (int n : {1, 7, 112}) {
                for (int i = 0; i <= 40; ++i) {
                    const double psi = i / 40.0;
                    const int req = sf::required_safe_count(psi, n, cfg);
                    for (int c = 0; c <= n; ++c) {
                        const bool ok = sf::constraint_satisfied(
                                            psi, sf::generator_from(static_cast<double>(c) / n, psi, dt), cfg)
                                            .satisfied;
                        CHECK(ok == (c >= req));
                    }
                }
            }
        }
    }
}

TEST_CASE("early-exit screen returns exactly the full estimate or nothing") {
    const toy::Walk sys{};
    const auto next = GaussianBelief::from_std(0.6, 0.2);
    const sf::GeneratorBudget budget{16, 7};
    const sf::SafetyHorizon h{10, 1.0};
    for (int x = -4; x <= 4; ++x) {
        for (int u : {-1, 0, 1}) {
            const sf::CrnKey key{31, static_cast<std::uint64_t>((x + 10) * 10 + u + 1) << 24};
            const auto full = sf::expected_next_psi(sys, x, u, next, h, 1.0, budget, key);
            for (int req : {0, 50, full.safe_count, full.safe_count + 1, 112, 113}) {
                const auto s = sf::expected_next_psi_if_at_least(sys, x, u, next, h, 1.0, budget, key, req);
                if (full.safe_count >= req) {
                    REQUIRE(s.has_value());
                    CHECK(s->safe_count == full.safe_count);
                    CHECK(s->value == full.value);
                } else {
                    CHECK_FALSE(s.has_value());
                }
            }
        }
    }
}

TEST_CASE("generator split: S + T reproduces A under shared samples") {
    const toy::Walk sys{};
    sf::PSCConfig cfg;
    cfg.dt = 1.0;
    cfg.mc_samples = 200;
    cfg.generator = {10, 5};
    std::mt19937_64 pick(3);
    for (int i = 0; i < 50; ++i) {
        const int x = static_cast<int>(pick() % 9) - 4;
        const int u = static_cast<int>(pick() % 3) - 1;
        const auto cur = GaussianBelief::from_std(0.5, 0.1);
        const auto next = belief::update(cur, 0.55, {0.05, -10, 10});
        const auto g = sf::generator_split(sys, x, u, cur, next, {8, 1.0}, cfg, {9, static_cast<std::uint64_t>(i) << 32});
        CHECK(std::abs(g.state_term + g.belief_term - g.generator) <= 1e-14);
        CHECK(g.generator == sf::generator(sys, x, u, cur, next, {8, 1.0}, cfg, {9, static_cast<std::uint64_t>(i) << 32}));
    }
}

TEST_CASE("Ito drift term on a quadratic") {
    // psi(x) = x^T Q x / 2 + c^T x, so grad = Qx + c, hessian = Q
    Eigen::MatrixXd q(2, 2);
    q << 2.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd c(2);
    c << 0.3, -0.2;
    Eigen::VectorXd x(2);
    x << 0.1, 0.4;
    auto psi = [&](const Eigen::VectorXd& at) {
        return sf::PsiSample{0.5 * at.dot(q * at) + c.dot(at), 0.01};
    };
    Eigen::VectorXd steps(2);
    steps << 1e-3, 1e-3;
    const auto d = sf::finite_difference_derivatives(psi, x, steps, 0.05);
    CHECK_FALSE(d.high_variance);
    CHECK((d.gradient - (q * x + c)).norm() < 1e-8);
    CHECK((d.hessian - q).norm() < 1e-5);

    Eigen::VectorXd f(2);
    f << 1.0, 2.0;
    Eigen::MatrixXd sigma(2, 1);
    sigma << 0.5, 0.0;
    const double expected = (q * x + c).dot(f) + 0.5 * 0.25 * q(0, 0);
    CHECK(sf::ito_drift_term(d.gradient, d.hessian, f, sigma) == doctest::Approx(expected).epsilon(1e-6));
    CHECK_THROWS(sf::ito_drift_term(d.gradient, d.hessian, Eigen::VectorXd(3), sigma));

    const auto noisy = sf::finite_difference_derivatives(
        [](const Eigen::VectorXd&) { return sf::PsiSample{0.5, 0.2}; }, x, steps, 0.05);
    CHECK(noisy.high_variance);
}

TEST_CASE("certificate keeps mean Psi above 1 - eps on the toy walk (small run)") {
    toy::TheoremSetup t;
    t.episodes = 150;
    const auto r = toy::run_theorem(t);
    CHECK(r.gate_failures == 0);
    CHECK(r.infeasible_steps == 0);
    CHECK(r.outward_moves > 0);  // the certificate did not just clamp to -1
    for (std::size_t k = 0; k < r.mean_psi.size(); ++k) {
        CAPTURE(k);
        CHECK(r.mean_psi[k] >= 1.0 - t.psc.epsilon - 3.0 * r.se[k]);
    }
}

TEST_CASE("Monte Carlo certificate stays close to the exact one on the toy walk") {
    toy::TheoremSetup t;
    t.episodes = 60;
    t.steps = 15;
    t.exact = false;
    const auto r = toy::run_theorem(t);
    CHECK(r.infeasible_steps == 0);
    // sampling error of the certificate itself is not covered by 3 SE; allow 0.03
    for (std::size_t k = 0; k < r.mean_psi.size(); ++k) {
        CAPTURE(k);
        CHECK(r.mean_psi[k] >= 1.0 - t.psc.epsilon - 3.0 * r.se[k] - 0.03);
    }
}

TEST_CASE("one-step invariant on the toy walk counts the exited episodes") {
    // Taking expectations of the constraint over the surviving episodes gives
    //   E[Psi_{k+1}] >= (1 - g) E[Psi_k] + g (1 - eps) P(alive_k),  g = gain * dt.
    // Exited episodes sit at Psi = 0 and cannot satisfy the constraint, so
    // the bound without the survival factor needs g small.
    for (double gain : {0.1, 1.0}) {
        CAPTURE(gain);
        toy::TheoremSetup t;
        t.episodes = 300;
        t.psc.gain = gain;
        const auto r = toy::run_theorem(t);
        REQUIRE(r.infeasible_steps == 0);
        const double g = gain * t.psc.dt;
        for (std::size_t k = 0; k + 1 < r.mean_psi.size(); ++k) {
            CAPTURE(k);
            const double bound = (1.0 - g) * r.mean_psi[k] + g * (1.0 - t.psc.epsilon) * r.alive[k];
            CHECK(r.mean_psi[k + 1] >= bound - 3.0 * (r.se[k] + r.se[k + 1]));
        }
        if (gain == 1.0) {
            // every step certified, yet the plain bound is violated by a wide margin
            const double lowest = *std::min_element(r.mean_psi.begin(), r.mean_psi.end());
            CHECK(lowest < 1.0 - t.psc.epsilon - 0.3);
        }
    }
}
