#include "omdp/simulator.hpp"
#include "omdp/solver.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace omdp;
using namespace omdp::testing;

namespace {

double sup_diff(const ValueFunction& a, const ValueFunction& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
    return d;
}

/// One live state that survives each epoch with probability p and sees a
/// single organ type with probability q.
DiscreteModelSpec one_state(double beta, double p, double q, double r, double R) {
    DiscreteModelSpec s;
    s.variant = Variant::Base;
    s.discount = beta;
    s.patient = {2, 1};
    s.organ = {2, 1};
    s.transition = {Matrix{{p, 1.0 - p}, {0.0, 1.0}}};
    s.offer_prob = Matrix{{q, 1.0 - q}, {0.0, 1.0}};
    s.wait_reward = {{r, 0.0}};
    s.transplant_reward = Matrix{{R, 0.0}, {0.0, 0.0}};
    return s;
}

AnalogGridSpec analog_grid() {
    AnalogGridSpec g;
    g.h_cells = 6;
    g.k_cells = 5;
    g.bonus = 20.0;
    g.discount = 0.95;
    g.transition_cdf = [](double x, double h) { return 0.5 * std::erfc(-(x - h + 0.03) / (0.08 * std::sqrt(2.0))); };
    g.offer_cdf = [](double k) { return std::clamp(k, 0.0, 1.0); };
    g.success_prob = [](double h, double k) { return 0.4 + 0.3 * h + 0.3 * k; };
    return g;
}

}  // namespace

TEST_CASE("value iteration matches brute-force enumeration on random 3x2 specs") {
    Gen g(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = validated(random_base_spec(g, 4, 3, unif(g, 0.5, 0.95), false));
        const auto vi = solve_value_iteration(m, {1e-11});
        const auto bf = brute_force_optimal(m);
        REQUIRE(vi.values.converged);
        CHECK(sup_diff(vi.values, bf.values) <= 1e-7);
        CHECK(bf.policies == 64);
    }
}

TEST_CASE("single live state has the closed-form value") {
    const double beta = 0.9, p = 0.8, q = 0.4, r = 1.0, R = 10.0;
    const auto sol = solve_value_iteration(validated(one_state(beta, p, q, r, R)), {1e-12});
    // Accepting is optimal here: W = (r + beta p q R) / (1 - beta p (1 - q)).
    const double W = (r + beta * p * q * R) / (1.0 - beta * p * (1.0 - q));
    REQUIRE(W < R);
    CHECK(sol.values.at(0, 0, 1) == doctest::Approx(W).epsilon(1e-10));
    CHECK(sol.values.at(0, 0, 0) == doctest::Approx(R).epsilon(1e-10));
    CHECK(sol.policy.at(0, 0, 0) == Action::Transplant);
    CHECK(sol.values.at(0, 1, 0) == 0.0);
    CHECK(sol.values.at(0, 1, 1) == 0.0);
}

TEST_CASE("dominant transplant reward is accepted at every offer") {
    Gen g(9);
    auto s = random_base_spec(g, 5, 4, 0.9, false);
    for (std::size_t i = 0; i + 1 < 5; ++i)
        for (std::size_t k = 0; k + 1 < 4; ++k) s.transplant_reward(i, k) = 1e4;
    const auto sol = solve_value_iteration(validated(s));
    for (std::size_t i = 0; i + 1 < 5; ++i) {
        for (std::size_t k = 0; k + 1 < 4; ++k) CHECK(sol.policy.at(0, i, k) == Action::Transplant);
        CHECK(sol.policy.at(0, i, 3) == Action::Wait);
    }
}

TEST_CASE("exact ties follow the tie-break rule") {
    // W = r / (1 - beta) = 2 equals R = 2 at the offer cell.
    const auto m = validated(one_state(0.5, 1.0, 0.5, 1.0, 2.0));
    const auto wait = solve_value_iteration(m, {1e-13, 100000, TieBreak::PreferWait});
    const auto take = solve_value_iteration(m, {1e-13, 100000, TieBreak::PreferTransplant});
    CHECK(wait.policy.at(0, 0, 0) == Action::Wait);
    CHECK(take.policy.at(0, 0, 0) == Action::Transplant);
    CHECK(wait.values.at(0, 0, 0) == doctest::Approx(2.0));
}

TEST_CASE("iteration cap reports non-convergence") {
    Gen g(1);
    const auto m = validated(random_base_spec(g, 4, 3, 0.99, false));
    const auto sol = solve_value_iteration(m, {1e-12, 5});
    CHECK_FALSE(sol.values.converged);
    CHECK(sol.values.iterations == 5);
}

TEST_CASE("solver options are checked") {
    CHECK_THROWS_AS((SolveOptions{0.0}).check(), std::invalid_argument);
    CHECK_THROWS_AS((SolveOptions{1e-8, 0}).check(), std::invalid_argument);
}

TEST_CASE("death-only model has zero values") {
    DiscreteModelSpec s = one_state(0.9, 0.0, 0.5, 0.0, 0.0);
    const auto sol = solve_value_iteration(validated(s));
    for (double v : sol.values.values) CHECK(v == 0.0);
}

TEST_CASE("value iteration is a fixed point of the Bellman backup") {
    Gen g(77);
    const auto m = validated(random_base_spec(g, 5, 4, 0.9, true));
    const auto sol = solve_value_iteration(m, {1e-12});
    CHECK(sup_diff(bellman_backup(m, sol.values), sol.values) <= 1e-11);
    const auto exact = evaluate_policy_exact(m, sol.policy);
    CHECK(sup_diff(exact, sol.values) <= 1e-9);
}

TEST_CASE("living-donor chain takes the living organ in the sickest states") {
    Gen g(4);
    const auto s = random_living_donor_spec(g, 6, 0.9);
    const auto sol = solve_living_donor(validated(s), {1e-12});
    CHECK(sol.values.layout.organ.count == 1);
    // Bellman equation at every live state.
    for (std::size_t h = 0; h + 1 < 6; ++h) {
        double cont = s.wait_reward[0][h];
        for (std::size_t j = 0; j < 6; ++j) cont += 0.9 * s.transition[0](h, j) * sol.values.at(0, j, 0);
        CHECK(sol.values.at(0, h, 0) == doctest::Approx(std::max(cont, s.living_donor->reward[h])).epsilon(1e-9));
    }
}

TEST_CASE("analog discretization is a valid model with organ thresholds per health cell") {
    const auto g = analog_grid();
    const auto spec = discretize_analog(g);
    CHECK(spec.patient.count == 7);
    CHECK(spec.organ.count == 6);
    const auto m = validated(spec);
    for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 7; ++j) sum += spec.transition[0](i, j);
        CHECK(sum == doctest::Approx(1.0));
        CHECK(spec.transplant_reward(i, 0) == doctest::Approx(20.0 * (0.4 + 0.3 * (i + 0.5) / 6 + 0.3 * 0.1)));
    }
    const auto sol = solve_value_iteration(m, {1e-11});
    const auto limit = analog_control_limit(sol.policy, g);
    REQUIRE(limit.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(limit[i] >= 0.0);
        CHECK(limit[i] <= 1.0);
        // Upward closed: every organ cell at or above the limit is accepted.
        for (std::size_t j = 0; j < 5; ++j) {
            const bool above = double(j) * 0.2 >= limit[i] - 1e-12;
            CHECK((sol.policy.at(0, i, j) == Action::Transplant) == above);
        }
    }
}

TEST_CASE("analog discretization rejects empty grids") {
    auto g = analog_grid();
    g.h_cells = 0;
    CHECK_THROWS_AS(discretize_analog(g), std::invalid_argument);
}
