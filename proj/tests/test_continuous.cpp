#include "omdp/continuous.hpp"

#include <doctest.h>

#include <cmath>

using namespace omdp;

namespace {

ContinuousModelSpec stationary_spec() {
    ContinuousModelSpec s;
    s.offers = OfferDistribution::uniform(0.0, 1.0);
    s.lifetime = Lifetime::exponential(1.0);
    s.arrivals = PoissonArrivals{2.0};
    s.discount = DiscountFunction::constant(1.0);
    return s;
}

ContinuousModelSpec erlang_poisson() {
    ContinuousModelSpec s;
    s.offers = OfferDistribution::finite({10.0, 6.0, 2.0}, {0.3, 0.4, 0.3});
    s.lifetime = Lifetime::erlang(10, 1.0);
    s.arrivals = PoissonArrivals{0.3};
    s.discount = DiscountFunction::constant(1.0);
    return s;
}

ThresholdCurve sampled(const std::function<double(double)>& f, double t_max, std::size_t n) {
    ThresholdCurve c;
    for (std::size_t i = 0; i <= n; ++i) {
        const double t = t_max * double(i) / double(n);
        c.time.push_back(t);
        c.lambda.push_back(f(t));
    }
    return c;
}

}  // namespace

TEST_CASE("finite-horizon recursion with uniform offers") {
    const auto u = OfferDistribution::uniform(0.0, 1.0);
    const auto lam = finite_horizon_thresholds({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}, u);
    REQUIRE(lam.size() == 4);
    CHECK(lam[3] == 0.0);
    CHECK(std::abs(lam[2] - 0.5) <= 1e-9);
    CHECK(std::abs(lam[1] - 0.625) <= 1e-9);
    CHECK(std::abs(lam[0] - 0.6953125) <= 1e-9);
    CHECK(finite_horizon_thresholds({}, {1.0}, u) == std::vector<double>{0.0});
}

TEST_CASE("finite-horizon recursion scales with survival and discount") {
    const auto u = OfferDistribution::uniform(0.0, 1.0);
    // lambda^0 = alpha * E[max(0, beta_1 X)] with a single step.
    const auto lam = finite_horizon_thresholds({0.8}, {1.0, 0.5}, u);
    CHECK(lam[0] == doctest::Approx(0.8 * 0.25).epsilon(1e-10));
}

TEST_CASE("finite offer list uses exact tail sums") {
    const auto f = OfferDistribution::finite({10.0, 6.0, 2.0}, {0.3, 0.4, 0.3});
    CHECK(f.mean() == doctest::Approx(6.0));
    CHECK(f.expected_max(5.0, 1.0) == doctest::Approx(0.3 * 10 + 0.4 * 6 + 0.3 * 5));
    CHECK(f.excess(6.0) == doctest::Approx(0.3 * 4));
    CHECK_THROWS_AS(OfferDistribution::finite({2.0, 6.0}, {0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(OfferDistribution::finite({6.0, 2.0}, {0.5, 0.6}), std::invalid_argument);
}

TEST_CASE("custom offer CDF matches the closed form through quadrature") {
    const auto c = OfferDistribution::custom([](double x) { return x * x; }, 0.0, 1.0);
    // E[(X - c)^+] with density 2x: (2/3) - c + c^3/3.
    for (double t : {0.0, 0.3, 0.7}) CHECK(c.excess(t) == doctest::Approx(2.0 / 3.0 - t + t * t * t / 3.0).epsilon(1e-9));
}

TEST_CASE("periodic pattern limit solves the fixed point") {
    const auto u = OfferDistribution::uniform(0.0, 1.0);
    // gamma = 0.5 E[max(gamma, X)] = (1 + gamma^2) / 4.
    const auto r = infinite_horizon_limit({{1.0, 0.5}}, u);
    REQUIRE(r.gamma.size() == 1);
    CHECK(r.gamma[0] == doctest::Approx(2.0 - std::sqrt(3.0)).epsilon(1e-10));
    const auto t = infinite_horizon_by_truncation([](std::size_t) { return 1.0; },
                                                  [](std::size_t j) { return std::pow(0.5, double(j)); }, u);
    CHECK(t.gamma[0] == doctest::Approx(2.0 - std::sqrt(3.0)).epsilon(1e-8));
}

TEST_CASE("two-step pattern agrees with a long finite horizon") {
    const auto u = OfferDistribution::uniform(0.0, 2.0);
    const std::vector<PatternStep> pat{{0.9, 0.8}, {0.7, 0.95}};
    const auto r = infinite_horizon_limit(pat, u);
    std::vector<double> alphas, betas{1.0};
    for (int j = 0; j < 400; ++j) {
        alphas.push_back(pat[j % 2].alpha);
        betas.push_back(betas.back() * pat[j % 2].discount_ratio);
    }
    const auto lam = finite_horizon_thresholds(alphas, betas, u);
    CHECK(r.gamma[0] == doctest::Approx(lam[0]).epsilon(1e-9));
    CHECK(r.gamma[1] == doctest::Approx(lam[1] / betas[1]).epsilon(1e-9));
}

TEST_CASE("constant-rate ODE plateaus at the golden-section root") {
    const auto c = poisson_lambda_ode(stationary_spec(), 5.0, 0.05);
    const double target = (3.0 - std::sqrt(5.0)) / 2.0;
    CHECK(std::abs(c.at(0.0) - target) <= 1e-4);
    CHECK(std::abs(c.at(2.5) - target) <= 1e-4);
    CHECK(c.nonincreasing());
    CHECK(c.truncated);
}

TEST_CASE("renewal back-induction plateaus at the same root") {
    const auto c = renewal_lambda(stationary_spec(), 5.0, 0.01);
    CHECK(std::abs(c.at(0.0) - (3.0 - std::sqrt(5.0)) / 2.0) <= 1e-3);
}

TEST_CASE("ODE and renewal solutions agree for Poisson arrivals") {
    auto s = stationary_spec();
    s.lifetime = Lifetime::erlang(3, 1.5);
    s.discount = DiscountFunction::exponential(0.05);
    const double t_max = default_horizon(s.lifetime);
    const auto ode = poisson_lambda_ode(s, t_max, 0.05);
    const auto ren = renewal_lambda(s, t_max, 0.01);
    double worst = 0.0;
    for (double t = 0.0; t <= t_max; t += 0.1) worst = std::max(worst, std::abs(ode.at(t) - ren.at(t)));
    CHECK(worst <= 2e-3);
    CHECK_FALSE(ode.truncated);
}

TEST_CASE("Erlang lifetime yields a nonincreasing curve and ordered critical times") {
    const auto s = erlang_poisson();
    const auto c = poisson_lambda_ode(s, 25.0, 0.05);
    CHECK(c.nonincreasing());
    const auto ct = critical_times(c, {10.0, 6.0, 2.0});
    REQUIRE(ct.size() == 3);
    CHECK(ct[0] == 0.0);
    CHECK(ct[0] <= ct[1]);
    CHECK(ct[1] <= ct[2]);
    CHECK(std::isfinite(ct[2]));
    // Crossing is where the curve meets each value.
    CHECK(c.at(ct[1]) == doctest::Approx(6.0).epsilon(1e-4));
    CHECK(c.at(ct[2]) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("critical times of an exponential curve") {
    const auto c = sampled([](double t) { return std::exp(-t); }, 5.0, 50000);
    const auto ct = critical_times(c, {2.0, 0.5, 1e-6});
    CHECK(ct[0] == 0.0);
    CHECK(ct[1] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(ct[2] == kInfinity);
    CHECK_THROWS_AS(critical_times(c, {0.5, 2.0}), std::invalid_argument);
    const auto up = sampled([](double t) { return t; }, 1.0, 10);
    CHECK_THROWS_AS(critical_times(up, {0.5}), std::invalid_argument);
}

TEST_CASE("extreme hazard raises StiffnessError") {
    auto s = stationary_spec();
    s.lifetime = Lifetime::exponential(1e7);
    CHECK_THROWS_AS(poisson_lambda_ode(s, 1.0, 0.1), StiffnessError);
}

TEST_CASE("lifetime families") {
    CHECK(Lifetime::erlang(3, 2.0).mean() == doctest::Approx(1.5));
    CHECK(Lifetime::erlang(3, 2.0).ifr());
    CHECK(Lifetime::weibull(2.0, 1.0).ifr());
    CHECK_FALSE(Lifetime::weibull(0.5, 1.0).ifr());
    CHECK(Lifetime::exponential(2.0).hazard(3.0) == doctest::Approx(2.0));
    CHECK(Lifetime::uniform(0.0, 2.0).hazard(1.0) == doctest::Approx(1.0));
    const auto e = Lifetime::erlang(4, 1.0);
    CHECK(e.survival(e.survival_quantile(1e-6)) == doctest::Approx(1e-6).epsilon(1e-6));
    CHECK(e.survival(2.0) == doctest::Approx(std::exp(-2.0) * (1 + 2 + 2 + 8.0 / 6.0)));
}

TEST_CASE("fixed instants derive survival ratios from the lifetime") {
    ContinuousModelSpec s;
    s.lifetime = Lifetime::exponential(0.5);
    s.arrivals = FixedInstants{{0.0, 1.0, 3.0}, {}};
    const auto a = s.survival_alphas();
    REQUIRE(a.size() == 2);
    CHECK(a[0] == doctest::Approx(std::exp(-0.5)));
    CHECK(a[1] == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("spec validation") {
    auto s = stationary_spec();
    CHECK_NOTHROW(s.validate());
    s.arrivals = PoissonArrivals{-1.0};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = stationary_spec();
    s.arrivals = FixedInstants{{0.0, 2.0, 1.0}, {}};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = stationary_spec();
    s.discount = DiscountFunction::constant(1.5);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
