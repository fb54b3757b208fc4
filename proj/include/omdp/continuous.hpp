#pragma once

#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace omdp {

using Rng = std::mt19937_64;

constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// i.i.d. offer values on a bounded positive support.
class OfferDistribution {
public:
    enum class Kind { Uniform, Finite, Custom };

    static OfferDistribution uniform(double low, double high);
    /// values strictly decreasing and positive, probabilities summing to 1.
    static OfferDistribution finite(std::vector<double> values, std::vector<double> probs);
    /// Continuous law given by its CDF on [low, high]; tail integrals use
    /// adaptive quadrature.
    static OfferDistribution custom(std::function<double(double)> cdf, double low, double high);

    Kind kind() const { return kind_; }
    double lower() const { return low_; }
    double upper() const { return high_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& probs() const { return probs_; }

    double cdf(double x) const;
    double mean() const;
    /// E[(X - c)^+] = integral_c^inf (1 - F(x)) dx.
    double excess(double c) const;
    /// E[max(c, scale * X)] for scale > 0.
    double expected_max(double c, double scale) const;
    double sample(Rng& rng) const;

private:
    Kind kind_ = Kind::Uniform;
    double low_ = 0.0, high_ = 1.0;
    std::vector<double> values_, probs_;
    std::function<double(double)> cdf_;
};

/// Lifetime law G of the remaining lifetime tau.
class Lifetime {
public:
    enum class Kind { Exponential, Erlang, Weibull, Uniform };

    static Lifetime exponential(double rate);
    static Lifetime erlang(unsigned shape, double rate);
    static Lifetime weibull(double shape, double scale);
    static Lifetime uniform(double low, double high);

    Kind kind() const { return kind_; }
    double survival(double t) const;
    double density(double t) const;
    /// Failure rate g / (1 - G); infinite past the support.
    double hazard(double t) const;
    /// Increasing failure rate, known analytically per family.
    bool ifr() const;
    double mean() const;
    /// Smallest t with survival(t) <= eps.
    double survival_quantile(double eps) const;
    double sample(Rng& rng) const;

    std::string describe() const;
    unsigned shape_k() const { return shape_k_; }
    double a() const { return a_; }
    double b() const { return b_; }

private:
    Kind kind_ = Kind::Exponential;
    unsigned shape_k_ = 1;
    double a_ = 1.0, b_ = 0.0;
};

/// Interarrival law H of a renewal arrival process.
class Interarrival {
public:
    enum class Kind { Deterministic, Exponential, Erlang, Uniform };

    static Interarrival deterministic(double gap);
    static Interarrival exponential(double rate);
    static Interarrival erlang(unsigned shape, double rate);
    static Interarrival uniform(double low, double high);

    Kind kind() const { return kind_; }
    double gap() const { return a_; }
    double density(double s) const;
    double sample(Rng& rng) const;
    unsigned shape_k() const { return shape_k_; }
    double a() const { return a_; }
    double b() const { return b_; }

private:
    Kind kind_ = Kind::Exponential;
    unsigned shape_k_ = 1;
    double a_ = 1.0, b_ = 0.0;
};

/// Nonincreasing discount function beta(t) with values in (0,1].
struct DiscountFunction {
    std::string family = "constant";
    double param = 1.0;

    static DiscountFunction constant(double value) { return {"constant", value}; }
    static DiscountFunction exponential(double rate) { return {"exponential", rate}; }
    double operator()(double t) const;
};

/// Arrival intensity mu(t) for a nonhomogeneous Poisson process.
struct Intensity {
    std::string family = "constant";  // constant | linear | sinusoid
    std::vector<double> params;

    double operator()(double t) const;
};

struct FixedInstants {
    std::vector<double> times;   // U_0 < U_1 < ... < U_N
    std::vector<double> alphas;  // alpha_1..alpha_N; empty: derived from the lifetime
};
struct RenewalArrivals {
    Interarrival interarrival;
};
struct PoissonArrivals {
    double rate = 1.0;
};
struct NonhomogeneousPoissonArrivals {
    Intensity intensity;
    double bound = 0.0;  // thinning envelope, mu(t) <= bound
};

using Arrivals = std::variant<FixedInstants, RenewalArrivals, PoissonArrivals, NonhomogeneousPoissonArrivals>;

struct ContinuousModelSpec {
    OfferDistribution offers = OfferDistribution::uniform(0.0, 1.0);
    Lifetime lifetime = Lifetime::exponential(1.0);
    Arrivals arrivals = PoissonArrivals{};
    DiscountFunction discount;

    /// Throws std::invalid_argument on the first violated invariant.
    void validate() const;
    /// alpha_{j+1} = P(tau > U_{j+1} | tau > U_j) for fixed instants.
    std::vector<double> survival_alphas() const;
};

class StiffnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ThresholdCurve {
    std::vector<double> time;
    std::vector<double> lambda;
    bool truncated = false;  // 1 - G(T_max) > 1e-6

    /// Linear interpolation; 0 past the last grid point.
    double at(double t) const;
    bool nonincreasing(double slack = 1e-9) const;
};

/// lambda_N^j for j = 0..N given alpha_1..alpha_N and beta_0..beta_N.
/// lambda_N^N = 0; accept the j-th offer iff k_j > lambda_N^j / beta_j.
std::vector<double> finite_horizon_thresholds(const std::vector<double>& alphas, const std::vector<double>& betas,
                                              const OfferDistribution& offers);
std::vector<double> finite_horizon_thresholds(const ContinuousModelSpec& spec);

/// One step of a repeating instant pattern: survival to the next instant and
/// the discount ratio beta(U_{j+1}) / beta(U_j).
struct PatternStep {
    double alpha = 1.0;
    double discount_ratio = 1.0;
};

struct InfiniteHorizonResult {
    std::vector<double> gamma;  // acceptance threshold per pattern position
    double residual = 0.0;      // |gamma_0 - Phi(gamma_0)|
    bool truncation_path = false;
    std::size_t horizon = 0;    // depth used by the truncation path
};

/// Limit thresholds gamma_j = lim lambda_N^j / beta_j for a periodic pattern.
/// Solves gamma = Phi(gamma) for the period map by bisection; Phi is convex
/// and nondecreasing, so the smallest root is the monotone limit from 0.
InfiniteHorizonResult infinite_horizon_limit(const std::vector<PatternStep>& pattern, const OfferDistribution& offers,
                                             double tol = 1e-12);

/// Non-periodic data: deepen the horizon until lambda_N^0 / beta_0 moves by
/// less than tol.
InfiniteHorizonResult infinite_horizon_by_truncation(const std::function<double(std::size_t)>& alpha,
                                                     const std::function<double(std::size_t)>& beta,
                                                     const OfferDistribution& offers, double tol = 1e-10,
                                                     std::size_t max_horizon = 1 << 20);

// Both curve solvers start from lambda = 0 at T_end = t_max + s, where s is the
// smallest lag with Gbar(s | t_max) <= 1e-6, and report the curve on [0, t_max]
// only. Without the extra lag the boundary value would drag lambda(t) to zero
// near t_max and create spurious critical times.

/// Backward solution of lambda(t) = int Gbar(s|t) E[max(beta(t+s) X, lambda(t+s))] dH(s)
/// on a grid of spacing about `step` (trapezoid rule).
ThresholdCurve renewal_lambda(const ContinuousModelSpec& spec, double t_max, double step);

/// Backward RK4 integration of lambda' = r lambda - beta mu int_{lambda/beta} (1-F).
/// Steps are halved until the step-doubling error estimate is at most 1e-8.
/// Throws StiffnessError when r exceeds 1e6 or the step underflows.
ThresholdCurve poisson_lambda_ode(const ContinuousModelSpec& spec, double t_max, double step);

/// T_max such that 1 - G(T_max) <= 1e-6.
double default_horizon(const Lifetime& lifetime);

/// Smallest s with Gbar(s | t) <= eps; 0 when survival at t is already 0.
double conditional_tail(const Lifetime& lifetime, double t, double eps);

/// t_i = max{0, lambda^{-1}(x_i)} if inf lambda < x_i, otherwise +inf.
/// `values` must be strictly decreasing; the curve must be nonincreasing.
std::vector<double> critical_times(const ThresholdCurve& curve, const std::vector<double>& values);

}  // namespace omdp
