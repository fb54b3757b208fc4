#include "omdp/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace omdp {

namespace {

constexpr double kQuadratureTol = 1e-10;
constexpr double kStiffHazard = 1e6;
constexpr double kOdeStepError = 1e-8;
constexpr double kSurvivalGuard = 1e-300;
constexpr double kTailSurvival = 1e-6;

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (b <= a) return 0.0;
    // Split into a few panels first so narrow features are not skipped.
    constexpr int panels = 16;
    double total = 0.0;
    const double w = (b - a) / panels;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * w, hi = i + 1 == panels ? b : lo + w;
        const double fa = f(lo), fm = f(0.5 * (lo + hi)), fb = f(hi);
        total += adaptive_simpson(f, lo, hi, fa, fm, fb, simpson(lo, hi, fa, fm, fb), tol / panels, 40);
    }
    return total;
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double erlang_survival(unsigned k, double rate, double t) {
    if (t <= 0.0) return 1.0;
    const double x = rate * t;
    double term = 1.0, sum = 1.0;
    for (unsigned n = 1; n < k; ++n) {
        term *= x / n;
        sum += term;
    }
    return std::exp(-x) * sum;
}

double erlang_density(unsigned k, double rate, double t) {
    if (t < 0.0) return 0.0;
    if (t == 0.0) return k == 1 ? rate : 0.0;
    const double x = rate * t;
    return rate * std::exp((k - 1) * std::log(x) - x - std::lgamma(double(k)));
}

}  // namespace

// ---------------------------------------------------------------------------

OfferDistribution OfferDistribution::uniform(double low, double high) {
    if (!std::isfinite(high)) throw std::invalid_argument("unbounded offer support");
    if (!(low >= 0.0) || !(high > low)) throw std::invalid_argument("uniform offers need 0 <= low < high");
    OfferDistribution d;
    d.kind_ = Kind::Uniform;
    d.low_ = low;
    d.high_ = high;
    return d;
}

OfferDistribution OfferDistribution::finite(std::vector<double> values, std::vector<double> probs) {
    if (values.empty() || values.size() != probs.size())
        throw std::invalid_argument("finite offers need matching nonempty values and probabilities");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw std::invalid_argument("unbounded offer support");
        if (!(values[i] > 0.0)) throw std::invalid_argument("offer values must be positive");
        if (i && !(values[i] < values[i - 1])) throw std::invalid_argument("offer values must be strictly decreasing");
        if (!(probs[i] >= 0.0)) throw std::invalid_argument("offer probabilities must be nonnegative");
        sum += probs[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("offer probabilities must sum to 1");
    OfferDistribution d;
    d.kind_ = Kind::Finite;
    d.low_ = values.back();
    d.high_ = values.front();
    d.values_ = std::move(values);
    d.probs_ = std::move(probs);
    return d;
}

OfferDistribution OfferDistribution::custom(std::function<double(double)> cdf, double low, double high) {
    if (!std::isfinite(high)) throw std::invalid_argument("unbounded offer support");
    if (!(low >= 0.0) || !(high > low)) throw std::invalid_argument("custom offers need 0 <= low < high");
    OfferDistribution d;
    d.kind_ = Kind::Custom;
    d.low_ = low;
    d.high_ = high;
    d.cdf_ = std::move(cdf);
    return d;
}

double OfferDistribution::cdf(double x) const {
    switch (kind_) {
        case Kind::Uniform: return std::clamp((x - low_) / (high_ - low_), 0.0, 1.0);
        case Kind::Finite: {
            double acc = 0.0;
            for (std::size_t i = 0; i < values_.size(); ++i)
                if (values_[i] <= x) acc += probs_[i];
            return std::min(acc, 1.0);
        }
        case Kind::Custom:
            if (x < low_) return 0.0;
            if (x >= high_) return 1.0;
            return std::clamp(cdf_(x), 0.0, 1.0);
    }
    return 0.0;
}

double OfferDistribution::mean() const { return excess(0.0); }

double OfferDistribution::excess(double c) const {
    switch (kind_) {
        case Kind::Uniform: {
            if (c <= low_) return 0.5 * (low_ + high_) - c;
            if (c >= high_) return 0.0;
            return 0.5 * (high_ - c) * (high_ - c) / (high_ - low_);
        }
        case Kind::Finite: {
            double acc = 0.0;
            for (std::size_t i = 0; i < values_.size(); ++i)
                if (values_[i] > c) acc += probs_[i] * (values_[i] - c);
            return acc;
        }
        case Kind::Custom: {
            if (c >= high_) return 0.0;
            const double start = std::max(c, low_);
            const double below = std::max(0.0, low_ - c);
            return below + integrate([this](double x) { return 1.0 - cdf(x); }, start, high_, kQuadratureTol);
        }
    }
    return 0.0;
}

double OfferDistribution::expected_max(double c, double scale) const { return c + scale * excess(c / scale); }

double OfferDistribution::sample(Rng& rng) const {
    const double u = uniform01(rng);
    switch (kind_) {
        case Kind::Uniform: return low_ + u * (high_ - low_);
        case Kind::Finite: {
            double acc = 0.0;
            for (std::size_t i = values_.size(); i-- > 0;) {
                acc += probs_[i];
                if (u < acc) return values_[i];
            }
            return values_.front();
        }
        case Kind::Custom: {
            double lo = low_, hi = high_;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (cdf(mid) < u ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

Lifetime Lifetime::exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential lifetime needs a positive rate");
    Lifetime l;
    l.kind_ = Kind::Exponential;
    l.a_ = rate;
    return l;
}

Lifetime Lifetime::erlang(unsigned shape, double rate) {
    if (shape < 1 || !(rate > 0.0)) throw std::invalid_argument("erlang lifetime needs shape >= 1 and a positive rate");
    Lifetime l;
    l.kind_ = Kind::Erlang;
    l.shape_k_ = shape;
    l.a_ = rate;
    return l;
}

Lifetime Lifetime::weibull(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) throw std::invalid_argument("weibull lifetime needs positive shape and scale");
    Lifetime l;
    l.kind_ = Kind::Weibull;
    l.a_ = shape;
    l.b_ = scale;
    return l;
}

Lifetime Lifetime::uniform(double low, double high) {
    if (!(low >= 0.0) || !(high > low)) throw std::invalid_argument("uniform lifetime needs 0 <= low < high");
    Lifetime l;
    l.kind_ = Kind::Uniform;
    l.a_ = low;
    l.b_ = high;
    return l;
}

double Lifetime::survival(double t) const {
    if (t <= 0.0) return 1.0;
    switch (kind_) {
        case Kind::Exponential: return std::exp(-a_ * t);
        case Kind::Erlang: return erlang_survival(shape_k_, a_, t);
        case Kind::Weibull: return std::exp(-std::pow(t / b_, a_));
        case Kind::Uniform: return std::clamp((b_ - t) / (b_ - a_), 0.0, 1.0);
    }
    return 0.0;
}

double Lifetime::density(double t) const {
    if (t < 0.0) return 0.0;
    switch (kind_) {
        case Kind::Exponential: return a_ * std::exp(-a_ * t);
        case Kind::Erlang: return erlang_density(shape_k_, a_, t);
        case Kind::Weibull:
            if (t == 0.0) return a_ < 1.0 ? kInfinity : (a_ == 1.0 ? 1.0 / b_ : 0.0);
            return a_ / b_ * std::pow(t / b_, a_ - 1.0) * std::exp(-std::pow(t / b_, a_));
        case Kind::Uniform: return (t >= a_ && t < b_) ? 1.0 / (b_ - a_) : 0.0;
    }
    return 0.0;
}

double Lifetime::hazard(double t) const {
    switch (kind_) {
        case Kind::Exponential: return a_;
        case Kind::Erlang: {
            if (t <= 0.0) return shape_k_ == 1 ? a_ : 0.0;
            // rate * x^{k-1}/(k-1)! / sum_{n<k} x^n/n!, evaluated from the top term down.
            const double x = a_ * t;
            double ratio = 1.0, sum = 1.0;
            for (unsigned n = shape_k_ - 1; n >= 1; --n) {
                ratio *= double(n) / x;
                sum += ratio;
            }
            return a_ / sum;
        }
        case Kind::Weibull:
            if (t <= 0.0) return a_ < 1.0 ? kInfinity : (a_ == 1.0 ? 1.0 / b_ : 0.0);
            return a_ / b_ * std::pow(t / b_, a_ - 1.0);
        case Kind::Uniform:
            if (t < a_) return 0.0;
            if (t >= b_) return kInfinity;
            return 1.0 / (b_ - t);
    }
    return 0.0;
}

bool Lifetime::ifr() const {
    switch (kind_) {
        case Kind::Exponential:
        case Kind::Erlang:
        case Kind::Uniform: return true;
        case Kind::Weibull: return a_ >= 1.0;
    }
    return false;
}

double Lifetime::mean() const {
    switch (kind_) {
        case Kind::Exponential: return 1.0 / a_;
        case Kind::Erlang: return shape_k_ / a_;
        case Kind::Weibull: return b_ * std::tgamma(1.0 + 1.0 / a_);
        case Kind::Uniform: return 0.5 * (a_ + b_);
    }
    return 0.0;
}

double Lifetime::survival_quantile(double eps) const {
    double hi = std::max(1.0, mean());
    while (survival(hi) > eps) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (survival(mid) > eps ? lo : hi) = mid;
    }
    return hi;
}

double Lifetime::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::Exponential: return std::exponential_distribution<double>(a_)(rng);
        case Kind::Erlang: return std::gamma_distribution<double>(double(shape_k_), 1.0 / a_)(rng);
        case Kind::Weibull: return std::weibull_distribution<double>(a_, b_)(rng);
        case Kind::Uniform: return a_ + uniform01(rng) * (b_ - a_);
    }
    return 0.0;
}

std::string Lifetime::describe() const {
    switch (kind_) {
        case Kind::Exponential: return "exponential(rate=" + std::to_string(a_) + ")";
        case Kind::Erlang: return "erlang(shape=" + std::to_string(shape_k_) + ", rate=" + std::to_string(a_) + ")";
        case Kind::Weibull: return "weibull(shape=" + std::to_string(a_) + ", scale=" + std::to_string(b_) + ")";
        case Kind::Uniform: return "uniform(" + std::to_string(a_) + ", " + std::to_string(b_) + ")";
    }
    return "?";
}

// ---------------------------------------------------------------------------

Interarrival Interarrival::deterministic(double gap) {
    if (!(gap > 0.0)) throw std::invalid_argument("deterministic interarrival needs a positive gap");
    Interarrival h;
    h.kind_ = Kind::Deterministic;
    h.a_ = gap;
    return h;
}

Interarrival Interarrival::exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential interarrival needs a positive rate");
    Interarrival h;
    h.kind_ = Kind::Exponential;
    h.a_ = rate;
    return h;
}

Interarrival Interarrival::erlang(unsigned shape, double rate) {
    if (shape < 1 || !(rate > 0.0)) throw std::invalid_argument("erlang interarrival needs shape >= 1 and a positive rate");
    Interarrival h;
    h.kind_ = Kind::Erlang;
    h.shape_k_ = shape;
    h.a_ = rate;
    return h;
}

Interarrival Interarrival::uniform(double low, double high) {
    if (!(low >= 0.0) || !(high > low)) throw std::invalid_argument("uniform interarrival needs 0 <= low < high");
    Interarrival h;
    h.kind_ = Kind::Uniform;
    h.a_ = low;
    h.b_ = high;
    return h;
}

double Interarrival::density(double s) const {
    switch (kind_) {
        case Kind::Deterministic: return 0.0;
        case Kind::Exponential: return s < 0.0 ? 0.0 : a_ * std::exp(-a_ * s);
        case Kind::Erlang: return erlang_density(shape_k_, a_, s);
        case Kind::Uniform: return (s >= a_ && s <= b_) ? 1.0 / (b_ - a_) : 0.0;
    }
    return 0.0;
}

double Interarrival::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::Deterministic: return a_;
        case Kind::Exponential: return std::exponential_distribution<double>(a_)(rng);
        case Kind::Erlang: return std::gamma_distribution<double>(double(shape_k_), 1.0 / a_)(rng);
        case Kind::Uniform: return a_ + uniform01(rng) * (b_ - a_);
    }
    return 0.0;
}

double DiscountFunction::operator()(double t) const {
    if (family == "constant") return param;
    if (family == "exponential") return std::exp(-param * t);
    throw std::invalid_argument("unknown discount family '" + family + "'");
}

double Intensity::operator()(double t) const {
    auto p = [&](std::size_t i) { return i < params.size() ? params[i] : 0.0; };
    if (family == "constant") return std::max(0.0, p(0));
    if (family == "linear") return std::max(0.0, p(0) + p(1) * t);
    if (family == "sinusoid") return std::max(0.0, p(0) + p(1) * std::sin(p(2) * t));
    throw std::invalid_argument("unknown intensity family '" + family + "'");
}

// ---------------------------------------------------------------------------

void ContinuousModelSpec::validate() const {
    if (discount.family == "constant") {
        if (!(discount.param > 0.0 && discount.param <= 1.0)) throw std::invalid_argument("discount value must lie in (0,1]");
    } else if (discount.family == "exponential") {
        if (!(discount.param >= 0.0)) throw std::invalid_argument("discount rate must be nonnegative");
    } else {
        throw std::invalid_argument("unknown discount family '" + discount.family + "'");
    }
    if (const auto* fixed = std::get_if<FixedInstants>(&arrivals)) {
        if (fixed->times.empty()) throw std::invalid_argument("fixed instants need at least U_0");
        for (std::size_t i = 1; i < fixed->times.size(); ++i)
            if (!(fixed->times[i] > fixed->times[i - 1])) throw std::invalid_argument("fixed instants must be increasing");
        if (!fixed->alphas.empty()) {
            if (fixed->alphas.size() + 1 != fixed->times.size())
                throw std::invalid_argument("fixed instants need one survival alpha per gap");
            for (double a : fixed->alphas)
                if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("survival alphas must lie in [0,1]");
        }
    } else if (const auto* p = std::get_if<PoissonArrivals>(&arrivals)) {
        if (!(p->rate >= 0.0)) throw std::invalid_argument("poisson rate must be nonnegative");
    } else if (const auto* nh = std::get_if<NonhomogeneousPoissonArrivals>(&arrivals)) {
        (void)nh->intensity(0.0);
    }
}

std::vector<double> ContinuousModelSpec::survival_alphas() const {
    const auto* fixed = std::get_if<FixedInstants>(&arrivals);
    if (!fixed) throw std::invalid_argument("survival alphas are defined for fixed arrival instants");
    if (!fixed->alphas.empty()) return fixed->alphas;
    std::vector<double> alphas;
    for (std::size_t j = 1; j < fixed->times.size(); ++j) {
        const double prev = lifetime.survival(fixed->times[j - 1]);
        alphas.push_back(prev < kSurvivalGuard ? 0.0 : lifetime.survival(fixed->times[j]) / prev);
    }
    return alphas;
}

double ThresholdCurve::at(double t) const {
    if (time.empty() || t > time.back()) return 0.0;
    if (t <= time.front()) return lambda.front();
    const auto it = std::upper_bound(time.begin(), time.end(), t);
    const std::size_t i = std::size_t(it - time.begin()) - 1;
    if (i + 1 >= time.size()) return lambda.back();
    const double w = (t - time[i]) / (time[i + 1] - time[i]);
    return lambda[i] + w * (lambda[i + 1] - lambda[i]);
}

bool ThresholdCurve::nonincreasing(double slack) const {
    for (std::size_t i = 1; i < lambda.size(); ++i)
        if (lambda[i] > lambda[i - 1] + slack) return false;
    return true;
}

std::vector<double> finite_horizon_thresholds(const std::vector<double>& alphas, const std::vector<double>& betas,
                                              const OfferDistribution& offers) {
    if (betas.size() != alphas.size() + 1) throw std::invalid_argument("need beta_0..beta_N and alpha_1..alpha_N");
    const std::size_t N = alphas.size();
    std::vector<double> lambda(N + 1, 0.0);
    for (std::size_t j = N; j-- > 0;)
        lambda[j] = alphas[j] * offers.expected_max(lambda[j + 1], betas[j + 1]);
    return lambda;
}

std::vector<double> finite_horizon_thresholds(const ContinuousModelSpec& spec) {
    spec.validate();
    const auto* fixed = std::get_if<FixedInstants>(&spec.arrivals);
    if (!fixed) throw std::invalid_argument("finite-horizon thresholds need fixed arrival instants");
    std::vector<double> betas;
    for (double u : fixed->times) betas.push_back(spec.discount(u));
    return finite_horizon_thresholds(spec.survival_alphas(), betas, spec.offers);
}

InfiniteHorizonResult infinite_horizon_limit(const std::vector<PatternStep>& pattern, const OfferDistribution& offers,
                                             double tol) {
    if (pattern.empty()) throw std::invalid_argument("pattern must contain at least one step");
    for (const auto& s : pattern)
        if (!(s.alpha >= 0.0 && s.alpha <= 1.0) || !(s.discount_ratio > 0.0 && s.discount_ratio <= 1.0))
            throw std::invalid_argument("pattern needs alpha in [0,1] and discount ratio in (0,1]");
    const std::size_t P = pattern.size();
    // gamma_j = alpha_{j+1} delta_{j+1} E[max(gamma_{j+1}, X)]; pattern[j] holds step j -> j+1.
    auto sweep = [&](double gamma0) {
        std::vector<double> g(P + 1);
        g[P] = gamma0;
        for (std::size_t j = P; j-- > 0;)
            g[j] = pattern[j].alpha * pattern[j].discount_ratio * offers.expected_max(g[j + 1], 1.0);
        return g;
    };
    auto gap = [&](double x) { return sweep(x)[0] - x; };

    double lo = 0.0, hi = offers.upper();
    InfiniteHorizonResult res;
    if (gap(lo) <= tol) {
        hi = lo;
    } else {
        for (int it = 0; it < 300 && hi - lo > 0.0; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (gap(mid) > 0.0 ? lo : hi) = mid;
            if (std::abs(gap(hi)) <= tol && hi - lo <= tol) break;
        }
    }
    const auto g = sweep(hi);
    res.gamma.assign(g.begin(), g.end() - 1);
    res.residual = std::abs(g[0] - hi);
    return res;
}

InfiniteHorizonResult infinite_horizon_by_truncation(const std::function<double(std::size_t)>& alpha,
                                                     const std::function<double(std::size_t)>& beta,
                                                     const OfferDistribution& offers, double tol,
                                                     std::size_t max_horizon) {
    InfiniteHorizonResult res;
    res.truncation_path = true;
    double prev = -1.0;
    for (std::size_t N = 16; N <= max_horizon; N *= 2) {
        std::vector<double> alphas(N), betas(N + 1);
        for (std::size_t j = 0; j < N; ++j) alphas[j] = alpha(j + 1);
        for (std::size_t j = 0; j <= N; ++j) betas[j] = beta(j);
        const double g0 = finite_horizon_thresholds(alphas, betas, offers)[0] / betas[0];
        res.horizon = N;
        res.residual = std::abs(g0 - prev);
        res.gamma = {g0};
        if (res.residual <= tol) return res;
        prev = g0;
    }
    return res;
}

double default_horizon(const Lifetime& lifetime) { return lifetime.survival_quantile(1e-6); }

double conditional_tail(const Lifetime& lifetime, double t, double eps) {
    const double base = lifetime.survival(t);
    if (!(base > 0.0)) return 0.0;
    auto done = [&](double s) { return lifetime.survival(t + s) <= eps * base; };
    double hi = std::max(1e-3, 0.25 * lifetime.mean());
    for (int i = 0; i < 200 && !done(hi); ++i) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 100 && hi - lo > 1e-9 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (done(mid) ? hi : lo) = mid;
    }
    return hi;
}

namespace {

/// Grid of spacing ~step covering [0, t_max] plus the conditional-survival
/// tail past t_max; `reported` is the index of t_max.
struct SolveGrid {
    double h = 0.0;
    std::size_t reported = 0;
    std::size_t total = 0;
};

SolveGrid make_grid(const Lifetime& lifetime, double t_max, double step) {
    SolveGrid g;
    g.reported = std::max<std::size_t>(1, std::size_t(std::llround(t_max / step)));
    g.h = t_max / double(g.reported);
    const double tail = conditional_tail(lifetime, t_max, kTailSurvival);
    g.total = g.reported + std::size_t(std::ceil(tail / g.h));
    return g;
}

void clip(ThresholdCurve& curve, std::size_t reported) {
    curve.time.resize(reported + 1);
    curve.lambda.resize(reported + 1);
}

}  // namespace

ThresholdCurve renewal_lambda(const ContinuousModelSpec& spec, double t_max, double step) {
    spec.validate();
    if (!(t_max > 0.0) || !(step > 0.0)) throw std::invalid_argument("renewal solve needs positive T_max and step");
    Interarrival H;
    if (const auto* r = std::get_if<RenewalArrivals>(&spec.arrivals))
        H = r->interarrival;
    else if (const auto* p = std::get_if<PoissonArrivals>(&spec.arrivals))
        H = p->rate > 0.0 ? Interarrival::exponential(p->rate) : Interarrival::deterministic(2.0 * t_max + 1.0);
    else
        throw std::invalid_argument("renewal solve needs renewal or homogeneous Poisson arrivals");

    const SolveGrid grid = make_grid(spec.lifetime, t_max, step);
    const std::size_t n = grid.total;
    const double h = grid.h;
    const double t_end = h * double(n);
    ThresholdCurve curve;
    curve.time.resize(n + 1);
    curve.lambda.assign(n + 1, 0.0);
    std::vector<double> S(n + 1), M(n + 1), beta(n + 1), dens(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        curve.time[i] = double(i) * h;
        S[i] = spec.lifetime.survival(curve.time[i]);
        beta[i] = spec.discount(curve.time[i]);
        dens[i] = H.density(curve.time[i]);
    }
    curve.truncated = spec.lifetime.survival(t_max) > 1e-6;
    M[n] = spec.offers.expected_max(0.0, beta[n]);

    for (std::size_t i = n; i-- > 0;) {
        const double t = curve.time[i];
        double lam = 0.0;
        if (S[i] >= kSurvivalGuard) {
            if (H.kind() == Interarrival::Kind::Deterministic) {
                const double u = t + H.gap();
                if (u <= t_end + 1e-12 * t_end) {
                    const double pos = u / h;
                    const auto j = std::size_t(std::llround(pos));
                    const double lam_u = std::abs(pos - double(j)) < 1e-9 ? curve.lambda[std::min(j, n)] : curve.at(u);
                    lam = spec.lifetime.survival(u) / S[i] * spec.offers.expected_max(lam_u, spec.discount(u));
                }
            } else {
                // Trapezoid over s_j = j h; the j = 0 node involves lambda_i itself.
                double rest = 0.0;
                for (std::size_t j = 1; i + j <= n; ++j) {
                    const double w = (i + j == n) ? 0.5 * h : h;
                    rest += w * S[i + j] / S[i] * M[i + j] * dens[j];
                }
                const double w0 = 0.5 * h * dens[0];
                for (int it = 0; it < 200; ++it) {
                    const double next = rest + w0 * spec.offers.expected_max(lam, beta[i]);
                    const bool done = std::abs(next - lam) <= 1e-15 * std::max(1.0, next);
                    lam = next;
                    if (done) break;
                }
            }
        }
        curve.lambda[i] = lam;
        M[i] = spec.offers.expected_max(lam, beta[i]);
    }
    clip(curve, grid.reported);
    return curve;
}

ThresholdCurve poisson_lambda_ode(const ContinuousModelSpec& spec, double t_max, double step) {
    spec.validate();
    if (!(t_max > 0.0) || !(step > 0.0)) throw std::invalid_argument("ODE solve needs positive T_max and step");
    std::function<double(double)> mu;
    if (const auto* p = std::get_if<PoissonArrivals>(&spec.arrivals)) {
        const double rate = p->rate;
        mu = [rate](double) { return rate; };
    } else if (const auto* nh = std::get_if<NonhomogeneousPoissonArrivals>(&spec.arrivals)) {
        mu = nh->intensity;
    } else {
        throw std::invalid_argument("ODE solve needs Poisson arrivals");
    }

    auto rhs = [&](double t, double lam) {
        const double r = spec.lifetime.hazard(t);
        if (!std::isfinite(r) || r > kStiffHazard)
            throw StiffnessError("failure rate " + std::to_string(r) + " at t = " + std::to_string(t) + " is too stiff");
        const double b = spec.discount(t);
        return r * lam - b * mu(t) * spec.offers.excess(lam / b);
    };
    auto rk4 = [&](double t, double y, double dt) {
        const double k1 = rhs(t, y);
        const double k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
        const double k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
        const double k4 = rhs(t + dt, y + dt * k3);
        return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    const SolveGrid grid = make_grid(spec.lifetime, t_max, step);
    const std::size_t n = grid.total;
    const double h = grid.h;
    ThresholdCurve curve;
    curve.time.resize(n + 1);
    curve.lambda.assign(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i) curve.time[i] = double(i) * h;
    curve.truncated = spec.lifetime.survival(t_max) > 1e-6;

    double y = 0.0;
    double dt = -h;
    for (std::size_t i = n; i-- > 0;) {
        double t = curve.time[i + 1];
        const double target = curve.time[i];
        while (t > target) {
            dt = std::max(dt, target - t);  // both negative: do not overshoot
            const double full = rk4(t, y, dt);
            const double half = rk4(t + 0.5 * dt, rk4(t, y, 0.5 * dt), 0.5 * dt);
            const double err = std::abs(half - full) / 15.0;
            if (err <= kOdeStepError) {
                y = half + (half - full) / 15.0;
                t += dt;
                if (err < kOdeStepError / 64.0) dt = std::max(2.0 * dt, -h);
            } else {
                dt *= 0.5;
                if (-dt < 1e-12 * std::max(1.0, t_max)) throw StiffnessError("ODE step size underflow near t = " + std::to_string(t));
            }
        }
        curve.lambda[i] = y;
        dt = -h;
    }
    clip(curve, grid.reported);
    return curve;
}

std::vector<double> critical_times(const ThresholdCurve& curve, const std::vector<double>& values) {
    if (curve.time.empty()) throw std::invalid_argument("empty threshold curve");
    if (!curve.nonincreasing()) throw std::invalid_argument("critical times need a nonincreasing curve");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (!(values[i] < values[i - 1])) throw std::invalid_argument("offer values must be strictly decreasing");
    const double inf_lambda = *std::min_element(curve.lambda.begin(), curve.lambda.end());
    std::vector<double> out;
    for (double x : values) {
        if (!(inf_lambda < x)) {
            out.push_back(kInfinity);
            continue;
        }
        if (curve.lambda.front() <= x) {
            out.push_back(0.0);
            continue;
        }
        std::size_t i = 0;
        while (curve.lambda[i + 1] > x) ++i;
        double lo = curve.time[i], hi = curve.time[i + 1];
        while (hi - lo > 1e-9) {
            const double mid = 0.5 * (lo + hi);
            (curve.at(mid) > x ? lo : hi) = mid;
        }
        out.push_back(std::max(0.0, hi));
    }
    return out;
}

}  // namespace omdp
