#include "omdp/robust_risk.hpp"

#include "omdp/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace omdp {

namespace {

constexpr double kKlResidual = 1e-10;
constexpr std::size_t kDivergenceWindow = 1000;

struct Tilt {
    std::vector<double> p;
    double kl = 0.0;
};

/// p_i ~ q_i exp(-t (v_i - vmin)) on the support of q.
Tilt tilt(std::span<const double> q, std::span<const double> v, double vmin, double t) {
    Tilt out;
    out.p.assign(q.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] > 0.0) {
            out.p[i] = q[i] * std::exp(-t * (v[i] - vmin));
            z += out.p[i];
        }
    double mean_gap = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        out.p[i] /= z;
        if (q[i] > 0.0) mean_gap += out.p[i] * (v[i] - vmin);
    }
    out.kl = std::max(0.0, -t * mean_gap - std::log(z));
    return out;
}

double expectation(std::span<const double> p, std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) acc += p[i] * v[i];
    return acc;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        acc += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(0.0, acc);
}

WorstCase kl_worst_case(std::span<const double> q, std::span<const double> v, double radius) {
    if (q.size() != v.size()) throw std::invalid_argument("nominal and values differ in length");
    if (!(radius >= 0.0)) throw std::invalid_argument("KL radius must be nonnegative");
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (!std::isfinite(v[i])) throw std::invalid_argument("values must be finite");
        if (q[i] > 0.0) {
            vmin = std::min(vmin, v[i]);
            vmax = std::max(vmax, v[i]);
        }
    }
    WorstCase out;
    out.distribution.assign(q.begin(), q.end());
    if (radius == 0.0 || vmax - vmin <= 0.0) {
        out.expectation = expectation(q, v);
        return out;
    }

    // Vertex: nominal conditioned on the minimum-value support.
    double floor_mass = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] > 0.0 && v[i] == vmin) floor_mass += q[i];
    if (radius >= -std::log(floor_mass)) {
        for (std::size_t i = 0; i < q.size(); ++i) out.distribution[i] = (q[i] > 0.0 && v[i] == vmin) ? q[i] / floor_mass : 0.0;
        out.expectation = vmin;
        return out;
    }

    double lo = 0.0;
    double hi = 1.0 / (vmax - vmin);
    while (tilt(q, v, vmin, hi).kl < radius) {
        lo = hi;
        hi *= 2.0;
    }
    Tilt best = tilt(q, v, vmin, lo);
    for (int iter = 0; iter < 400 && radius - best.kl > kKlResidual; ++iter) {
        const double mid = 0.5 * (lo + hi);
        Tilt t = tilt(q, v, vmin, mid);
        if (t.kl <= radius) {
            lo = mid;
            best = std::move(t);
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-15 * hi) break;
    }
    out.distribution = std::move(best.p);
    out.expectation = expectation(out.distribution, v);
    return out;
}

Solution robust_value_iteration(const ValidatedModel& model, const AmbiguitySpec& ambiguity, const SolveOptions& opts) {
    opts.check();
    const auto& s = model.spec();
    if (s.variant != Variant::LivingDonor) throw std::invalid_argument("robust solving is defined for the living_donor variant");
    if (s.discount >= 1.0) throw std::invalid_argument("value iteration requires discount < 1");
    const std::size_t H = s.patient.count;
    if (ambiguity.level.size() != H) throw std::invalid_argument("ambiguity level needs one entry per patient state");
    for (double l : ambiguity.level)
        if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("ambiguity level must be finite and nonnegative");

    const Matrix& P = s.transition[kWaitSlot];
    const auto& r = s.wait_reward[kWaitSlot];
    const auto& R = s.living_donor->reward;
    std::vector<double> v(H, 0.0), next(H, 0.0);
    auto wait_value = [&](const std::vector<double>& cur, std::size_t h) {
        return r[h] + s.discount * kl_worst_case(P.row(h), cur, ambiguity.level[h]).expectation;
    };

    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < opts.max_iterations) {
        double d = 0.0;
        for (std::size_t h = 0; h < H; ++h) {
            next[h] = s.live(h) ? std::max(R[h], wait_value(v, h)) : 0.0;
            d = std::max(d, std::abs(next[h] - v[h]));
        }
        std::swap(v, next);
        residual = d;
        ++it;
        if (residual <= opts.tolerance) break;
    }

    Layout layout{1, s.patient, Axis{1, 0, Orientation::LargerIsWorse}};
    ValueFunction V = zero_values(layout);
    Policy pol{layout, std::vector<Action>(layout.cells(), Action::None)};
    for (std::size_t h = 0; h < H; ++h) {
        V.at(0, h, 0) = v[h];
        V.marginal[h] = v[h];
        if (s.live(h))
            pol.at(0, h, 0) = select_action({{Action::Wait, wait_value(v, h)}, {Action::TransplantLiving, R[h]}}, opts.tie_break);
    }
    V.residual = residual;
    V.iterations = it;
    V.converged = residual <= opts.tolerance;
    return {std::move(V), std::move(pol)};
}

DominanceReport compare_solutions(const Solution& robust, const Solution& myopic) {
    DominanceReport rep;
    const Layout& L = robust.values.layout;
    for (std::size_t h = 0; h < L.patient.count; ++h) {
        if (robust.values.at(0, h, 0) > myopic.values.at(0, h, 0) + 1e-9 && !rep.value_violation) {
            rep.values_dominated = false;
            rep.value_violation = h;
        }
        if (myopic.policy.at(0, h, 0) == Action::TransplantLiving && robust.policy.at(0, h, 0) != Action::TransplantLiving &&
            !rep.subset_violation) {
            rep.transplant_subset = false;
            rep.subset_violation = h;
        }
    }
    const auto rb = extract_patient_control_limits(robust.policy.canonical_grid());
    const auto mb = extract_patient_control_limits(myopic.policy.canonical_grid());
    rep.limits_applicable = rb.is_control_limit && mb.is_control_limit;
    if (rep.limits_applicable && !rb.limits.empty()) {
        rep.robust_limit = rb.limits[0];
        rep.myopic_limit = mb.limits[0];
        rep.limit_order = *rep.robust_limit <= *rep.myopic_limit;
    }
    return rep;
}

DominanceReport compare_robust_myopic(const ValidatedModel& model, const AmbiguitySpec& ambiguity, const SolveOptions& opts) {
    const Solution robust = robust_value_iteration(model, ambiguity, opts);
    const Solution myopic = solve_living_donor(model, opts);
    if (!robust.values.converged || !myopic.values.converged)
        throw std::runtime_error("robust/myopic comparison needs both solves to converge");
    return compare_solutions(robust, myopic);
}

void RiskSpec::check(const DiscreteModelSpec& spec) const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("risk coefficient gamma must be positive");
    if (lifetime.size() != spec.patient.count) throw std::invalid_argument("risk.lifetime needs one entry per patient state");
    for (std::size_t h = 0; h < spec.patient.count; ++h) {
        if (!spec.live(h)) continue;
        if (lifetime[h].size() != spec.organ.count)
            throw std::invalid_argument("risk.lifetime[" + std::to_string(h) + "] needs one entry per organ state");
        for (std::size_t k = 0; k < spec.organ.count; ++k) {
            if (!spec.has_offer(k)) continue;
            const auto& law = lifetime[h][k];
            double sum = 0.0;
            for (double p : law) {
                if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("risk.lifetime probability outside [0,1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                throw std::invalid_argument("risk.lifetime[" + std::to_string(h) + "][" + std::to_string(k) +
                                            "] does not sum to 1");
        }
    }
}

CertaintyEquivalent certainty_equivalent(std::span<const double> x, std::span<const double> p, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (x.size() != p.size() || x.empty()) throw std::invalid_argument("outcomes and probabilities differ in length");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (p[i] > 0.0) {
            xmin = std::min(xmin, x[i]);
            xmax = std::max(xmax, x[i]);
        }
    // sum p exp(-gamma (x - xmin)) - 1, accumulated through expm1 so small
    // gamma keeps its precision.
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::expm1(-gamma * (x[i] - xmin));
    CertaintyEquivalent ce;
    const double value = xmin - std::log1p(s) / gamma;
    if (!std::isfinite(value)) {
        ce.value = xmax;
        ce.saturated = true;
        return ce;
    }
    ce.value = std::clamp(value, xmin, xmax);
    return ce;
}

namespace {

template <class CE>
RiskSolution lifetime_iteration(const ValidatedModel& model, const RiskSpec& risk, const SolveOptions& opts, CE ce) {
    opts.check();
    const auto& s = model.spec();
    if (s.variant != Variant::Base) throw std::invalid_argument("risk-sensitive solving is defined for the base variant");
    for (std::size_t h = 0; h < s.patient.count; ++h)
        if (s.live(h) && s.wait_reward[kWaitSlot][h] != 1.0)
            throw std::invalid_argument("risk-sensitive solving requires a unit wait reward in every live state");
    const std::size_t H = s.patient.count, K = s.organ.count;
    const Matrix& P = s.transition[kWaitSlot];
    const Layout layout = layout_of(s);

    std::vector<double> transplant(H * K, 0.0);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t k = 0; k < K; ++k)
            if (s.live(h) && s.has_offer(k)) {
                const auto& law = risk.lifetime[h][k];
                std::vector<double> support(law.size());
                std::iota(support.begin(), support.end(), 0.0);
                transplant[h * K + k] = ce(support, law);
            }

    // Joint next-state law H(h'|h) K(k'|h') per live h, with outcomes 1 + V(h',k').
    std::vector<double> outcomes(H * K), probs(H * K);
    std::vector<double> wait(H, 0.0);
    auto wait_values = [&](const std::vector<double>& v) {
        for (std::size_t h = 0; h < H; ++h) {
            if (!s.live(h)) continue;
            for (std::size_t j = 0; j < H; ++j)
                for (std::size_t k = 0; k < K; ++k) {
                    probs[j * K + k] = P(h, j) * s.offer_prob(j, k);
                    outcomes[j * K + k] = 1.0 + (s.live(j) ? v[j * K + k] : 0.0);
                }
            wait[h] = ce(outcomes, probs);
        }
    };

    std::vector<double> v(H * K, 0.0), next(H * K, 0.0);
    double residual = std::numeric_limits<double>::infinity();
    double best_residual = residual;
    std::size_t stalled = 0;
    std::size_t it = 0;
    bool diverged = false;
    while (it < opts.max_iterations) {
        wait_values(v);
        double d = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t k = 0; k < K; ++k) {
                double val = 0.0;
                if (s.live(h)) val = s.has_offer(k) ? std::max(transplant[h * K + k], wait[h]) : wait[h];
                d = std::max(d, std::abs(val - v[h * K + k]));
                next[h * K + k] = val;
            }
        std::swap(v, next);
        ++it;
        stalled = d >= residual ? stalled + 1 : 0;
        residual = d;
        best_residual = std::min(best_residual, d);
        if (residual <= opts.tolerance) break;
        if (stalled >= kDivergenceWindow) {
            diverged = true;
            break;
        }
    }

    RiskSolution out;
    out.values = zero_values(layout);
    out.values.values = v;
    out.values.marginal = marginal_values(model, out.values);
    out.values.residual = residual;
    out.values.iterations = it;
    out.values.converged = residual <= opts.tolerance;
    out.diverged = diverged;
    out.policy = Policy{layout, std::vector<Action>(layout.cells(), Action::None)};
    wait_values(v);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t k = 0; k < K; ++k) {
            if (!s.live(h)) continue;
            std::vector<ActionValue> q{{Action::Wait, wait[h]}};
            if (s.has_offer(k)) q.push_back({Action::Transplant, transplant[h * K + k]});
            out.policy.at(0, h, k) = select_action(q, opts.tie_break);
        }
    return out;
}

}  // namespace

RiskSolution risk_sensitive_value_iteration(const ValidatedModel& model, const RiskSpec& risk, const SolveOptions& opts) {
    risk.check(model.spec());
    return lifetime_iteration(model, risk, opts, [&](std::span<const double> x, std::span<const double> p) {
        return certainty_equivalent(x, p, risk.gamma).value;
    });
}

RiskSolution lifetime_value_iteration(const ValidatedModel& model, const RiskSpec& risk, const SolveOptions& opts) {
    risk.check(model.spec());
    return lifetime_iteration(model, risk, opts, [](std::span<const double> x, std::span<const double> p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * p[i];
        return acc;
    });
}

DiscreteModelSpec risk_neutral_lifetime_spec(const ValidatedModel& model, const RiskSpec& risk) {
    risk.check(model.spec());
    DiscreteModelSpec s = model.spec();
    s.discount = 1.0;
    for (std::size_t h = 0; h < s.patient.count; ++h) {
        s.wait_reward[kWaitSlot][h] = s.live(h) ? 1.0 : 0.0;
        for (std::size_t k = 0; k < s.organ.count; ++k) {
            double mean = 0.0;
            if (s.live(h) && s.has_offer(k))
                for (std::size_t j = 0; j < risk.lifetime[h][k].size(); ++j) mean += double(j) * risk.lifetime[h][k][j];
            s.transplant_reward(h, k) = mean;
        }
    }
    return s;
}

}  // namespace omdp
