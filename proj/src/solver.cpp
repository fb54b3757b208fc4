#include "omdp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace omdp {

namespace {

constexpr double kTieTolerance = 1e-12;

int preference(Action a, TieBreak tb) {
    // Lower is preferred.
    switch (a) {
        case Action::Wait: return tb == TieBreak::PreferWait ? 0 : 3;
        case Action::Dialysis: return tb == TieBreak::PreferWait ? 1 : 2;
        case Action::TransplantLiving: return tb == TieBreak::PreferWait ? 2 : 1;
        case Action::Transplant: return tb == TieBreak::PreferWait ? 3 : 0;
        case Action::None: return 4;
    }
    return 4;
}

void require_iterable(const ValidatedModel& model) {
    if (model->discount >= 1.0)
        throw std::invalid_argument("value iteration requires discount < 1; use brute_force_optimal for discount 1");
}

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace

void SolveOptions::check() const {
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
}

std::vector<double> marginal_values(const ValidatedModel& model, const ValueFunction& V) {
    const auto& s = model.spec();
    const std::size_t H = s.patient.count, K = s.organ.count;
    std::vector<double> m(s.regimes() * H, 0.0);
    for (std::size_t g = 0; g < s.regimes(); ++g)
        for (std::size_t h = 0; h < H; ++h) {
            if (!s.live(h)) continue;
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += V.at(g, h, k) * s.offer_prob(h, k);
            m[g * H + h] = acc;
        }
    return m;
}

namespace {

/// sum_{h'} p(h'|h, slot) * marginal(next_regime, h')
double continuation(const DiscreteModelSpec& s, const std::vector<double>& marginal, std::size_t slot,
                    std::size_t next_regime, std::size_t h) {
    const std::size_t H = s.patient.count;
    const Matrix& P = s.transition[slot];
    double acc = 0.0;
    for (std::size_t j = 0; j < H; ++j) acc += P(h, j) * marginal[next_regime * H + j];
    return acc;
}

std::vector<ActionValue> q_values(const DiscreteModelSpec& s, const std::vector<double>& marginal, std::size_t regime,
                                  std::size_t h, std::size_t k) {
    std::vector<ActionValue> q;
    const double beta = s.discount;
    const bool offer = s.has_offer(k);
    switch (s.variant) {
        case Variant::Base:
            q.push_back({Action::Wait, s.wait_reward[kWaitSlot][h] + beta * continuation(s, marginal, kWaitSlot, 0, h)});
            if (offer) q.push_back({Action::Transplant, s.transplant_reward(h, k)});
            break;
        case Variant::LivingDonor:
            q.push_back({Action::Wait, s.wait_reward[kWaitSlot][h] + beta * continuation(s, marginal, kWaitSlot, 0, h)});
            q.push_back({Action::TransplantLiving, s.living_donor->reward[h]});
            break;
        case Variant::Combined:
            q.push_back({Action::Wait, s.wait_reward[kWaitSlot][h] + beta * continuation(s, marginal, kWaitSlot, 0, h)});
            q.push_back({Action::TransplantLiving, s.living_donor->reward[h]});
            if (offer) q.push_back({Action::Transplant, s.transplant_reward(h, k)});
            break;
        case Variant::Dialysis:
            if (regime == 0)
                q.push_back({Action::Wait, s.wait_reward[kWaitSlot][h] + beta * continuation(s, marginal, kWaitSlot, 0, h)});
            q.push_back({Action::Dialysis,
                         s.wait_reward[kDialysisSlot][h] + beta * continuation(s, marginal, kDialysisSlot, 1, h)});
            if (offer) q.push_back({Action::Transplant, s.transplant_reward(h, k)});
            break;
        case Variant::ContinuousAnalog: {
            const double u = s.wait_reward[kWaitSlot][h];
            q.push_back({Action::Wait, u + beta * continuation(s, marginal, kWaitSlot, 0, h)});
            if (offer) q.push_back({Action::Transplant, u + beta * s.transplant_reward(h, k)});
            break;
        }
    }
    return q;
}

void check_shape(const ValidatedModel& model, const ValueFunction& V) {
    if (V.layout != layout_of(model.spec()) || V.values.size() != V.layout.cells())
        throw std::invalid_argument("value function shape does not match the model");
}

}  // namespace

std::vector<ActionValue> action_values(const ValidatedModel& model, const ValueFunction& V, std::size_t regime,
                                       std::size_t h, std::size_t k) {
    check_shape(model, V);
    return q_values(model.spec(), marginal_values(model, V), regime, h, k);
}

Action select_action(const std::vector<ActionValue>& q, TieBreak tie_break) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& av : q) best = std::max(best, av.value);
    const double slack = kTieTolerance * std::max(1.0, std::abs(best));
    Action chosen = Action::None;
    for (const auto& av : q)
        if (av.value >= best - slack && (chosen == Action::None || preference(av.action, tie_break) < preference(chosen, tie_break)))
            chosen = av.action;
    return chosen;
}

ValueFunction bellman_backup(const ValidatedModel& model, const ValueFunction& V) {
    check_shape(model, V);
    const auto& s = model.spec();
    const auto marginal = marginal_values(model, V);
    ValueFunction out = zero_values(V.layout);
    for (std::size_t g = 0; g < s.regimes(); ++g)
        for (std::size_t h = 0; h < s.patient.count; ++h) {
            if (!s.live(h)) continue;
            for (std::size_t k = 0; k < s.organ.count; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                for (const auto& av : q_values(s, marginal, g, h, k)) best = std::max(best, av.value);
                out.at(g, h, k) = best;
            }
        }
    out.marginal = marginal_values(model, out);
    return out;
}

Policy greedy_policy(const ValidatedModel& model, const ValueFunction& V, TieBreak tie_break) {
    check_shape(model, V);
    const auto& s = model.spec();
    const auto marginal = marginal_values(model, V);
    Policy pol{V.layout, std::vector<Action>(V.layout.cells(), Action::None)};
    for (std::size_t g = 0; g < s.regimes(); ++g)
        for (std::size_t h = 0; h < s.patient.count; ++h) {
            if (!s.live(h)) continue;
            for (std::size_t k = 0; k < s.organ.count; ++k)
                pol.at(g, h, k) = select_action(q_values(s, marginal, g, h, k), tie_break);
        }
    return pol;
}

Solution solve_value_iteration(const ValidatedModel& model, const SolveOptions& opts) {
    opts.check();
    require_iterable(model);
    ValueFunction V = zero_values(layout_of(model.spec()));
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < opts.max_iterations) {
        ValueFunction next = bellman_backup(model, V);
        residual = sup_distance(next.values, V.values);
        V = std::move(next);
        ++it;
        if (residual <= opts.tolerance) break;
    }
    V.residual = residual;
    V.iterations = it;
    V.converged = residual <= opts.tolerance;
    Policy pol = greedy_policy(model, V, opts.tie_break);
    return {std::move(V), std::move(pol)};
}

Solution solve_living_donor(const ValidatedModel& model, const SolveOptions& opts) {
    opts.check();
    const auto& s = model.spec();
    if (s.variant != Variant::LivingDonor) throw std::invalid_argument("solve_living_donor requires the living_donor variant");
    require_iterable(model);
    const std::size_t H = s.patient.count;
    const Matrix& P = s.transition[kWaitSlot];
    const auto& r = s.wait_reward[kWaitSlot];
    const auto& R = s.living_donor->reward;

    std::vector<double> v(H, 0.0), next(H, 0.0);
    auto wait_value = [&](const std::vector<double>& cur, std::size_t h) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) acc += P(h, j) * cur[j];
        return r[h] + s.discount * acc;
    };
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < opts.max_iterations) {
        for (std::size_t h = 0; h < H; ++h) next[h] = s.live(h) ? std::max(R[h], wait_value(v, h)) : 0.0;
        residual = sup_distance(next, v);
        std::swap(v, next);
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

DiscreteModelSpec discretize_analog(const AnalogGridSpec& g) {
    if (!(g.h_max > 0.0) || !(g.k_max > 0.0) || g.h_cells == 0 || g.k_cells == 0)
        throw std::invalid_argument("analog grid needs positive bounds and at least one cell per axis");
    if (!g.transition_cdf || !g.offer_cdf || !g.success_prob)
        throw std::invalid_argument("analog grid needs transition, offer, and success functions");
    const std::size_t n = g.h_cells, m = g.k_cells;
    const double dh = g.h_max / double(n), dk = g.k_max / double(m);

    DiscreteModelSpec s;
    s.variant = Variant::ContinuousAnalog;
    s.discount = g.discount;
    s.patient = {n + 1, n, Orientation::LargerIsBetter};
    s.organ = {m + 1, m, Orientation::LargerIsBetter};

    Matrix P(n + 1, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = (double(i) + 0.5) * dh;
        double lower = std::clamp(g.transition_cdf(0.0, h), 0.0, 1.0);
        double prev = lower;
        double assigned = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double next = j + 1 == n ? 1.0 : std::clamp(g.transition_cdf(double(j + 1) * dh, h), 0.0, 1.0);
            double p = std::max(0.0, next - prev);
            P(i, j) = p;
            assigned += p;
            prev = std::max(prev, next);
        }
        P(i, n) = std::max(0.0, 1.0 - assigned);
    }
    P(n, n) = 1.0;
    s.transition = {P};

    s.offer_prob = Matrix(n + 1, m + 1);
    std::vector<double> cell(m);
    double prev = std::clamp(g.offer_cdf(0.0), 0.0, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
        double next = j + 1 == m ? 1.0 : std::clamp(g.offer_cdf(double(j + 1) * dk), 0.0, 1.0);
        cell[j] = std::max(0.0, next - prev);
        prev = std::max(prev, next);
    }
    double total = 0.0;
    for (double c : cell) total += c;
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j < m; ++j) s.offer_prob(i, j) = cell[j] / total;

    s.wait_reward = {std::vector<double>(n + 1, g.living_reward)};
    s.wait_reward[0][n] = 0.0;
    s.transplant_reward = Matrix(n + 1, m + 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            s.transplant_reward(i, j) =
                std::clamp(g.success_prob((double(i) + 0.5) * dh, (double(j) + 0.5) * dk), 0.0, 1.0) * g.bonus;
    return s;
}

std::vector<double> analog_control_limit(const Policy& policy, const AnalogGridSpec& g) {
    const std::size_t n = g.h_cells, m = g.k_cells;
    const double dk = g.k_max / double(m);
    std::vector<double> limit(n, g.k_max);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (policy.at(0, i, j) == Action::Transplant) {
                limit[i] = double(j) * dk;
                break;
            }
    return limit;
}

}  // namespace omdp
