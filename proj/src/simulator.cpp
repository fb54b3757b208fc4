#include "omdp/simulator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <exception>
#include <thread>

namespace omdp {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

/// Everything one (cell, action) pair does to the chain.
struct Effect {
    bool terminal = false;
    double reward = 0.0;
    std::size_t slot = kWaitSlot;
    std::size_t next_regime = 0;
};

Effect effect(const DiscreteModelSpec& s, Cell c, Action a) {
    switch (a) {
        case Action::Wait: return {false, s.wait_reward[kWaitSlot][c.h], kWaitSlot, c.regime};
        case Action::Dialysis: return {false, s.wait_reward[kDialysisSlot][c.h], kDialysisSlot, 1};
        case Action::Transplant: {
            double r = s.transplant_reward(c.h, c.k);
            if (s.variant == Variant::ContinuousAnalog) r = s.wait_reward[kWaitSlot][c.h] + s.discount * r;
            return {true, r, kWaitSlot, c.regime};
        }
        case Action::TransplantLiving: return {true, s.living_donor->reward[c.h], kWaitSlot, c.regime};
        case Action::None: break;
    }
    throw std::invalid_argument("no action at a live cell");
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t draw(std::span<const double> probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

template <class F>
void parallel_for(std::size_t n, F f) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), 8));
    if (workers == 1 || n < 1024) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, w, &f, &errors] {
            try {
                for (std::size_t i = lo; i < hi; ++i) f(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<Cell> live_cells(const DiscreteModelSpec& s) {
    std::vector<Cell> cells;
    for (std::size_t g = 0; g < s.regimes(); ++g)
        for (std::size_t h = 0; h < s.patient.count; ++h)
            if (s.live(h))
                for (std::size_t k = 0; k < s.organ.count; ++k) cells.push_back({g, h, k});
    return cells;
}

/// Solve (I - beta P_pi) v = c for the live cells; empty on a singular system.
std::optional<Eigen::VectorXd> solve_policy(const DiscreteModelSpec& s, const std::vector<Cell>& cells,
                                            const std::vector<Action>& actions) {
    const Layout L = layout_of(s);
    std::vector<std::ptrdiff_t> pos(L.cells(), -1);
    for (std::size_t i = 0; i < cells.size(); ++i) pos[L.index(cells[i].regime, cells[i].h, cells[i].k)] = std::ptrdiff_t(i);
    const auto n = Eigen::Index(cells.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd c(n);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Effect e = effect(s, cells[i], actions[i]);
        c(Eigen::Index(i)) = e.reward;
        if (e.terminal) continue;
        const Matrix& P = s.transition[e.slot];
        for (std::size_t h2 = 0; h2 < s.patient.count; ++h2) {
            if (!s.live(h2) || P(cells[i].h, h2) == 0.0) continue;
            for (std::size_t k2 = 0; k2 < s.organ.count; ++k2) {
                const double p = P(cells[i].h, h2) * s.offer_prob(h2, k2);
                if (p == 0.0) continue;
                A(Eigen::Index(i), pos[L.index(e.next_regime, h2, k2)]) -= s.discount * p;
            }
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) return std::nullopt;
    return Eigen::VectorXd(lu.solve(c));
}

ValueFunction to_values(const DiscreteModelSpec& s, const std::vector<Cell>& cells, const Eigen::VectorXd& v) {
    ValueFunction V = zero_values(layout_of(s));
    for (std::size_t i = 0; i < cells.size(); ++i) V.at(cells[i].regime, cells[i].h, cells[i].k) = v(Eigen::Index(i));
    for (std::size_t g = 0; g < s.regimes(); ++g)
        for (std::size_t h = 0; h < s.patient.count; ++h) {
            if (!s.live(h)) continue;
            double acc = 0.0;
            for (std::size_t k = 0; k < s.organ.count; ++k) acc += s.offer_prob(h, k) * V.at(g, h, k);
            V.marginal[g * s.patient.count + h] = acc;
        }
    V.residual = 0.0;
    V.iterations = 0;
    return V;
}

}  // namespace

TrajectoryRecord simulate_trajectory(const ValidatedModel& model, const Policy& policy, Cell start, std::uint64_t seed) {
    const auto& s = model.spec();
    TrajectoryRecord rec;
    rec.seed = seed;
    if (start.regime >= s.regimes() || start.h >= s.patient.count || start.k >= s.organ.count)
        throw std::invalid_argument("initial state out of range");
    Rng rng(seed);
    Cell c = start;
    double disc = 1.0;
    for (std::size_t t = 0;; ++t) {
        if (!s.live(c.h)) {
            rec.died = true;
            return rec;
        }
        if (t >= kMaxEpochs) {
            rec.truncated = true;
            return rec;
        }
        const Action a = policy.at(c.regime, c.h, c.k);
        if (!is_legal(s, c.regime, c.h, c.k, a)) throw std::invalid_argument("policy takes an illegal action");
        const Effect e = effect(s, c, a);
        const double contrib = disc * e.reward;
        rec.steps.push_back({c, a, contrib});
        rec.reward += contrib;
        if (e.terminal) {
            rec.tau = t;
            return rec;
        }
        const std::size_t h2 = draw(s.transition[e.slot].row(c.h), rng);
        std::size_t k2 = s.no_offer();
        if (s.live(h2)) k2 = draw(s.offer_prob.row(h2), rng);
        c = {e.next_regime, h2, k2};
        disc *= s.discount;
    }
}

double recompute_reward(const ValidatedModel& model, const TrajectoryRecord& record) {
    const auto& s = model.spec();
    double total = 0.0, disc = 1.0;
    for (const auto& st : record.steps) {
        total += disc * effect(s, st.cell, st.action).reward;
        disc *= s.discount;
    }
    return total;
}

EvalEstimate summarize(const std::vector<double>& x) {
    EvalEstimate est;
    est.n = x.size();
    if (x.empty()) return est;
    const double n = double(x.size());
    est.mean = pairwise_sum(x.data(), x.size()) / n;
    if (x.size() >= 2) {
        std::vector<double> sq(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - est.mean) * (x[i] - est.mean);
        est.se = std::sqrt(pairwise_sum(sq.data(), sq.size()) / (n - 1.0) / n);
    }
    est.ci_low = est.mean - 1.96 * est.se;
    est.ci_high = est.mean + 1.96 * est.se;
    return est;
}

EvalEstimate estimate_policy_value(const ValidatedModel& model, const Policy& policy, Cell start, std::size_t n,
                                   std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("need at least 2 trajectories");
    check_policy(model.spec(), policy);
    std::vector<double> rewards(n);
    std::vector<unsigned char> trunc(n, 0);
    parallel_for(n, [&](std::size_t i) {
        const auto rec = simulate_trajectory(model, policy, start, derive_seed(seed, i));
        rewards[i] = rec.reward;
        trunc[i] = rec.truncated;
    });
    EvalEstimate est = summarize(rewards);
    est.truncated = std::size_t(std::count(trunc.begin(), trunc.end(), 1));
    return est;
}

ValueFunction evaluate_policy_exact(const ValidatedModel& model, const Policy& policy) {
    const auto& s = model.spec();
    check_policy(s, policy);
    const auto cells = live_cells(s);
    std::vector<Action> actions;
    for (const auto& c : cells) actions.push_back(policy.at(c.regime, c.h, c.k));
    const auto v = solve_policy(s, cells, actions);
    if (!v) throw std::invalid_argument("policy value is not defined: singular evaluation system");
    return to_values(s, cells, *v);
}

BruteForceResult brute_force_optimal(const ValidatedModel& model) {
    const auto& s = model.spec();
    const auto cells = live_cells(s);
    std::vector<std::vector<Action>> choices;
    std::size_t decisions = 0;
    for (const auto& c : cells) {
        choices.push_back(legal_actions(s, c.regime, c.k));
        if (choices.back().size() > kBruteForceActions)
            throw std::invalid_argument("enumeration bound exceeded: more than 3 actions per cell");
        decisions += choices.back().size() > 1;
    }
    if (decisions > kBruteForceCells)
        throw std::invalid_argument("enumeration bound exceeded: " + std::to_string(decisions) + " decision cells (max " +
                                    std::to_string(kBruteForceCells) + ")");

    BruteForceResult out;
    std::vector<std::size_t> digit(cells.size(), 0);
    std::vector<Action> actions(cells.size());
    Eigen::VectorXd best = Eigen::VectorXd::Constant(Eigen::Index(cells.size()), -kInfinity);
    double best_sum = -kInfinity;
    std::vector<Action> best_actions;
    bool singular = false;
    for (;;) {
        for (std::size_t i = 0; i < cells.size(); ++i) actions[i] = choices[i][digit[i]];
        ++out.policies;
        if (const auto v = solve_policy(s, cells, actions)) {
            best = best.cwiseMax(*v);
            const double sum = v->sum();
            if (sum > best_sum) {
                best_sum = sum;
                best_actions = actions;
            }
        } else {
            singular = true;
        }
        std::size_t i = 0;
        while (i < cells.size() && ++digit[i] == choices[i].size()) digit[i++] = 0;
        if (i == cells.size()) break;
    }
    if (singular) throw std::invalid_argument("a policy has no finite value: singular evaluation system");

    out.values = to_values(s, cells, best);
    out.policy = Policy{layout_of(s), std::vector<Action>(layout_of(s).cells(), Action::None)};
    for (std::size_t i = 0; i < cells.size(); ++i) out.policy.at(cells[i].regime, cells[i].h, cells[i].k) = best_actions[i];
    return out;
}

ThresholdRule rule_from_thresholds(std::vector<double> lambda) {
    return [lambda = std::move(lambda)](std::size_t j, double) { return j < lambda.size() ? lambda[j] : 0.0; };
}

ThresholdRule rule_from_curve(ThresholdCurve curve) {
    return [curve = std::move(curve)](std::size_t, double t) { return curve.at(t); };
}

namespace {

double offer_reward(const ContinuousModelSpec& spec, const ThresholdRule& rule, std::size_t j, double t, Rng& rng,
                    bool& stop) {
    const double k = spec.offers.sample(rng);
    const double beta = spec.discount(t);
    if (k > rule(j, t) / beta) {
        stop = true;
        return beta * k;
    }
    return 0.0;
}

double continuous_path(const ContinuousModelSpec& spec, const ThresholdRule& rule, Rng& rng) {
    bool stop = false;
    if (const auto* fixed = std::get_if<FixedInstants>(&spec.arrivals)) {
        const auto alphas = spec.survival_alphas();
        for (std::size_t j = 1; j < fixed->times.size(); ++j) {
            if (!(uniform01(rng) < alphas[j - 1])) return 0.0;
            const double r = offer_reward(spec, rule, j, fixed->times[j], rng, stop);
            if (stop) return r;
        }
        return 0.0;
    }
    const double tau = spec.lifetime.sample(rng);
    double t = 0.0;
    for (std::size_t j = 1;; ++j) {
        if (const auto* r = std::get_if<RenewalArrivals>(&spec.arrivals)) {
            t += r->interarrival.sample(rng);
        } else if (const auto* p = std::get_if<PoissonArrivals>(&spec.arrivals)) {
            if (!(p->rate > 0.0)) return 0.0;
            t += std::exponential_distribution<double>(p->rate)(rng);
        } else {
            const auto& nh = std::get<NonhomogeneousPoissonArrivals>(spec.arrivals);
            for (;;) {
                t += std::exponential_distribution<double>(nh.bound)(rng);
                if (t >= tau) return 0.0;
                const double mu = nh.intensity(t);
                if (mu > nh.bound * (1.0 + 1e-12))
                    throw std::invalid_argument("intensity " + std::to_string(mu) + " exceeds the thinning bound at t = " +
                                                std::to_string(t));
                if (uniform01(rng) * nh.bound < mu) break;
            }
        }
        if (t >= tau) return 0.0;
        const double r = offer_reward(spec, rule, j, t, rng, stop);
        if (stop) return r;
    }
}

}  // namespace

EvalEstimate continuous_time_simulate(const ContinuousModelSpec& spec, const ThresholdRule& rule, std::size_t n,
                                      std::uint64_t seed) {
    spec.validate();
    if (n < 2) throw std::invalid_argument("need at least 2 trajectories");
    if (const auto* nh = std::get_if<NonhomogeneousPoissonArrivals>(&spec.arrivals))
        if (!(nh->bound > 0.0)) throw std::invalid_argument("thinning bound missing for nonhomogeneous intensity");
    std::vector<double> rewards(n);
    parallel_for(n, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        rewards[i] = continuous_path(spec, rule, rng);
    });
    return summarize(rewards);
}

}  // namespace omdp
