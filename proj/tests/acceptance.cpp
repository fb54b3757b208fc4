// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--expect-fail N]...
// Exit status is 0 when every criterion passes, or when the only failures are
// ones listed with --expect-fail.

#include "omdp/io.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace omdp;
using namespace omdp::testing;

namespace {

// Pinned tolerances.
constexpr double kOptimalityTol = 1e-7;
constexpr double kSolveTol = 1e-11;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kRiskTol = 1e-3;
constexpr double kRecursionTol = 1e-9;
constexpr double kPlateauTol = 1e-4;
constexpr double kOdeRenewalTol = 2e-3;
constexpr double kSeMultiple = 3.0;
constexpr double kPerturbation = 0.10;
constexpr std::size_t kDiscreteTrajectories = 200000;
constexpr std::size_t kContinuousTrajectories = 100000;

struct Verdict {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double sup_diff(const ValueFunction& a, const ValueFunction& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
    return d;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

ModelDocument load(const std::string& name) { return parse_model_document(read_json_file(fixture(name))); }

// ---------------------------------------------------------------------------

Verdict ac1() {
    Gen g(1001);
    double worst = 0.0;
    std::size_t specs = 0;
    for (; specs < 100; ++specs) {
        const std::size_t H = 2 + std::size_t(unif(g, 0.0, 4.0));  // 1..4 live states
        const std::size_t K = 2 + std::size_t(unif(g, 0.0, 3.0));  // 1..3 offers
        const auto m = validated(random_base_spec(g, H, K, unif(g, 0.5, 0.95), false));
        const auto vi = solve_value_iteration(m, {kSolveTol});
        const auto bf = brute_force_optimal(m);
        worst = std::max(worst, sup_diff(vi.values, bf.values));
        if (!vi.values.converged) return {false, "value iteration did not converge"};
    }
    return {worst <= kOptimalityTol, "100 specs, max |V_vi - V_bf| = " + fmt("%.3g", worst)};
}

bool values_nonincreasing(const ValueFunction& V) {
    const auto& L = V.layout;
    for (std::size_t h = 0; h < L.patient.count; ++h)
        for (std::size_t k = 0; k < L.organ.count; ++k) {
            if (h + 1 < L.patient.count && V.at(0, h + 1, k) > V.at(0, h, k) + kMonotoneSlack) return false;
            if (k + 1 < L.organ.count && V.at(0, h, k + 1) > V.at(0, h, k) + kMonotoneSlack) return false;
        }
    return true;
}

struct StructureTally {
    int specs = 0, monotone = 0, patient = 0, organ = 0;
    std::string first_witness;
};

StructureTally structure_tally(Gen& g, const std::function<DiscreteModelSpec(Gen&)>& draw) {
    StructureTally t;
    while (t.specs < 100) {
        const auto m = validated(draw(g));
        if (!check_ifr(m->transition[0]).holds || !check_monotone_rewards(m).monotone) continue;
        ++t.specs;
        const auto sol = solve_value_iteration(m, {kSolveTol});
        t.monotone += values_nonincreasing(sol.values);
        const auto grid = sol.policy.canonical_grid();
        const auto p = extract_patient_control_limits(grid);
        t.patient += p.is_control_limit;
        t.organ += extract_organ_control_limits(grid).is_control_limit;
        if (!p.is_control_limit && t.first_witness.empty()) {
            std::ostringstream os;
            os << "spec " << t.specs << " column " << p.witness->slice << ":";
            for (std::size_t h = 0; h < grid.rows; ++h) os << ' ' << to_string(grid(h, p.witness->slice));
            t.first_witness = os.str();
        }
    }
    return t;
}

Verdict ac2() {
    Gen g(2002);
    auto size = [](Gen& gen) { return 3 + std::size_t(unif(gen, 0.0, 4.0)); };
    const auto t = structure_tally(g, [&](Gen& gen) {
        const std::size_t H = size(gen), K = size(gen);
        return random_base_spec(gen, H, K, unif(gen, 0.5, 0.95), true);
    });
    // Same check restricted to R(h,k) - R(h+1,k) <= r(h) - r(h+1).
    const auto s = structure_tally(g, [&](Gen& gen) {
        const std::size_t H = size(gen), K = size(gen);
        return random_slow_decline_spec(gen, H, K, unif(gen, 0.5, 0.95));
    });
    std::ostringstream os;
    os << t.specs << " specs: V monotone " << t.monotone << ", patient-based " << t.patient << ", organ-based "
       << t.organ;
    if (!t.first_witness.empty()) os << "; first patient-axis witness " << t.first_witness;
    os << "; with slowly declining R: monotone " << s.monotone << ", patient-based " << s.patient << ", organ-based "
       << s.organ;
    const bool pass = t.monotone == t.specs && t.patient == t.specs && t.organ == t.specs;
    return {pass, os.str()};
}

Verdict ac3() {
    const auto split = analyze_structure(split_wait_policy(), false);
    const auto disc = analyze_structure(disconnected_policy(), true);
    const bool a = split.patient_based.is_control_limit && !split.organ_based.is_control_limit;
    const bool b = disc.patient_based.is_control_limit && disc.organ_based.is_control_limit && disc.regions.size() > 3;
    return {a && b, "split-wait: patient " + std::string(split.patient_based.is_control_limit ? "pass" : "fail") +
                        " / organ " + (split.organ_based.is_control_limit ? "pass" : "fail") + "; disconnected: " +
                        std::to_string(disc.regions.size()) + " regions, both axes " +
                        (disc.patient_based.is_control_limit && disc.organ_based.is_control_limit ? "pass" : "fail")};
}

Verdict ac4() {
    Gen g(4004);
    const std::vector<double> radii{0.0, 0.05, 0.1, 0.2};
    int dominated = 0, nested = 0, ordered = 0, limit_pairs = 0;
    for (int chain = 0; chain < 50; ++chain) {
        const std::size_t H = 4 + std::size_t(unif(g, 0.0, 5.0));
        const auto m = validated(random_living_donor_spec(g, H, unif(g, 0.7, 0.97)));
        const auto myopic = solve_living_donor(m, {kSolveTol});
        bool dom = true, nest = true, ord = true;
        std::vector<Action> prev;
        for (double r : radii) {
            const auto robust = robust_value_iteration(m, AmbiguitySpec::uniform(H, r), {kSolveTol});
            const auto rep = compare_solutions(robust, myopic);
            dom = dom && rep.values_dominated;
            if (rep.limits_applicable) {
                ++limit_pairs;
                ord = ord && rep.limit_order;
            }
            if (!prev.empty())
                for (std::size_t i = 0; i < prev.size(); ++i)
                    if (prev[i] == Action::TransplantLiving && robust.policy.actions[i] != Action::TransplantLiving)
                        nest = false;
            prev = robust.policy.actions;
        }
        dominated += dom;
        nested += nest;
        ordered += ord;
    }
    std::ostringstream os;
    os << "50 chains: dominated " << dominated << ", nested " << nested << ", limit order " << ordered << " ("
       << limit_pairs << " limit pairs)";
    return {dominated == 50 && nested == 50 && ordered == 50, os.str()};
}

Verdict ac5() {
    Gen g(5005);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        auto [spec, risk] = random_risk_model(g, false);
        risk.gamma = 1e-6;
        const auto m = validated(spec);
        const auto rs = risk_sensitive_value_iteration(m, risk, {kSolveTol});
        const auto lt = lifetime_value_iteration(m, risk, {kSolveTol});
        worst = std::max(worst, sup_diff(rs.values, lt.values));
    }
    int exact = 0;
    for (int i = 0; i < 20; ++i) {
        auto [spec, risk] = random_risk_model(g, true);
        risk.gamma = 0.5 + 2.0 * unif(g);
        const auto m = validated(spec);
        const auto rs = risk_sensitive_value_iteration(m, risk, {kSolveTol});
        const auto lt = lifetime_value_iteration(m, risk, {kSolveTol});
        exact += rs.values.values == lt.values.values && rs.policy == lt.policy;
    }
    return {worst <= kRiskTol && exact == 20,
            "gamma 1e-6 max diff " + fmt("%.3g", worst) + "; deterministic exact " + std::to_string(exact) + "/20"};
}

Verdict ac6() {
    const auto doc = load("uniform_fixed.json");
    const auto lam = finite_horizon_thresholds(doc.continuous->spec);
    const std::size_t N = lam.size() - 1;
    const double a = lam[N - 1], b = lam[N - 2];
    const bool pass = std::abs(a - 0.5) <= kRecursionTol && std::abs(b - 0.625) <= kRecursionTol && lam[N] == 0.0;
    return {pass, "lambda^{N-1} = " + fmt("%.12g", a) + ", lambda^{N-2} = " + fmt("%.12g", b)};
}

Verdict ac7() {
    const auto doc = load("uniform_stationary.json");
    const auto& spec = doc.continuous->spec;
    const double target = (3.0 - std::sqrt(5.0)) / 2.0;
    const auto ode = poisson_lambda_ode(spec, 10.0, 0.05);
    double plateau = 0.0;
    for (double t = 0.0; t <= 5.0; t += 0.25) plateau = std::max(plateau, std::abs(ode.at(t) - target));

    double agree = 0.0;
    const std::vector<ContinuousModelSpec> cases = {spec, load("erlang_poisson.json").continuous->spec};
    for (const auto& c : cases) {
        const double t_max = std::min(30.0, default_horizon(c.lifetime));
        const auto a = poisson_lambda_ode(c, t_max, 0.05);
        const auto b = renewal_lambda(c, t_max, 0.01);
        const double scale = std::max(1.0, std::abs(a.at(0.0)));
        for (double t = 0.0; t <= t_max; t += t_max / 200.0) agree = std::max(agree, std::abs(a.at(t) - b.at(t)) / scale);
    }
    return {plateau <= kPlateauTol && agree <= kOdeRenewalTol,
            "plateau error " + fmt("%.3g", plateau) + "; ODE vs renewal (relative to max(1, lambda(0))) " +
                fmt("%.3g", agree)};
}

/// Best action after scaling the wait value by `scale`.
Policy perturbed_policy(const ValidatedModel& m, const Solution& sol, double scale) {
    Policy p = sol.policy;
    for (std::size_t g = 0; g < m->regimes(); ++g)
        for (std::size_t h = 0; h < m->patient.count; ++h) {
            if (!m->live(h)) continue;
            for (std::size_t k = 0; k < m->organ.count; ++k) {
                auto q = action_values(m, sol.values, g, h, k);
                for (auto& a : q)
                    if (a.action == Action::Wait || a.action == Action::Dialysis) a.value *= scale;
                p.at(g, h, k) = select_action(q, TieBreak::PreferWait);
            }
        }
    return p;
}

struct ContinuousCase {
    std::string name;
    ContinuousModelSpec spec;
    ThresholdRule rule;
    double value = 0.0;
};

ContinuousCase continuous_case(const std::string& name) {
    const auto doc = load(name);
    const auto& sec = *doc.continuous;
    ContinuousCase c{name, sec.spec, {}, 0.0};
    if (std::holds_alternative<FixedInstants>(sec.spec.arrivals)) {
        const auto lam = finite_horizon_thresholds(sec.spec);
        c.rule = rule_from_thresholds(lam);
        c.value = lam.front();
        return c;
    }
    const double t_max = sec.t_max ? *sec.t_max : default_horizon(sec.spec.lifetime);
    const double step = sec.grid_step ? *sec.grid_step : 0.01;
    const auto curve = std::holds_alternative<RenewalArrivals>(sec.spec.arrivals) ? renewal_lambda(sec.spec, t_max, step)
                                                                                  : poisson_lambda_ode(sec.spec, t_max, step);
    c.rule = rule_from_curve(curve);
    c.value = curve.lambda.front();
    return c;
}

Verdict ac8() {
    int checks = 0, covered = 0, perturb = 0, beaten = 0;
    std::string worst;
    double worst_z = 0.0;
    std::uint64_t stream = 0;
    auto track = [&](const std::string& where, double mean, double se, double target) {
        const double z = se > 0.0 ? std::abs(mean - target) / se : (std::abs(mean - target) <= 1e-9 ? 0.0 : kInfinity);
        if (z > worst_z) {
            worst_z = z;
            worst = where;
        }
        return std::abs(mean - target) <= kSeMultiple * se + 1e-9;
    };

    for (const std::string name : {"three_by_three.json", "combined.json"}) {
        const auto m = validated(*load(name).discrete);
        const auto sol = solve_value_iteration(m, {kSolveTol});
        std::vector<Policy> perturbed;
        for (double s : {1.0 - kPerturbation, 1.0 + kPerturbation}) perturbed.push_back(perturbed_policy(m, sol, s));
        for (std::size_t h = 0; h < m->patient.count; ++h) {
            if (!m->live(h)) continue;
            for (std::size_t k = 0; k < m->organ.count; ++k) {
                const Cell start{0, h, k};
                const double v = sol.values.at(0, h, k);
                const auto e = estimate_policy_value(m, sol.policy, start, kDiscreteTrajectories, derive_seed(8008, stream++));
                ++checks;
                covered += track(name + " (" + std::to_string(h) + "," + std::to_string(k) + ")", e.mean, e.se, v);
                for (const auto& p : perturbed) {
                    if (p == sol.policy) continue;
                    const auto pe = estimate_policy_value(m, p, start, kDiscreteTrajectories, derive_seed(8008, stream++));
                    ++perturb;
                    beaten += pe.mean > v + kSeMultiple * pe.se + 1e-9;
                }
            }
        }
    }
    for (const std::string name : {"uniform_fixed.json", "uniform_stationary.json", "erlang_poisson.json", "erlang_renewal.json"}) {
        const auto c = continuous_case(name);
        const auto e = continuous_time_simulate(c.spec, c.rule, kContinuousTrajectories, derive_seed(8009, stream++));
        ++checks;
        covered += track(name, e.mean, e.se, c.value);
        for (double s : {1.0 - kPerturbation, 1.0 + kPerturbation}) {
            const ThresholdRule rule = [&c, s](std::size_t j, double t) { return s * c.rule(j, t); };
            const auto pe = continuous_time_simulate(c.spec, rule, kContinuousTrajectories, derive_seed(8009, stream++));
            ++perturb;
            beaten += pe.mean > c.value + kSeMultiple * pe.se + 1e-9;
        }
    }
    std::ostringstream os;
    os << covered << "/" << checks << " start states within 3 SE (largest |z| " << fmt("%.2f", worst_z) << " at " << worst
       << "); perturbed policies beating the optimum: " << beaten << "/" << perturb;
    return {covered == checks && beaten == 0, os.str()};
}

Verdict ac9() {
    std::ostringstream os;
    bool pass = true;
    for (const std::string name : {"erlang_poisson.json", "erlang_renewal.json"}) {
        const auto doc = load(name);
        const auto& sec = *doc.continuous;
        const double t_max = sec.t_max ? *sec.t_max : default_horizon(sec.spec.lifetime);
        const double step = sec.grid_step ? *sec.grid_step : 0.01;
        const auto curve = std::holds_alternative<RenewalArrivals>(sec.spec.arrivals)
                               ? renewal_lambda(sec.spec, t_max, step)
                               : poisson_lambda_ode(sec.spec, t_max, step);
        const bool mono = curve.nonincreasing();
        bool ordered = false;
        std::vector<double> ct;
        if (mono) {
            ct = critical_times(curve, sec.critical_values.empty() ? sec.spec.offers.values() : sec.critical_values);
            ordered = !ct.empty() && ct[0] == 0.0;
            for (std::size_t i = 1; i < ct.size(); ++i) ordered = ordered && ct[i - 1] <= ct[i];
        }
        pass = pass && mono && ordered;
        os << name << ": " << (mono ? "nonincreasing" : "NOT nonincreasing") << ", t =";
        for (double t : ct) os << ' ' << (std::isfinite(t) ? fmt("%.4g", t) : std::string("inf"));
        os << "; ";
    }
    std::string d = os.str();
    d.resize(d.size() - 2);
    return {pass, d};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> expected;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--expect-fail" && i + 1 < argc) {
            expected.insert(std::stoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--expect-fail N]...\n");
            return 2;
        }
    }
    struct Criterion {
        int id;
        const char* name;
        double budget;  // seconds
        Verdict (*run)();
    };
    const Criterion criteria[] = {
        {1, "solver optimality", 30, ac1},           {2, "control-limit structure", 60, ac2},
        {3, "counterexample fidelity", 1, ac3},      {4, "robust dominance", 60, ac4},
        {5, "risk-sensitive consistency", 10, ac5},  {6, "continuous-time recursion", 1, ac6},
        {7, "ODE stationarity", 10, ac7},            {8, "threshold optimality by simulation", 120, ac8},
        {9, "IFR monotone thresholds", 5, ac9},
    };
    int unexpected = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        const bool xfail = !v.pass && expected.count(c.id);
        if (!v.pass && !xfail) ++unexpected;
        std::printf("AC%d %s %s: %s [%.2fs, budget %.0fs%s]\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(),
                    secs, c.budget, secs > c.budget ? ", over budget" : "");
        if (xfail) std::printf("AC%d failure is expected\n", c.id);
        std::fflush(stdout);
    }
    return unexpected ? 1 : 0;
}
