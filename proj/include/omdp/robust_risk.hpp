#pragma once

#include "omdp/solver.hpp"

#include <span>

namespace omdp {

// ---------------------------------------------------------------------------
// Robust living-donor model over Kullback-Leibler balls
// ---------------------------------------------------------------------------

/// KL radius per patient state. The nominal rows are the model's transition
/// matrix.
struct AmbiguitySpec {
    std::vector<double> level;

    static AmbiguitySpec uniform(std::size_t patients, double radius) { return {std::vector<double>(patients, radius)}; }
};

struct WorstCase {
    std::vector<double> distribution;
    double expectation = 0.0;
};

/// inf { sum p*v : KL(p || nominal) <= radius }.
///
/// The minimizer is an exponential tilt of the nominal, p_i ~ q_i exp(-t v_i);
/// the tilt t is found by bisection on the KL constraint. Mass is never put
/// outside the support of the nominal. When the radius reaches the KL of the
/// minimum-value vertex, that vertex is returned.
WorstCase kl_worst_case(std::span<const double> nominal, std::span<const double> values, double radius);

double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Robust Bellman fixed point for the living-donor chain. Same layout as
/// solve_living_donor.
Solution robust_value_iteration(const ValidatedModel& model, const AmbiguitySpec& ambiguity, const SolveOptions& opts = {});

struct DominanceReport {
    bool values_dominated = true;          // robust V <= myopic V everywhere
    std::optional<std::size_t> value_violation;
    bool transplant_subset = true;         // myopic T set within robust T set
    std::optional<std::size_t> subset_violation;
    bool limits_applicable = false;        // both policies are control limit
    std::optional<std::size_t> robust_limit;   // canonical row index
    std::optional<std::size_t> myopic_limit;
    bool limit_order = true;               // robust limit <= myopic limit

    bool ok() const { return values_dominated && transplant_subset && limit_order; }
};

DominanceReport compare_robust_myopic(const ValidatedModel& model, const AmbiguitySpec& ambiguity,
                                      const SolveOptions& opts = {});
DominanceReport compare_solutions(const Solution& robust, const Solution& myopic);

// ---------------------------------------------------------------------------
// Risk-sensitive model with exponential utility u(x) = 1 - exp(-gamma x)
// ---------------------------------------------------------------------------

struct RiskSpec {
    double gamma = 1.0;
    /// Post-transplant lifetime law J(j|h,k) on {0..J}, indexed [h][k][j].
    /// Only live patient rows and offer columns are read.
    std::vector<std::vector<std::vector<double>>> lifetime;

    void check(const DiscreteModelSpec& spec) const;
};

struct CertaintyEquivalent {
    double value = 0.0;
    bool saturated = false;
};

/// u^{-1}(sum p u(x)) = -(1/gamma) log sum p exp(-gamma x), evaluated around
/// the minimum outcome so it stays finite for large gamma * x.
CertaintyEquivalent certainty_equivalent(std::span<const double> values, std::span<const double> probs, double gamma);

struct RiskSolution {
    ValueFunction values;
    Policy policy;
    bool diverged = false;
};

/// V(h,k) = max{CE of post-transplant lifetime, CE of 1 + V(h',k')}. The
/// recursion is undiscounted; the model's wait rewards must all be 1.
RiskSolution risk_sensitive_value_iteration(const ValidatedModel& model, const RiskSpec& risk,
                                            const SolveOptions& opts = {});

/// Same recursion with linear utility (the gamma -> 0 limit).
RiskSolution lifetime_value_iteration(const ValidatedModel& model, const RiskSpec& risk, const SolveOptions& opts = {});

/// Base model with unit wait reward, expected post-transplant lifetime as the
/// transplant reward, and discount 1. Solvable by brute_force_optimal.
DiscreteModelSpec risk_neutral_lifetime_spec(const ValidatedModel& model, const RiskSpec& risk);

}  // namespace omdp
