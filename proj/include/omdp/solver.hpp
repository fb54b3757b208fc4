#pragma once

#include "omdp/model.hpp"

#include <functional>

namespace omdp {

enum class TieBreak { PreferWait, PreferTransplant };

struct SolveOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 100000;
    TieBreak tie_break = TieBreak::PreferWait;

    void check() const;
};

struct Solution {
    ValueFunction values;
    Policy policy;
};

struct ActionValue {
    Action action;
    double value;
};

/// Q-values of every legal action at a live cell, given values V.
std::vector<ActionValue> action_values(const ValidatedModel& model, const ValueFunction& V, std::size_t regime,
                                       std::size_t h, std::size_t k);

/// V(h) = sum_k V(h,k) K(k|h) for every regime and patient state.
std::vector<double> marginal_values(const ValidatedModel& model, const ValueFunction& V);

/// One application of the variant's Bellman operator. Death stays 0.
ValueFunction bellman_backup(const ValidatedModel& model, const ValueFunction& V);

/// Best action per cell; actions within a relative 1e-12 of the maximum are
/// ties and are resolved by `tie_break`.
Policy greedy_policy(const ValidatedModel& model, const ValueFunction& V, TieBreak tie_break);

/// Value iteration to a sup-norm Bellman residual of opts.tolerance. A run
/// that hits max_iterations returns its last iterate with converged = false.
Solution solve_value_iteration(const ValidatedModel& model, const SolveOptions& opts = {});

/// One-dimensional living-donor chain: V(h) = max{R_LD(h), r(h) + beta sum V(h') H(h'|h)}.
/// The returned layout has a single (no-offer) organ column.
Solution solve_living_donor(const ValidatedModel& model, const SolveOptions& opts = {});

/// Pick the tie-broken best among candidate (action, value) pairs.
Action select_action(const std::vector<ActionValue>& q, TieBreak tie_break);

/// Continuous-state analog on (0, h_max] x (0, k_max], larger is better on
/// both axes. Health transitions are described by a conditional CDF.
struct AnalogGridSpec {
    double h_max = 1.0;
    double k_max = 1.0;
    std::size_t h_cells = 10;
    std::size_t k_cells = 10;
    /// P(h_next <= x | h). Mass at or below 0 is death; mass above h_max
    /// folds into the top cell.
    std::function<double(double x, double h)> transition_cdf;
    /// Offer quality CDF on (0, k_max].
    std::function<double(double k)> offer_cdf;
    /// Probability the transplant succeeds.
    std::function<double(double h, double k)> success_prob;
    double bonus = 1.0;          // B
    double living_reward = 1.0;  // u
    double discount = 0.9;
};

/// Piecewise-constant discretization onto the cell grid. Cell i covers
/// (i*dh, (i+1)*dh]; the transition law is taken at the cell midpoint.
DiscreteModelSpec discretize_analog(const AnalogGridSpec& grid);

/// k^c per patient cell: lower edge of the worst accepted organ cell
/// (k_max when nothing is accepted), indexed by patient cell.
std::vector<double> analog_control_limit(const Policy& policy, const AnalogGridSpec& grid);

}  // namespace omdp
