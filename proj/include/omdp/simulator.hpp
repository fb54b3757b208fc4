#pragma once

#include "omdp/continuous.hpp"
#include "omdp/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace omdp {

/// splitmix64 finalizer applied to master + (index + 1) * golden ratio.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct Cell {
    std::size_t regime = 0;
    std::size_t h = 0;
    std::size_t k = 0;
    bool operator==(const Cell&) const = default;
};

struct TrajectoryStep {
    Cell cell;
    Action action = Action::None;
    double reward = 0.0;  // discounted contribution of this epoch
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::vector<TrajectoryStep> steps;
    std::optional<std::size_t> tau;  // transplant epoch; empty on death or truncation
    double reward = 0.0;
    bool died = false;
    bool truncated = false;
};

struct EvalEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t truncated = 0;

    bool covers(double x) const { return ci_low <= x && x <= ci_high; }
};

constexpr std::size_t kMaxEpochs = 1000000;

TrajectoryRecord simulate_trajectory(const ValidatedModel& model, const Policy& policy, Cell start, std::uint64_t seed);

/// Recompute sum_{t<tau} beta^t r + beta^tau R from the stored path.
double recompute_reward(const ValidatedModel& model, const TrajectoryRecord& record);

EvalEstimate estimate_policy_value(const ValidatedModel& model, const Policy& policy, Cell start, std::size_t n,
                                   std::uint64_t seed);

/// Mean, SE and 95% CI of samples, using a pairwise reduction.
EvalEstimate summarize(const std::vector<double>& samples);

/// Exact value of a stationary policy from the induced linear system.
ValueFunction evaluate_policy_exact(const ValidatedModel& model, const Policy& policy);

struct BruteForceResult {
    ValueFunction values;
    Policy policy;
    std::size_t policies = 0;
};

constexpr std::size_t kBruteForceCells = 12;
constexpr std::size_t kBruteForceActions = 3;

/// Enumerate every stationary policy and evaluate each exactly. Throws
/// std::invalid_argument beyond 12 cells with a choice or 3 actions per cell.
BruteForceResult brute_force_optimal(const ValidatedModel& model);

/// Acceptance threshold lambda at arrival j and time t: accept iff k > lambda / beta(t).
using ThresholdRule = std::function<double(std::size_t j, double t)>;

ThresholdRule rule_from_thresholds(std::vector<double> lambda);
ThresholdRule rule_from_curve(ThresholdCurve curve);

/// Monte Carlo estimate of the expected discounted offer value collected from
/// time 0 (or U_0), starting alive with no offer in hand.
EvalEstimate continuous_time_simulate(const ContinuousModelSpec& spec, const ThresholdRule& rule, std::size_t n,
                                      std::uint64_t seed);

}  // namespace omdp
