#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace omdp {

constexpr double kRowSumTolerance = 1e-9;
constexpr double kOrderingTolerance = 1e-12;

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

enum class Variant { Base, LivingDonor, Combined, Dialysis, ContinuousAnalog };
enum class Orientation { LargerIsWorse, LargerIsBetter };

/// Wait is the generic non-transplant action (medication in the dialysis model).
enum class Action : std::uint8_t { None, Wait, Transplant, TransplantLiving, Dialysis };

std::string_view to_string(Variant v);
std::string_view to_string(Orientation o);
std::string_view to_string(Action a);
Variant parse_variant(std::string_view s);
Orientation parse_orientation(std::string_view s);
Action parse_action(std::string_view s);

/// One state axis. `reserved` is the death index (patient axis) or the
/// no-offer index (organ axis).
struct Axis {
    std::size_t count = 0;
    std::size_t reserved = 0;
    Orientation orientation = Orientation::LargerIsWorse;

    bool operator==(const Axis&) const = default;
};

struct LivingDonorOption {
    std::size_t organ = 0;
    std::vector<double> reward;  // R_LD(h, k_LD) per patient state

    bool operator==(const LivingDonorOption&) const = default;
};

/// Full parametrization of a discrete-time acceptance model.
///
/// `transition` and `wait_reward` hold one entry per non-transplant action:
/// a single entry (wait) for every variant except Dialysis, which carries
/// {medication, dialysis}. For ContinuousAnalog, `wait_reward` is the
/// per-epoch living reward u and `transplant_reward` is p(h,k)*B.
struct DiscreteModelSpec {
    Variant variant = Variant::Base;
    Axis patient;
    Axis organ;
    std::vector<Matrix> transition;
    Matrix offer_prob;
    std::vector<std::vector<double>> wait_reward;
    Matrix transplant_reward;
    std::optional<LivingDonorOption> living_donor;
    double discount = 0.9;

    std::size_t death() const { return patient.reserved; }
    std::size_t no_offer() const { return organ.reserved; }
    bool live(std::size_t h) const { return h != patient.reserved; }
    bool has_offer(std::size_t k) const { return k != organ.reserved; }
    std::size_t regimes() const { return variant == Variant::Dialysis ? 2 : 1; }

    bool operator==(const DiscreteModelSpec&) const = default;
};

/// Index of each non-transplant action inside `transition` / `wait_reward`.
constexpr std::size_t kWaitSlot = 0;
constexpr std::size_t kDialysisSlot = 1;

struct Violation {
    std::string path;
    std::string message;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<Violation> violations);
    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

/// A spec that passed validate_model. Immutable.
class ValidatedModel {
public:
    const DiscreteModelSpec& spec() const { return spec_; }
    const DiscreteModelSpec* operator->() const { return &spec_; }

private:
    friend std::variant<ValidatedModel, std::vector<Violation>> validate_model(DiscreteModelSpec spec);
    explicit ValidatedModel(DiscreteModelSpec spec) : spec_(std::move(spec)) {}
    DiscreteModelSpec spec_;
};

std::variant<ValidatedModel, std::vector<Violation>> validate_model(DiscreteModelSpec spec);

/// validate_model, throwing ValidationError on failure.
ValidatedModel validated(DiscreteModelSpec spec);

/// Shape shared by policies and value functions.
struct Layout {
    std::size_t regimes = 1;
    Axis patient;
    Axis organ;

    std::size_t cells() const { return regimes * patient.count * organ.count; }
    std::size_t index(std::size_t regime, std::size_t h, std::size_t k) const {
        return (regime * patient.count + h) * organ.count + k;
    }
    bool operator==(const Layout&) const = default;
};

Layout layout_of(const DiscreteModelSpec& spec);

/// Two-dimensional action grid over live patient rows and offer columns,
/// in canonical order (row 0 = healthiest, column 0 = best organ).
struct ActionGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Action> cells;

    ActionGrid() = default;
    ActionGrid(std::size_t r, std::size_t c, Action fill = Action::Wait) : rows(r), cols(c), cells(r * c, fill) {}
    static ActionGrid parse(const std::vector<std::string>& rows);

    Action& operator()(std::size_t h, std::size_t k) { return cells[h * cols + k]; }
    Action operator()(std::size_t h, std::size_t k) const { return cells[h * cols + k]; }
    bool operator==(const ActionGrid&) const = default;
};

struct Policy {
    Layout layout;
    std::vector<Action> actions;

    Action at(std::size_t regime, std::size_t h, std::size_t k) const { return actions[layout.index(regime, h, k)]; }
    Action& at(std::size_t regime, std::size_t h, std::size_t k) { return actions[layout.index(regime, h, k)]; }

    /// Live x offer slice of one regime in canonical order. An organ axis
    /// holding only the no-offer index yields a single column.
    ActionGrid canonical_grid(std::size_t regime = 0) const;
    bool operator==(const Policy&) const = default;
};

struct ValueFunction {
    Layout layout;
    std::vector<double> values;    // per (regime, h, k)
    std::vector<double> marginal;  // per (regime, h): expectation over offers
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = true;

    double at(std::size_t regime, std::size_t h, std::size_t k) const { return values[layout.index(regime, h, k)]; }
    double& at(std::size_t regime, std::size_t h, std::size_t k) { return values[layout.index(regime, h, k)]; }
    double marginal_at(std::size_t regime, std::size_t h) const { return marginal[regime * layout.patient.count + h]; }
};

ValueFunction zero_values(const Layout& layout);

/// Actions a policy may take at a live cell.
std::vector<Action> legal_actions(const DiscreteModelSpec& spec, std::size_t regime, std::size_t k);
bool is_legal(const DiscreteModelSpec& spec, std::size_t regime, std::size_t h, std::size_t k, Action a);

/// Throws std::invalid_argument naming the first illegal cell.
void check_policy(const DiscreteModelSpec& spec, const Policy& policy);

struct IfrWitness {
    std::size_t row = 0;       // compared with row + 1
    std::size_t tail_start = 0;
    double upper_tail = 0.0;   // tail mass of `row`
    double lower_tail = 0.0;   // tail mass of `row + 1`
};

struct IfrResult {
    bool holds = true;
    std::optional<IfrWitness> witness;
};

/// Usual stochastic order between consecutive rows. Under LargerIsWorse every
/// tail sum sum_{j>=l} P(j|i) must be nondecreasing in i.
IfrResult check_ifr(const Matrix& matrix, Orientation orientation = Orientation::LargerIsWorse);

struct MonotoneViolation {
    std::string function;  // "wait_reward", "transplant_reward", "living_donor.reward"
    std::string axis;      // "patient" or "organ"
    std::size_t from = 0;  // original indices
    std::size_t to = 0;
    std::size_t fixed = 0; // other coordinate for matrix-valued rewards
    double from_value = 0.0;
    double to_value = 0.0;
};

struct MonotoneReport {
    bool monotone = true;
    std::vector<MonotoneViolation> violations;  // first violation per function
};

/// Rewards must not increase as health or organ quality worsens.
MonotoneReport check_monotone_rewards(const ValidatedModel& model);

/// Transition and offer matrices (live rows) are IFR and rewards are monotone,
/// all in canonical orientation.
bool satisfies_structural_conditions(const ValidatedModel& model);

/// Canonical index -> original index for both axes.
struct IndexMap {
    std::vector<std::size_t> patient;
    std::vector<std::size_t> organ;
};

IndexMap canonical_index_map(const DiscreteModelSpec& spec);

/// Larger index = worse on both axes; death and no-offer moved last.
DiscreteModelSpec canonicalize_orientation(const DiscreteModelSpec& spec);
ValidatedModel canonicalize_orientation(const ValidatedModel& model);

}  // namespace omdp
