#pragma once

#include "omdp/model.hpp"

#include <optional>

namespace omdp {

/// Maximal run of one action along an axis, [first, last] inclusive.
struct Interval {
    Action action = Action::None;
    std::size_t first = 0;
    std::size_t last = 0;

    bool operator==(const Interval&) const = default;
};

/// Why a slice is not a control-limit slice: `action` occupies two disjoint
/// runs `first` and `second` in slice `slice`.
struct StructureWitness {
    std::size_t slice = 0;
    Action action = Action::None;
    Interval first;
    Interval second;
};

/// Control-limit structure along one axis of an ActionGrid. Slices are the
/// fixed coordinate (columns for patient-based, rows for organ-based).
struct AxisReport {
    bool is_control_limit = true;
    std::vector<std::vector<Interval>> intervals;  // per slice, in axis order
    /// Patient-based: first row taking a transplant action (rows if none).
    /// Organ-based: last column taking a transplant action, nullopt if none.
    std::vector<std::optional<std::size_t>> limits;
    std::optional<StructureWitness> witness;
};

/// Patient-based: for each organ column, each action holds on one run of rows.
AxisReport extract_patient_control_limits(const ActionGrid& grid);

/// Organ-based: for each patient row, each action holds on one run of columns.
AxisReport extract_organ_control_limits(const ActionGrid& grid);

/// Rebuild the grid from per-slice intervals.
ActionGrid reconstruct_patient(const AxisReport& report, std::size_t rows, std::size_t cols);
ActionGrid reconstruct_organ(const AxisReport& report, std::size_t rows, std::size_t cols);

struct Am2roReport {
    bool holds = true;
    /// Per row: last column taking T_D (nullopt if none) and the action held
    /// on every column after it (nullopt if the row is all T_D).
    std::vector<std::optional<std::size_t>> limits;
    std::vector<std::optional<Action>> tail_action;
    std::optional<std::size_t> witness_row;
};

struct Am3rReport {
    bool holds = true;
    /// Per column: last row taking W (nullopt if none).
    std::vector<std::optional<std::size_t>> limits;
    std::optional<std::size_t> witness_column;
    Am2roReport am2ro;
    std::size_t region_count = 0;
    /// Some action's cells split into more than one connected region.
    bool disconnected = false;
};

/// For every row: T_D iff column <= K*(h), and a constant action beyond K*(h).
Am2roReport check_am2ro(const ActionGrid& grid);

/// For every column: W iff row <= H*(k); additionally AM2RO.
Am3rReport check_am3r(const ActionGrid& grid);

ActionGrid reconstruct_am2ro(const Am2roReport& report, std::size_t rows, std::size_t cols);

struct Region {
    std::size_t id = 0;
    Action action = Action::None;
    std::vector<std::pair<std::size_t, std::size_t>> cells;  // (row, col), row-major
};

/// 4-neighbour connected components of equal-action cells. Region ids follow
/// the row-major position of each region's first cell.
std::vector<Region> region_connectivity(const ActionGrid& grid);

/// Region id per cell, row-major.
std::vector<std::size_t> region_labels(const ActionGrid& grid, const std::vector<Region>& regions);

struct StructureReport {
    AxisReport patient_based;
    AxisReport organ_based;
    std::optional<Am2roReport> am2ro;  // Combined only
    std::optional<Am3rReport> am3r;    // Combined only
    std::vector<Region> regions;
};

StructureReport analyze_structure(const ActionGrid& grid, bool three_action);

/// Counterexample and example geometries.
ActionGrid split_wait_policy();  ///< patient-based holds, organ-based fails
ActionGrid disconnected_policy();  ///< both 1-D checks hold, one action disconnected
ActionGrid three_region_policy();  ///< AM3R with three connected regions

/// Two-action grid with T in cells where col <= limit[row] (limit < 0: none).
ActionGrid grid_from_organ_limits(const std::vector<long>& limit, std::size_t cols);

}  // namespace omdp
