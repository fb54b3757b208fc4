#include "omdp/structure.hpp"

#include <algorithm>
#include <stdexcept>

namespace omdp {

namespace {

bool is_transplant(Action a) { return a == Action::Transplant || a == Action::TransplantLiving; }

/// Scan one slice and collect maximal runs.
template <class At>
std::vector<Interval> runs(std::size_t n, At at) {
    std::vector<Interval> out;
    for (std::size_t i = 0; i < n; ++i) {
        Action a = at(i);
        if (!out.empty() && out.back().action == a)
            out.back().last = i;
        else
            out.push_back({a, i, i});
    }
    return out;
}

std::optional<StructureWitness> repeated_action(std::size_t slice, const std::vector<Interval>& iv) {
    for (std::size_t i = 0; i < iv.size(); ++i)
        for (std::size_t j = i + 1; j < iv.size(); ++j)
            if (iv[i].action == iv[j].action) return StructureWitness{slice, iv[i].action, iv[i], iv[j]};
    return std::nullopt;
}

template <class At>
AxisReport axis_report(std::size_t slices, std::size_t len, At at, bool patient_axis) {
    AxisReport rep;
    for (std::size_t s = 0; s < slices; ++s) {
        auto iv = runs(len, [&](std::size_t i) { return at(s, i); });
        if (rep.is_control_limit) {
            if (auto w = repeated_action(s, iv)) {
                rep.is_control_limit = false;
                rep.witness = w;
            }
        }
        std::optional<std::size_t> limit;
        if (patient_axis) {
            limit = len;
            for (const auto& run : iv)
                if (is_transplant(run.action)) {
                    limit = run.first;
                    break;
                }
        } else {
            for (const auto& run : iv)
                if (is_transplant(run.action)) limit = run.last;
        }
        rep.limits.push_back(limit);
        rep.intervals.push_back(std::move(iv));
    }
    return rep;
}

}  // namespace

AxisReport extract_patient_control_limits(const ActionGrid& g) {
    return axis_report(g.cols, g.rows, [&](std::size_t k, std::size_t h) { return g(h, k); }, true);
}

AxisReport extract_organ_control_limits(const ActionGrid& g) {
    return axis_report(g.rows, g.cols, [&](std::size_t h, std::size_t k) { return g(h, k); }, false);
}

ActionGrid reconstruct_patient(const AxisReport& report, std::size_t rows, std::size_t cols) {
    ActionGrid g(rows, cols, Action::None);
    for (std::size_t k = 0; k < cols && k < report.intervals.size(); ++k)
        for (const auto& iv : report.intervals[k])
            for (std::size_t h = iv.first; h <= iv.last; ++h) g(h, k) = iv.action;
    return g;
}

ActionGrid reconstruct_organ(const AxisReport& report, std::size_t rows, std::size_t cols) {
    ActionGrid g(rows, cols, Action::None);
    for (std::size_t h = 0; h < rows && h < report.intervals.size(); ++h)
        for (const auto& iv : report.intervals[h])
            for (std::size_t k = iv.first; k <= iv.last; ++k) g(h, k) = iv.action;
    return g;
}

Am2roReport check_am2ro(const ActionGrid& g) {
    Am2roReport rep;
    for (std::size_t h = 0; h < g.rows; ++h) {
        std::size_t prefix = 0;
        while (prefix < g.cols && g(h, prefix) == Action::Transplant) ++prefix;
        std::optional<std::size_t> limit = prefix ? std::optional<std::size_t>(prefix - 1) : std::nullopt;
        std::optional<Action> tail;
        bool ok = true;
        for (std::size_t k = prefix; k < g.cols; ++k) {
            if (!tail) tail = g(h, k);
            if (g(h, k) != *tail || g(h, k) == Action::Transplant) ok = false;
        }
        rep.limits.push_back(limit);
        rep.tail_action.push_back(tail);
        if (!ok && rep.holds) {
            rep.holds = false;
            rep.witness_row = h;
        }
    }
    return rep;
}

ActionGrid reconstruct_am2ro(const Am2roReport& rep, std::size_t rows, std::size_t cols) {
    ActionGrid g(rows, cols, Action::None);
    for (std::size_t h = 0; h < rows; ++h)
        for (std::size_t k = 0; k < cols; ++k) {
            const bool in_prefix = rep.limits[h] && k <= *rep.limits[h];
            g(h, k) = in_prefix ? Action::Transplant : rep.tail_action[h].value_or(Action::None);
        }
    return g;
}

Am3rReport check_am3r(const ActionGrid& g) {
    Am3rReport rep;
    for (std::size_t k = 0; k < g.cols; ++k) {
        std::size_t prefix = 0;
        while (prefix < g.rows && g(prefix, k) == Action::Wait) ++prefix;
        bool ok = true;
        for (std::size_t h = prefix; h < g.rows; ++h)
            if (g(h, k) == Action::Wait) ok = false;
        rep.limits.push_back(prefix ? std::optional<std::size_t>(prefix - 1) : std::nullopt);
        if (!ok && rep.holds) {
            rep.holds = false;
            rep.witness_column = k;
        }
    }
    rep.am2ro = check_am2ro(g);
    rep.holds = rep.holds && rep.am2ro.holds;

    const auto regions = region_connectivity(g);
    rep.region_count = regions.size();
    std::vector<Action> seen;
    for (const auto& r : regions) {
        if (std::find(seen.begin(), seen.end(), r.action) != seen.end()) rep.disconnected = true;
        seen.push_back(r.action);
    }
    return rep;
}

std::vector<Region> region_connectivity(const ActionGrid& g) {
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(g.rows * g.cols, unset);
    std::vector<Region> regions;
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t h = 0; h < g.rows; ++h)
        for (std::size_t k = 0; k < g.cols; ++k) {
            if (label[h * g.cols + k] != unset) continue;
            Region reg{regions.size(), g(h, k), {}};
            label[h * g.cols + k] = reg.id;
            stack.push_back({h, k});
            while (!stack.empty()) {
                auto [r, c] = stack.back();
                stack.pop_back();
                reg.cells.push_back({r, c});
                auto visit = [&](std::size_t rr, std::size_t cc) {
                    std::size_t i = rr * g.cols + cc;
                    if (label[i] == unset && g(rr, cc) == reg.action) {
                        label[i] = reg.id;
                        stack.push_back({rr, cc});
                    }
                };
                if (r > 0) visit(r - 1, c);
                if (r + 1 < g.rows) visit(r + 1, c);
                if (c > 0) visit(r, c - 1);
                if (c + 1 < g.cols) visit(r, c + 1);
            }
            std::sort(reg.cells.begin(), reg.cells.end());
            regions.push_back(std::move(reg));
        }
    return regions;
}

std::vector<std::size_t> region_labels(const ActionGrid& g, const std::vector<Region>& regions) {
    std::vector<std::size_t> label(g.rows * g.cols, 0);
    for (const auto& r : regions)
        for (auto [h, k] : r.cells) label[h * g.cols + k] = r.id;
    return label;
}

StructureReport analyze_structure(const ActionGrid& grid, bool three_action) {
    StructureReport rep;
    rep.patient_based = extract_patient_control_limits(grid);
    rep.organ_based = extract_organ_control_limits(grid);
    if (three_action) {
        rep.am3r = check_am3r(grid);
        rep.am2ro = rep.am3r->am2ro;
    }
    rep.regions = region_connectivity(grid);
    return rep;
}

ActionGrid split_wait_policy() {
    return ActionGrid::parse({
        "W W W W W W",
        "W W W W W W",
        "W W T T W W",
        "W T T T T W",
        "W T T T T W",
    });
}

ActionGrid disconnected_policy() {
    return ActionGrid::parse({
        "W W W W T T",
        "W W W W T T",
        "W W T_LD T_LD T_LD T_LD",
        "W W T_LD T_LD T_LD T_LD",
        "T T T_LD T_LD T_LD T_LD",
        "T T T_LD T_LD T_LD T_LD",
    });
}

ActionGrid three_region_policy() {
    return ActionGrid::parse({
        "T W W W W W",
        "T W W W W W",
        "T T W W W W",
        "T T T_LD T_LD T_LD T_LD",
        "T T T T_LD T_LD T_LD",
        "T T T T_LD T_LD T_LD",
    });
}

ActionGrid grid_from_organ_limits(const std::vector<long>& limit, std::size_t cols) {
    ActionGrid g(limit.size(), cols, Action::Wait);
    for (std::size_t h = 0; h < limit.size(); ++h)
        for (std::size_t k = 0; k < cols; ++k)
            if (static_cast<long>(k) <= limit[h]) g(h, k) = Action::Transplant;
    return g;
}

}  // namespace omdp
