#include "omdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace omdp {

namespace {

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string idx(std::string_view base, std::size_t i) {
    return std::string(base) + "[" + std::to_string(i) + "]";
}

const char* slot_name(const DiscreteModelSpec& spec, std::size_t slot) {
    if (spec.variant == Variant::Dialysis) return slot == kWaitSlot ? "medication" : "dialysis";
    return "wait";
}

class Checker {
public:
    std::vector<Violation> out;

    void fail(std::string path, std::string message) { out.push_back({std::move(path), std::move(message)}); }

    void stochastic_rows(const Matrix& m, const std::string& path, const DiscreteModelSpec& spec, bool skip_death) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            if (skip_death && !spec.live(i)) continue;
            double sum = 0.0;
            bool finite = true;
            for (std::size_t j = 0; j < m.cols; ++j) {
                double p = m(i, j);
                if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
                    fail(idx(path, i) + "[" + std::to_string(j) + "]",
                         "probability " + num(p) + " outside [0,1] at patient state " + std::to_string(i));
                    finite = false;
                }
                sum += p;
            }
            if (finite && std::abs(sum - 1.0) > kRowSumTolerance)
                fail(idx(path, i), "row sum " + num(sum) + " at patient state " + std::to_string(i));
        }
    }

    void nonnegative(std::span<const double> v, const std::string& path) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!std::isfinite(v[i]) || v[i] < 0.0) fail(idx(path, i), "reward " + num(v[i]) + " is negative or not finite");
    }
};

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows ? init.begin()->size() : 0;
    data.reserve(rows * cols);
    for (const auto& r : init) {
        if (r.size() != cols) throw std::invalid_argument("ragged matrix initializer");
        data.insert(data.end(), r.begin(), r.end());
    }
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Base: return "base";
        case Variant::LivingDonor: return "living_donor";
        case Variant::Combined: return "combined";
        case Variant::Dialysis: return "dialysis";
        case Variant::ContinuousAnalog: return "continuous_analog";
    }
    return "?";
}

std::string_view to_string(Orientation o) {
    return o == Orientation::LargerIsWorse ? "larger_is_worse" : "larger_is_better";
}

std::string_view to_string(Action a) {
    switch (a) {
        case Action::None: return "-";
        case Action::Wait: return "W";
        case Action::Transplant: return "T";
        case Action::TransplantLiving: return "T_LD";
        case Action::Dialysis: return "D";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    for (auto v : {Variant::Base, Variant::LivingDonor, Variant::Combined, Variant::Dialysis, Variant::ContinuousAnalog})
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

Orientation parse_orientation(std::string_view s) {
    if (s == "larger_is_worse") return Orientation::LargerIsWorse;
    if (s == "larger_is_better") return Orientation::LargerIsBetter;
    throw std::invalid_argument("unknown orientation '" + std::string(s) + "'");
}

Action parse_action(std::string_view s) {
    if (s == "W" || s == "M") return Action::Wait;
    if (s == "T" || s == "T_D") return Action::Transplant;
    if (s == "T_LD") return Action::TransplantLiving;
    if (s == "D") return Action::Dialysis;
    if (s == "-") return Action::None;
    throw std::invalid_argument("unknown action '" + std::string(s) + "'");
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error([&] {
          std::string msg = "model validation failed";
          for (const auto& v : violations) msg += "\n  " + v.path + ": " + v.message;
          return msg;
      }()),
      violations_(std::move(violations)) {}

std::variant<ValidatedModel, std::vector<Violation>> validate_model(DiscreteModelSpec spec) {
    Checker c;
    const std::size_t H = spec.patient.count;
    const std::size_t K = spec.organ.count;

    if (!(spec.discount > 0.0 && spec.discount <= 1.0))
        c.fail("discount", "discount " + num(spec.discount) + " outside (0,1]");
    if (H == 0) c.fail("patient_states.count", "at least the death state is required");
    if (K == 0) c.fail("organ_states.count", "at least the no-offer state is required");
    if (H && spec.patient.reserved >= H)
        c.fail("patient_states.death", "death index " + std::to_string(spec.patient.reserved) + " out of range");
    if (K && spec.organ.reserved >= K)
        c.fail("organ_states.no_offer", "no-offer index " + std::to_string(spec.organ.reserved) + " out of range");
    if (!c.out.empty()) return c.out;

    const std::size_t slots = spec.regimes() == 2 ? 2 : 1;
    if (spec.transition.size() != slots)
        c.fail("transition", "expected " + std::to_string(slots) + " transition matrices, got " +
                                 std::to_string(spec.transition.size()));
    if (spec.wait_reward.size() != slots)
        c.fail("wait_reward", "expected " + std::to_string(slots) + " wait reward vectors, got " +
                                  std::to_string(spec.wait_reward.size()));

    for (std::size_t a = 0; a < spec.transition.size(); ++a) {
        const Matrix& m = spec.transition[a];
        std::string path = std::string("transition.") + slot_name(spec, a);
        if (m.rows != H || m.cols != H) {
            c.fail(path, "shape " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ", expected " +
                             std::to_string(H) + "x" + std::to_string(H));
            continue;
        }
        c.stochastic_rows(m, path, spec, false);
        if (m(spec.death(), spec.death()) != 1.0)
            c.fail(idx(path, spec.death()), "death state is not absorbing");
    }

    if (spec.offer_prob.rows != H || spec.offer_prob.cols != K)
        c.fail("offer_prob", "shape " + std::to_string(spec.offer_prob.rows) + "x" + std::to_string(spec.offer_prob.cols) +
                                 ", expected " + std::to_string(H) + "x" + std::to_string(K));
    else
        c.stochastic_rows(spec.offer_prob, "offer_prob", spec, false);

    for (std::size_t a = 0; a < spec.wait_reward.size(); ++a) {
        const auto& r = spec.wait_reward[a];
        std::string path = std::string("wait_reward.") + slot_name(spec, a);
        if (r.size() != H) {
            c.fail(path, "length " + std::to_string(r.size()) + ", expected " + std::to_string(H));
            continue;
        }
        c.nonnegative(r, path);
        if (r[spec.death()] != 0.0) c.fail(idx(path, spec.death()), "reward at death is " + num(r[spec.death()]) + ", must be 0");
    }

    const Matrix& R = spec.transplant_reward;
    if (R.rows != H || R.cols != K) {
        c.fail("transplant_reward", "shape " + std::to_string(R.rows) + "x" + std::to_string(R.cols) + ", expected " +
                                        std::to_string(H) + "x" + std::to_string(K));
    } else {
        for (std::size_t h = 0; h < H; ++h) {
            c.nonnegative(R.row(h), idx("transplant_reward", h));
            if (!spec.live(h))
                for (std::size_t k = 0; k < K; ++k)
                    if (R(h, k) != 0.0)
                        c.fail(idx(idx("transplant_reward", h), k), "reward at death is " + num(R(h, k)) + ", must be 0");
        }
    }

    const bool needs_ld = spec.variant == Variant::LivingDonor || spec.variant == Variant::Combined;
    if (needs_ld && !spec.living_donor)
        c.fail("living_donor", "living donor required for " + std::string(to_string(spec.variant)));
    if (!needs_ld && spec.living_donor)
        c.fail("living_donor", "living donor forbidden for " +
                                   std::string(spec.variant == Variant::Base ? "Base" : to_string(spec.variant)));
    if (needs_ld && spec.living_donor) {
        const auto& ld = *spec.living_donor;
        if (ld.organ >= K) c.fail("living_donor.organ", "organ index " + std::to_string(ld.organ) + " out of range");
        if (ld.reward.size() != H) {
            c.fail("living_donor.reward", "length " + std::to_string(ld.reward.size()) + ", expected " + std::to_string(H));
        } else {
            c.nonnegative(ld.reward, "living_donor.reward");
            if (ld.reward[spec.death()] != 0.0)
                c.fail(idx("living_donor.reward", spec.death()), "reward at death must be 0");
        }
    }

    if (!c.out.empty()) return c.out;
    return ValidatedModel(std::move(spec));
}

ValidatedModel validated(DiscreteModelSpec spec) {
    auto result = validate_model(std::move(spec));
    if (auto* errors = std::get_if<std::vector<Violation>>(&result)) throw ValidationError(std::move(*errors));
    return std::get<ValidatedModel>(std::move(result));
}

Layout layout_of(const DiscreteModelSpec& spec) { return Layout{spec.regimes(), spec.patient, spec.organ}; }

ValueFunction zero_values(const Layout& layout) {
    ValueFunction v;
    v.layout = layout;
    v.values.assign(layout.cells(), 0.0);
    v.marginal.assign(layout.regimes * layout.patient.count, 0.0);
    return v;
}

ActionGrid ActionGrid::parse(const std::vector<std::string>& rows) {
    ActionGrid g;
    g.rows = rows.size();
    for (const auto& line : rows) {
        std::vector<Action> row;
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && line[pos] == ' ') ++pos;
            if (pos == line.size()) break;
            std::size_t end = line.find(' ', pos);
            if (end == std::string::npos) end = line.size();
            row.push_back(parse_action(std::string_view(line).substr(pos, end - pos)));
            pos = end;
        }
        if (g.cols == 0) g.cols = row.size();
        if (row.size() != g.cols) throw std::invalid_argument("ragged action grid");
        g.cells.insert(g.cells.end(), row.begin(), row.end());
    }
    return g;
}

namespace {

std::vector<std::size_t> canonical_order(const Axis& axis) {
    std::vector<std::size_t> order;
    order.reserve(axis.count);
    for (std::size_t i = 0; i < axis.count; ++i)
        if (i != axis.reserved) order.push_back(i);
    if (axis.orientation == Orientation::LargerIsBetter) std::reverse(order.begin(), order.end());
    if (axis.count) order.push_back(axis.reserved);
    return order;
}

}  // namespace

ActionGrid Policy::canonical_grid(std::size_t regime) const {
    auto rows = canonical_order(layout.patient);
    auto cols = canonical_order(layout.organ);
    rows.pop_back();
    // A no-offer-only axis (living-donor chains) keeps its single column.
    if (cols.size() > 1) cols.pop_back();
    ActionGrid g(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) g(i, j) = at(regime, rows[i], cols[j]);
    return g;
}

std::vector<Action> legal_actions(const DiscreteModelSpec& spec, std::size_t regime, std::size_t k) {
    std::vector<Action> acts;
    const bool offer = spec.has_offer(k);
    switch (spec.variant) {
        case Variant::Base:
        case Variant::ContinuousAnalog:
            acts.push_back(Action::Wait);
            if (offer) acts.push_back(Action::Transplant);
            break;
        case Variant::LivingDonor:
            acts = {Action::Wait, Action::TransplantLiving};
            break;
        case Variant::Combined:
            acts = {Action::Wait, Action::TransplantLiving};
            if (offer) acts.push_back(Action::Transplant);
            break;
        case Variant::Dialysis:
            if (regime == 0) acts.push_back(Action::Wait);
            acts.push_back(Action::Dialysis);
            if (offer) acts.push_back(Action::Transplant);
            break;
    }
    return acts;
}

bool is_legal(const DiscreteModelSpec& spec, std::size_t regime, std::size_t h, std::size_t k, Action a) {
    if (!spec.live(h)) return a == Action::None;
    auto acts = legal_actions(spec, regime, k);
    return std::find(acts.begin(), acts.end(), a) != acts.end();
}

void check_policy(const DiscreteModelSpec& spec, const Policy& policy) {
    if (policy.layout != layout_of(spec)) throw std::invalid_argument("policy shape does not match the model");
    for (std::size_t g = 0; g < spec.regimes(); ++g)
        for (std::size_t h = 0; h < spec.patient.count; ++h)
            for (std::size_t k = 0; k < spec.organ.count; ++k)
                if (!is_legal(spec, g, h, k, policy.at(g, h, k)))
                    throw std::invalid_argument("illegal action " + std::string(to_string(policy.at(g, h, k))) +
                                                " at regime " + std::to_string(g) + ", patient " + std::to_string(h) +
                                                ", organ " + std::to_string(k));
}

IfrResult check_ifr(const Matrix& m, Orientation orientation) {
    IfrResult res;
    const std::size_t n = m.rows, c = m.cols;
    // Under LargerIsBetter the order is the mirror image: reverse both axes.
    auto at = [&](std::size_t i, std::size_t j) {
        return orientation == Orientation::LargerIsWorse ? m(i, j) : m(n - 1 - i, c - 1 - j);
    };
    std::vector<double> upper(c + 1, 0.0), lower(c + 1, 0.0);
    auto tails = [&](std::size_t i, std::vector<double>& t) {
        t[c] = 0.0;
        for (std::size_t j = c; j-- > 0;) t[j] = t[j + 1] + at(i, j);
    };
    for (std::size_t i = 0; i + 1 < n; ++i) {
        tails(i, upper);
        tails(i + 1, lower);
        for (std::size_t l = 1; l < c; ++l) {
            if (upper[l] > lower[l] + kOrderingTolerance) {
                res.holds = false;
                std::size_t row = orientation == Orientation::LargerIsWorse ? i : n - 2 - i;
                std::size_t tail = orientation == Orientation::LargerIsWorse ? l : c - 1 - l;
                res.witness = IfrWitness{row, tail, upper[l], lower[l]};
                return res;
            }
        }
    }
    return res;
}

IndexMap canonical_index_map(const DiscreteModelSpec& spec) {
    return {canonical_order(spec.patient), canonical_order(spec.organ)};
}

DiscreteModelSpec canonicalize_orientation(const DiscreteModelSpec& spec) {
    const IndexMap map = canonical_index_map(spec);
    const auto& P = map.patient;
    const auto& O = map.organ;
    DiscreteModelSpec out = spec;
    out.patient = {spec.patient.count, spec.patient.count - 1, Orientation::LargerIsWorse};
    out.organ = {spec.organ.count, spec.organ.count - 1, Orientation::LargerIsWorse};
    for (std::size_t a = 0; a < spec.transition.size(); ++a) {
        const Matrix& src = spec.transition[a];
        if (src.rows != P.size() || src.cols != P.size()) continue;
        Matrix& dst = out.transition[a];
        for (std::size_t i = 0; i < P.size(); ++i)
            for (std::size_t j = 0; j < P.size(); ++j) dst(i, j) = src(P[i], P[j]);
    }
    auto permute_matrix = [&](const Matrix& src, Matrix& dst) {
        if (src.rows != P.size() || src.cols != O.size()) return;
        for (std::size_t i = 0; i < P.size(); ++i)
            for (std::size_t j = 0; j < O.size(); ++j) dst(i, j) = src(P[i], O[j]);
    };
    permute_matrix(spec.offer_prob, out.offer_prob);
    permute_matrix(spec.transplant_reward, out.transplant_reward);
    for (std::size_t a = 0; a < spec.wait_reward.size(); ++a) {
        if (spec.wait_reward[a].size() != P.size()) continue;
        for (std::size_t i = 0; i < P.size(); ++i) out.wait_reward[a][i] = spec.wait_reward[a][P[i]];
    }
    if (spec.living_donor && spec.living_donor->reward.size() == P.size()) {
        auto& ld = *out.living_donor;
        for (std::size_t i = 0; i < P.size(); ++i) ld.reward[i] = spec.living_donor->reward[P[i]];
        ld.organ = static_cast<std::size_t>(std::find(O.begin(), O.end(), spec.living_donor->organ) - O.begin());
    }
    return out;
}

ValidatedModel canonicalize_orientation(const ValidatedModel& model) {
    return validated(canonicalize_orientation(model.spec()));
}

MonotoneReport check_monotone_rewards(const ValidatedModel& model) {
    const DiscreteModelSpec& spec = model.spec();
    const IndexMap map = canonical_index_map(spec);
    const DiscreteModelSpec c = canonicalize_orientation(spec);
    const std::size_t H = c.patient.count - 1;  // live states in canonical order
    const std::size_t K = c.organ.count - 1;    // offer states
    MonotoneReport rep;

    auto vector_check = [&](const std::vector<double>& r, const std::string& name) {
        for (std::size_t i = 0; i + 1 < H; ++i)
            if (r[i + 1] > r[i] + kOrderingTolerance) {
                rep.violations.push_back({name, "patient", map.patient[i], map.patient[i + 1], 0, r[i], r[i + 1]});
                return;
            }
    };
    for (std::size_t a = 0; a < c.wait_reward.size(); ++a)
        vector_check(c.wait_reward[a], c.variant == Variant::Dialysis
                                           ? (a == kWaitSlot ? "wait_reward.medication" : "wait_reward.dialysis")
                                           : "wait_reward");
    if (c.living_donor) vector_check(c.living_donor->reward, "living_donor.reward");

    const Matrix& R = c.transplant_reward;
    [&] {
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < K; ++j) {
                if (i + 1 < H && R(i + 1, j) > R(i, j) + kOrderingTolerance) {
                    rep.violations.push_back({"transplant_reward", "patient", map.patient[i], map.patient[i + 1],
                                              map.organ[j], R(i, j), R(i + 1, j)});
                    return;
                }
                if (j + 1 < K && R(i, j + 1) > R(i, j) + kOrderingTolerance) {
                    rep.violations.push_back({"transplant_reward", "organ", map.organ[j], map.organ[j + 1],
                                              map.patient[i], R(i, j), R(i, j + 1)});
                    return;
                }
            }
    }();
    rep.monotone = rep.violations.empty();
    return rep;
}

bool satisfies_structural_conditions(const ValidatedModel& model) {
    const DiscreteModelSpec c = canonicalize_orientation(model.spec());
    for (const auto& m : c.transition)
        if (!check_ifr(m).holds) return false;
    Matrix offers(c.patient.count - 1, c.organ.count);
    for (std::size_t h = 0; h + 1 < c.patient.count; ++h)
        for (std::size_t k = 0; k < c.organ.count; ++k) offers(h, k) = c.offer_prob(h, k);
    if (!check_ifr(offers).holds) return false;
    return check_monotone_rewards(model).monotone;
}

}  // namespace omdp
