#include "omdp/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace omdp {

namespace {

std::string join(const std::vector<Violation>& v) {
    std::string out = "invalid document:";
    for (const auto& x : v) out += "\n  " + x.path + ": " + x.message;
    return out;
}

/// Collects schema violations instead of stopping at the first one.
class Reader {
public:
    std::vector<Violation> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back({path, msg}); }

    const Json* get(const Json& obj, const std::string& key, const std::string& path, bool required = true) {
        if (!obj.is_object()) {
            fail(path, "expected an object");
            return nullptr;
        }
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(path + "/" + key, "missing required field");
            return nullptr;
        }
        return &*it;
    }

    double num(const Json& j, const std::string& path) {
        if (!j.is_number()) {
            fail(path, "expected a number");
            return 0.0;
        }
        return j.get<double>();
    }

    double num_field(const Json& obj, const std::string& key, const std::string& path, std::optional<double> def = {}) {
        const Json* j = get(obj, key, path, !def.has_value());
        return j ? num(*j, path + "/" + key) : def.value_or(0.0);
    }

    std::size_t index(const Json& j, const std::string& path) {
        if (!j.is_number_integer() || j.get<long long>() < 0) {
            fail(path, "expected a nonnegative integer");
            return 0;
        }
        return j.get<std::size_t>();
    }

    std::string str(const Json& j, const std::string& path) {
        if (!j.is_string()) {
            fail(path, "expected a string");
            return {};
        }
        return j.get<std::string>();
    }

    std::vector<double> vec(const Json& j, const std::string& path) {
        std::vector<double> out;
        if (!j.is_array()) {
            fail(path, "expected an array of numbers");
            return out;
        }
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(num(j[i], path + "/" + std::to_string(i)));
        return out;
    }

    Matrix matrix(const Json& j, const std::string& path) {
        if (!j.is_array() || j.empty()) {
            fail(path, "expected a nonempty array of rows");
            return {};
        }
        const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
        Matrix m(j.size(), cols);
        for (std::size_t i = 0; i < j.size(); ++i) {
            const std::string p = path + "/" + std::to_string(i);
            auto row = vec(j[i], p);
            if (j[i].is_array() && row.size() != cols) {
                fail(p, "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
                continue;
            }
            for (std::size_t c = 0; c < row.size() && c < cols; ++c) m(i, c) = row[c];
        }
        return m;
    }

    template <class F>
    auto guarded(const std::string& path, F f) -> decltype(f()) {
        try {
            return f();
        } catch (const std::invalid_argument& e) {
            fail(path, e.what());
            return decltype(f()){};
        }
    }
};

const std::set<std::string> kKnownSections = {"kind",         "name",        "description",       "variant",
                                              "discount",     "patient_states", "organ_states",   "transition",
                                              "offer_prob",   "wait_reward", "transplant_reward", "living_donor",
                                              "ambiguity",    "risk",        "analog",            "continuous"};

Axis parse_axis(Reader& r, const Json& doc, const std::string& key, const std::string& reserved) {
    Axis a;
    const Json* j = r.get(doc, key, "");
    if (!j) return a;
    const std::string p = "/" + key;
    if (const Json* c = r.get(*j, "count", p)) a.count = r.index(*c, p + "/count");
    if (const Json* d = r.get(*j, reserved, p)) a.reserved = r.index(*d, p + "/" + reserved);
    if (const Json* o = r.get(*j, "orientation", p, false)) {
        const std::string s = r.str(*o, p + "/orientation");
        a.orientation = r.guarded(p + "/orientation", [&] { return parse_orientation(s); });
    }
    return a;
}

/// Per-slot field: an array for single-slot variants, or an object keyed by slot name.
template <class T, class F>
std::vector<T> parse_slots(Reader& r, const Json& j, const std::string& path, Variant variant, F read) {
    std::vector<T> out;
    if (variant == Variant::Dialysis) {
        if (!j.is_object()) {
            r.fail(path, "dialysis models need an object with 'medication' and 'dialysis'");
            return out;
        }
        for (const char* slot : {"medication", "dialysis"})
            if (const Json* e = r.get(j, slot, path)) out.push_back(read(*e, path + "/" + slot));
        return out;
    }
    if (j.is_object()) {
        if (const Json* e = r.get(j, "wait", path)) out.push_back(read(*e, path + "/wait"));
    } else {
        out.push_back(read(j, path));
    }
    return out;
}

DiscreteModelSpec parse_discrete(Reader& r, const Json& doc) {
    DiscreteModelSpec s;
    if (const Json* v = r.get(doc, "variant", ""))
        s.variant = r.guarded("/variant", [&] { return parse_variant(r.str(*v, "/variant")); });
    s.discount = r.num_field(doc, "discount", "");
    s.patient = parse_axis(r, doc, "patient_states", "death");
    s.organ = parse_axis(r, doc, "organ_states", "no_offer");
    if (const Json* t = r.get(doc, "transition", ""))
        s.transition = parse_slots<Matrix>(r, *t, "/transition", s.variant,
                                           [&](const Json& j, const std::string& p) { return r.matrix(j, p); });
    if (const Json* o = r.get(doc, "offer_prob", "")) s.offer_prob = r.matrix(*o, "/offer_prob");
    if (const Json* w = r.get(doc, "wait_reward", ""))
        s.wait_reward = parse_slots<std::vector<double>>(r, *w, "/wait_reward", s.variant,
                                                         [&](const Json& j, const std::string& p) { return r.vec(j, p); });
    const bool needs_transplant = s.variant != Variant::LivingDonor;
    if (const Json* t = r.get(doc, "transplant_reward", "", needs_transplant))
        s.transplant_reward = r.matrix(*t, "/transplant_reward");
    else
        s.transplant_reward = Matrix(s.patient.count, s.organ.count);
    if (const Json* ld = r.get(doc, "living_donor", "", false)) {
        LivingDonorOption opt;
        if (const Json* o = r.get(*ld, "organ", "/living_donor")) opt.organ = r.index(*o, "/living_donor/organ");
        if (const Json* rw = r.get(*ld, "reward", "/living_donor")) opt.reward = r.vec(*rw, "/living_donor/reward");
        s.living_donor = opt;
    }
    return s;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

AnalogGridSpec parse_analog(Reader& r, const Json& j) {
    const std::string p = "/analog";
    AnalogGridSpec g;
    g.h_max = r.num_field(j, "h_max", p);
    g.k_max = r.num_field(j, "k_max", p);
    g.h_cells = std::size_t(r.num_field(j, "h_cells", p));
    g.k_cells = std::size_t(r.num_field(j, "k_cells", p));
    g.bonus = r.num_field(j, "bonus", p, 1.0);
    g.living_reward = r.num_field(j, "living_reward", p, 1.0);
    g.discount = r.num_field(j, "discount", p);
    const double drift = r.num_field(j, "drift", p, 0.0);
    const double vol = r.num_field(j, "volatility", p);
    if (!(vol > 0.0)) r.fail(p + "/volatility", "must be positive");
    std::vector<double> succ{1.0, 0.0, 0.0};
    if (const Json* s = r.get(j, "success", p, false)) {
        succ = r.vec(*s, p + "/success");
        if (succ.size() != 3) {
            r.fail(p + "/success", "expected [intercept, health slope, quality slope]");
            succ = {1.0, 0.0, 0.0};
        }
    }
    const double hm = g.h_max, km = g.k_max;
    g.transition_cdf = [drift, vol](double x, double h) { return normal_cdf((x - h - drift) / vol); };
    g.offer_cdf = [km](double k) { return std::clamp(k / km, 0.0, 1.0); };
    g.success_prob = [succ, hm, km](double h, double k) { return succ[0] + succ[1] * h / hm + succ[2] * k / km; };
    return g;
}

OfferDistribution parse_offers(Reader& r, const Json& j, const std::string& p) {
    const Json* f = r.get(j, "family", p);
    const std::string fam = f ? r.str(*f, p + "/family") : "";
    return r.guarded(p, [&]() -> OfferDistribution {
        if (fam == "uniform") return OfferDistribution::uniform(r.num_field(j, "low", p, 0.0), r.num_field(j, "high", p));
        if (fam == "finite") {
            const Json* v = r.get(j, "values", p);
            const Json* q = r.get(j, "probs", p);
            if (!v || !q) return OfferDistribution::uniform(0.0, 1.0);
            return OfferDistribution::finite(r.vec(*v, p + "/values"), r.vec(*q, p + "/probs"));
        }
        throw std::invalid_argument("unknown offer family '" + fam + "'");
    });
}

Lifetime parse_lifetime(Reader& r, const Json& j, const std::string& p) {
    const Json* f = r.get(j, "family", p);
    const std::string fam = f ? r.str(*f, p + "/family") : "";
    return r.guarded(p, [&]() -> Lifetime {
        if (fam == "exponential") return Lifetime::exponential(r.num_field(j, "rate", p));
        if (fam == "erlang") return Lifetime::erlang(unsigned(r.num_field(j, "shape", p)), r.num_field(j, "rate", p));
        if (fam == "weibull") return Lifetime::weibull(r.num_field(j, "shape", p), r.num_field(j, "scale", p));
        if (fam == "uniform") return Lifetime::uniform(r.num_field(j, "low", p, 0.0), r.num_field(j, "high", p));
        throw std::invalid_argument("unknown lifetime family '" + fam + "'");
    });
}

Interarrival parse_interarrival(Reader& r, const Json& j, const std::string& p) {
    const Json* f = r.get(j, "family", p);
    const std::string fam = f ? r.str(*f, p + "/family") : "";
    return r.guarded(p, [&]() -> Interarrival {
        if (fam == "deterministic") return Interarrival::deterministic(r.num_field(j, "gap", p));
        if (fam == "exponential") return Interarrival::exponential(r.num_field(j, "rate", p));
        if (fam == "erlang") return Interarrival::erlang(unsigned(r.num_field(j, "shape", p)), r.num_field(j, "rate", p));
        if (fam == "uniform") return Interarrival::uniform(r.num_field(j, "low", p, 0.0), r.num_field(j, "high", p));
        throw std::invalid_argument("unknown interarrival family '" + fam + "'");
    });
}

Arrivals parse_arrivals(Reader& r, const Json& j, const std::string& p) {
    const Json* t = r.get(j, "type", p);
    const std::string type = t ? r.str(*t, p + "/type") : "";
    if (type == "fixed") {
        FixedInstants f;
        if (const Json* ts = r.get(j, "times", p)) f.times = r.vec(*ts, p + "/times");
        if (const Json* as = r.get(j, "alphas", p, false)) f.alphas = r.vec(*as, p + "/alphas");
        return f;
    }
    if (type == "renewal") {
        RenewalArrivals a;
        if (const Json* h = r.get(j, "interarrival", p)) a.interarrival = parse_interarrival(r, *h, p + "/interarrival");
        return a;
    }
    if (type == "poisson") return PoissonArrivals{r.num_field(j, "rate", p)};
    if (type == "nonhomogeneous_poisson") {
        NonhomogeneousPoissonArrivals a;
        if (const Json* in = r.get(j, "intensity", p)) {
            const std::string ip = p + "/intensity";
            if (const Json* f = r.get(*in, "family", ip)) a.intensity.family = r.str(*f, ip + "/family");
            if (const Json* ps = r.get(*in, "params", ip)) a.intensity.params = r.vec(*ps, ip + "/params");
        }
        a.bound = r.num_field(j, "bound", p, 0.0);
        return a;
    }
    r.fail(p + "/type", "unknown arrival type '" + type + "'");
    return PoissonArrivals{};
}

ContinuousSection parse_continuous(Reader& r, const Json& j) {
    const std::string p = "/continuous";
    ContinuousSection c;
    if (const Json* o = r.get(j, "offers", p)) c.spec.offers = parse_offers(r, *o, p + "/offers");
    if (const Json* l = r.get(j, "lifetime", p, false)) c.spec.lifetime = parse_lifetime(r, *l, p + "/lifetime");
    if (const Json* a = r.get(j, "arrivals", p)) c.spec.arrivals = parse_arrivals(r, *a, p + "/arrivals");
    if (const Json* d = r.get(j, "discount", p, false)) {
        const std::string dp = p + "/discount";
        const Json* f = r.get(*d, "family", dp);
        const std::string fam = f ? r.str(*f, dp + "/family") : "constant";
        if (fam == "constant")
            c.spec.discount = DiscountFunction::constant(r.num_field(*d, "value", dp, 1.0));
        else if (fam == "exponential")
            c.spec.discount = DiscountFunction::exponential(r.num_field(*d, "rate", dp));
        else
            r.fail(dp + "/family", "unknown discount family '" + fam + "'");
    }
    if (const Json* t = r.get(j, "t_max", p, false)) c.t_max = r.num(*t, p + "/t_max");
    if (const Json* s = r.get(j, "grid_step", p, false)) c.grid_step = r.num(*s, p + "/grid_step");
    if (const Json* m = r.get(j, "method", p, false)) {
        c.method = r.str(*m, p + "/method");
        if (c.method != "auto" && c.method != "recursion" && c.method != "renewal" && c.method != "ode")
            r.fail(p + "/method", "expected auto, recursion, renewal or ode");
    }
    if (const Json* cv = r.get(j, "critical_values", p, false)) c.critical_values = r.vec(*cv, p + "/critical_values");
    if (const Json* pat = r.get(j, "pattern", p, false)) {
        if (!pat->is_array()) r.fail(p + "/pattern", "expected an array");
        else
            for (std::size_t i = 0; i < pat->size(); ++i) {
                const std::string pp = p + "/pattern/" + std::to_string(i);
                c.pattern.push_back({r.num_field((*pat)[i], "alpha", pp), r.num_field((*pat)[i], "discount_ratio", pp, 1.0)});
            }
    }
    if (r.errors.empty()) r.guarded(p, [&] {
            c.spec.validate();
            return 0;
        });
    return c;
}

Json matrix_json(const Matrix& m) {
    Json out = Json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
        Json row = Json::array();
        for (double x : m.row(i)) row.push_back(number(x));
        out.push_back(row);
    }
    return out;
}

Json vector_json(const std::vector<double>& v) {
    Json out = Json::array();
    for (double x : v) out.push_back(number(x));
    return out;
}

Json optional_index(const std::optional<std::size_t>& x) { return x ? Json(*x) : Json(nullptr); }

std::string grid_row(const ActionGrid& g, std::size_t h) {
    std::string s;
    for (std::size_t k = 0; k < g.cols; ++k) {
        if (k) s += ' ';
        s += to_string(g(h, k));
    }
    return s;
}

Json axis_report_json(const AxisReport& a) {
    Json j;
    j["control_limit"] = a.is_control_limit;
    Json limits = Json::array();
    for (const auto& l : a.limits) limits.push_back(optional_index(l));
    j["limits"] = limits;
    Json iv = Json::array();
    for (const auto& slice : a.intervals) {
        Json s = Json::array();
        for (const auto& x : slice) s.push_back({{"action", to_string(x.action)}, {"first", x.first}, {"last", x.last}});
        iv.push_back(s);
    }
    j["intervals"] = iv;
    if (a.witness) {
        const auto& w = *a.witness;
        j["witness"] = {{"slice", w.slice},
                        {"action", to_string(w.action)},
                        {"first", {w.first.first, w.first.last}},
                        {"second", {w.second.first, w.second.last}}};
    } else {
        j["witness"] = nullptr;
    }
    return j;
}

Json am2ro_json(const Am2roReport& a) {
    Json limits = Json::array(), tail = Json::array();
    for (const auto& l : a.limits) limits.push_back(optional_index(l));
    for (const auto& t : a.tail_action) tail.push_back(t ? Json(std::string(to_string(*t))) : Json(nullptr));
    return {{"holds", a.holds}, {"limits", limits}, {"tail_action", tail}, {"witness_row", optional_index(a.witness_row)}};
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string action_color(Action a) {
    switch (a) {
        case Action::Wait: return "#4c72b0";
        case Action::Transplant: return "#dd8452";
        case Action::TransplantLiving: return "#55a868";
        case Action::Dialysis: return "#c44e52";
        case Action::None: break;
    }
    return "#d0d0d0";
}

}  // namespace

SchemaError::SchemaError(std::vector<Violation> violations)
    : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

Json number(double x) {
    if (!std::isfinite(x)) return nullptr;
    return std::stod(format_number(x));
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw IoError("cannot parse '" + path.string() + "': " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelDocument parse_model_document(const Json& doc) {
    Reader r;
    ModelDocument m;
    if (!doc.is_object()) throw SchemaError("", "document must be an object");
    if (auto it = doc.find("kind"); it != doc.end() && *it != "model")
        throw SchemaError("/kind", "expected 'model', got " + it->dump());
    for (const auto& [key, _] : doc.items())
        if (!kKnownSections.count(key)) m.warnings.push_back("unknown section '" + key + "' ignored");

    if (doc.contains("variant")) {
        m.discrete = parse_discrete(r, doc);
    } else if (doc.contains("analog")) {
        m.analog = parse_analog(r, doc["analog"]);
        if (r.errors.empty())
            m.discrete = r.guarded("/analog", [&] { return std::optional(discretize_analog(*m.analog)); });
    }
    if (const Json* a = r.get(doc, "ambiguity", "", false)) {
        AmbiguitySpec amb;
        if (a->contains("levels"))
            amb.level = r.vec((*a)["levels"], "/ambiguity/levels");
        else if (m.discrete)
            amb = AmbiguitySpec::uniform(m.discrete->patient.count, r.num_field(*a, "radius", "/ambiguity"));
        for (std::size_t i = 0; i < amb.level.size(); ++i)
            if (!(amb.level[i] >= 0.0)) r.fail("/ambiguity/levels/" + std::to_string(i), "radius must be nonnegative");
        m.ambiguity = amb;
    }
    if (const Json* rk = r.get(doc, "risk", "", false)) {
        RiskSpec risk;
        risk.gamma = r.num_field(*rk, "gamma", "/risk");
        if (const Json* lt = r.get(*rk, "lifetime", "/risk")) {
            if (!lt->is_array()) r.fail("/risk/lifetime", "expected [h][k][j] probabilities");
            else
                for (std::size_t h = 0; h < lt->size(); ++h) {
                    const std::string hp = "/risk/lifetime/" + std::to_string(h);
                    std::vector<std::vector<double>> row;
                    if (!(*lt)[h].is_array()) r.fail(hp, "expected an array");
                    else
                        for (std::size_t k = 0; k < (*lt)[h].size(); ++k)
                            row.push_back(r.vec((*lt)[h][k], hp + "/" + std::to_string(k)));
                    risk.lifetime.push_back(std::move(row));
                }
        }
        m.risk = risk;
    }
    if (const Json* c = r.get(doc, "continuous", "", false)) m.continuous = parse_continuous(r, *c);
    if (!m.discrete && !m.continuous && r.errors.empty())
        r.fail("", "document has neither a discrete model ('variant' or 'analog') nor a 'continuous' section");
    if (!r.errors.empty()) throw SchemaError(std::move(r.errors));
    return m;
}

std::string document_pointer(std::string_view path) {
    std::string out = "/";
    for (char c : path) {
        if (c == '.' || c == '[') {
            if (out.back() != '/') out += '/';
        } else if (c != ']') {
            out += c;
        }
    }
    const std::string wait = "/wait";
    for (auto pos = out.find(wait); pos != std::string::npos; pos = out.find(wait, pos + 1))
        if (pos + wait.size() == out.size() || out[pos + wait.size()] == '/') {
            out.erase(pos, wait.size());
            break;
        }
    if (out.size() > 1 && out.back() == '/') out.pop_back();
    return out;
}

Json model_to_json(const DiscreteModelSpec& s) {
    Json j;
    j["kind"] = "model";
    j["variant"] = to_string(s.variant);
    j["discount"] = number(s.discount);
    j["patient_states"] = {{"count", s.patient.count}, {"death", s.patient.reserved}, {"orientation", to_string(s.patient.orientation)}};
    j["organ_states"] = {{"count", s.organ.count}, {"no_offer", s.organ.reserved}, {"orientation", to_string(s.organ.orientation)}};
    if (s.variant == Variant::Dialysis) {
        j["transition"] = {{"medication", matrix_json(s.transition.at(kWaitSlot))}, {"dialysis", matrix_json(s.transition.at(kDialysisSlot))}};
        j["wait_reward"] = {{"medication", vector_json(s.wait_reward.at(kWaitSlot))}, {"dialysis", vector_json(s.wait_reward.at(kDialysisSlot))}};
    } else {
        j["transition"] = matrix_json(s.transition.at(kWaitSlot));
        j["wait_reward"] = vector_json(s.wait_reward.at(kWaitSlot));
    }
    j["offer_prob"] = matrix_json(s.offer_prob);
    j["transplant_reward"] = matrix_json(s.transplant_reward);
    if (s.living_donor) j["living_donor"] = {{"organ", s.living_donor->organ}, {"reward", vector_json(s.living_donor->reward)}};
    return j;
}

Json layout_to_json(const Layout& L) {
    return {{"regimes", L.regimes},
            {"patient_states", {{"count", L.patient.count}, {"death", L.patient.reserved}, {"orientation", to_string(L.patient.orientation)}}},
            {"organ_states", {{"count", L.organ.count}, {"no_offer", L.organ.reserved}, {"orientation", to_string(L.organ.orientation)}}}};
}

Layout layout_from_json(const Json& j) {
    Reader r;
    Layout L;
    if (const Json* g = r.get(j, "regimes", "/layout")) L.regimes = r.index(*g, "/layout/regimes");
    L.patient = parse_axis(r, j, "patient_states", "death");
    L.organ = parse_axis(r, j, "organ_states", "no_offer");
    if (!r.errors.empty()) {
        for (auto& e : r.errors) e.path = "/layout" + e.path;
        throw SchemaError(std::move(r.errors));
    }
    return L;
}

Json solution_to_json(const Solution& sol, Variant variant, const std::string& method) {
    const Layout& L = sol.values.layout;
    Json values = Json::array(), policy = Json::array(), marginal = Json::array();
    for (std::size_t g = 0; g < L.regimes; ++g) {
        Json vg = Json::array(), pg = Json::array(), mg = Json::array();
        for (std::size_t h = 0; h < L.patient.count; ++h) {
            Json vr = Json::array(), pr = Json::array();
            for (std::size_t k = 0; k < L.organ.count; ++k) {
                vr.push_back(number(sol.values.at(g, h, k)));
                pr.push_back(std::string(to_string(sol.policy.at(g, h, k))));
            }
            vg.push_back(vr);
            pg.push_back(pr);
            mg.push_back(number(sol.values.marginal_at(g, h)));
        }
        values.push_back(vg);
        policy.push_back(pg);
        marginal.push_back(mg);
    }
    return {{"kind", "solution"},
            {"variant", to_string(variant)},
            {"method", method},
            {"layout", layout_to_json(L)},
            {"values", values},
            {"marginal", marginal},
            {"policy", policy},
            {"residual", number(sol.values.residual)},
            {"iterations", sol.values.iterations},
            {"converged", sol.values.converged}};
}

Solution solution_from_json(const Json& doc) {
    if (!doc.is_object() || doc.value("kind", "") != "solution") throw SchemaError("/kind", "expected 'solution'");
    if (!doc.contains("layout")) throw SchemaError("/layout", "missing required field");
    if (!doc.contains("policy")) throw SchemaError("/policy", "missing policy");
    Solution sol;
    const Layout L = layout_from_json(doc["layout"]);
    sol.values = zero_values(L);
    sol.policy = Policy{L, std::vector<Action>(L.cells(), Action::None)};
    Reader r;
    const Json& pol = doc["policy"];
    const Json empty;
    const Json& val = doc.contains("values") ? doc["values"] : empty;
    for (std::size_t g = 0; g < L.regimes; ++g)
        for (std::size_t h = 0; h < L.patient.count; ++h)
            for (std::size_t k = 0; k < L.organ.count; ++k) {
                const std::string p = "/" + std::to_string(g) + "/" + std::to_string(h) + "/" + std::to_string(k);
                try {
                    sol.policy.at(g, h, k) = parse_action(pol.at(g).at(h).at(k).get<std::string>());
                } catch (const std::exception&) {
                    r.fail("/policy" + p, "expected an action name");
                }
                if (!val.is_null()) {
                    try {
                        const Json& x = val.at(g).at(h).at(k);
                        sol.values.at(g, h, k) = x.is_null() ? kInfinity : x.get<double>();
                    } catch (const std::exception&) {
                        r.fail("/values" + p, "expected a number");
                    }
                }
            }
    if (!r.errors.empty()) throw SchemaError(std::move(r.errors));
    sol.values.residual = doc.value("residual", 0.0);
    sol.values.iterations = doc.value("iterations", std::size_t(0));
    sol.values.converged = doc.value("converged", true);
    return sol;
}

Json structure_to_json(const ActionGrid& grid, const StructureReport& rep) {
    Json rows = Json::array();
    for (std::size_t h = 0; h < grid.rows; ++h) rows.push_back(grid_row(grid, h));
    Json regions = Json::array();
    for (const auto& reg : rep.regions) {
        Json cells = Json::array();
        for (auto [h, k] : reg.cells) cells.push_back({h, k});
        regions.push_back({{"id", reg.id}, {"action", to_string(reg.action)}, {"cells", cells}});
    }
    Json j = {{"kind", "analysis"},
              {"rows", grid.rows},
              {"cols", grid.cols},
              {"grid", rows},
              {"patient_based", axis_report_json(rep.patient_based)},
              {"organ_based", axis_report_json(rep.organ_based)},
              {"region_count", rep.regions.size()},
              {"regions", regions}};
    if (rep.am3r) {
        const auto& a = *rep.am3r;
        Json limits = Json::array();
        for (const auto& l : a.limits) limits.push_back(optional_index(l));
        j["am2ro"] = am2ro_json(a.am2ro);
        j["am3r"] = {{"holds", a.holds},
                     {"limits", limits},
                     {"witness_column", optional_index(a.witness_column)},
                     {"region_count", a.region_count},
                     {"disconnected", a.disconnected}};
    }
    return j;
}

std::string regions_csv(const ActionGrid& grid, const std::vector<Region>& regions) {
    const auto label = region_labels(grid, regions);
    std::string out = "h,k,action,region_id\n";
    for (std::size_t h = 0; h < grid.rows; ++h)
        for (std::size_t k = 0; k < grid.cols; ++k)
            out += std::to_string(h) + "," + std::to_string(k) + "," + std::string(to_string(grid(h, k))) + "," +
                   std::to_string(label[h * grid.cols + k]) + "\n";
    return out;
}

Json estimate_to_json(const EvalEstimate& e) {
    return {{"mean", number(e.mean)},     {"se", number(e.se)},           {"n", e.n},
            {"ci_low", number(e.ci_low)}, {"ci_high", number(e.ci_high)}, {"truncated", e.truncated}};
}

Json trajectory_to_json(const TrajectoryRecord& rec) {
    Json steps = Json::array();
    for (const auto& s : rec.steps)
        steps.push_back({{"regime", s.cell.regime}, {"h", s.cell.h}, {"k", s.cell.k}, {"action", to_string(s.action)},
                         {"reward", number(s.reward)}});
    return {{"seed", rec.seed},
            {"steps", steps},
            {"tau", optional_index(rec.tau)},
            {"reward", number(rec.reward)},
            {"died", rec.died},
            {"truncated", rec.truncated}};
}

std::string curve_csv(const ThresholdCurve& c) {
    std::string out = "t,lambda\n";
    for (std::size_t i = 0; i < c.time.size(); ++i) out += format_number(c.time[i]) + "," + format_number(c.lambda[i]) + "\n";
    return out;
}

std::string render_regions_svg(const ActionGrid& grid, const std::vector<Region>& regions) {
    constexpr double cell = 40.0, margin = 50.0, legend_h = 40.0;
    const double w = 2 * margin + cell * double(grid.cols);
    const double h = 2 * margin + cell * double(grid.rows) + legend_h;
    const auto label = region_labels(grid, regions);
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", w) << "\" height=\"" << fmt("%.0f", h)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect x=\"0\" y=\"0\" width=\"" << fmt("%.0f", w) << "\" height=\"" << fmt("%.0f", h) << "\" fill=\"#ffffff\"/>\n";
    s << "<text x=\"" << fmt("%.1f", w / 2) << "\" y=\"20\" text-anchor=\"middle\">organ state k</text>\n";
    s << "<text x=\"15\" y=\"" << fmt("%.1f", margin + cell * grid.rows / 2.0) << "\" transform=\"rotate(-90 15 "
      << fmt("%.1f", margin + cell * grid.rows / 2.0) << ")\" text-anchor=\"middle\">patient state h</text>\n";
    for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const double x = margin + cell * double(c), y = margin + cell * double(r);
            const Action a = grid(r, c);
            s << "<rect class=\"cell\" x=\"" << fmt("%.1f", x) << "\" y=\"" << fmt("%.1f", y) << "\" width=\"" << fmt("%.1f", cell)
              << "\" height=\"" << fmt("%.1f", cell) << "\" fill=\"" << action_color(a) << "\" stroke=\"#ffffff\">"
              << "<title>h=" << r << " k=" << c << " " << to_string(a) << " region " << label[r * grid.cols + c]
              << "</title></rect>\n";
            s << "<text x=\"" << fmt("%.1f", x + cell / 2) << "\" y=\"" << fmt("%.1f", y + cell / 2 + 4)
              << "\" text-anchor=\"middle\" fill=\"#ffffff\">" << to_string(a) << "</text>\n";
        }
    // Region boundaries.
    for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const double x = margin + cell * double(c), y = margin + cell * double(r);
            if (c + 1 < grid.cols && label[r * grid.cols + c] != label[r * grid.cols + c + 1])
                s << "<line class=\"boundary\" x1=\"" << fmt("%.1f", x + cell) << "\" y1=\"" << fmt("%.1f", y) << "\" x2=\""
                  << fmt("%.1f", x + cell) << "\" y2=\"" << fmt("%.1f", y + cell) << "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
            if (r + 1 < grid.rows && label[r * grid.cols + c] != label[(r + 1) * grid.cols + c])
                s << "<line class=\"boundary\" x1=\"" << fmt("%.1f", x) << "\" y1=\"" << fmt("%.1f", y + cell) << "\" x2=\""
                  << fmt("%.1f", x + cell) << "\" y2=\"" << fmt("%.1f", y + cell) << "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
        }
    double lx = margin;
    const double ly = margin + cell * double(grid.rows) + 20;
    for (Action a : {Action::Wait, Action::Transplant, Action::TransplantLiving, Action::Dialysis}) {
        s << "<rect class=\"legend\" x=\"" << fmt("%.1f", lx) << "\" y=\"" << fmt("%.1f", ly) << "\" width=\"14\" height=\"14\" fill=\""
          << action_color(a) << "\"/>\n";
        s << "<text x=\"" << fmt("%.1f", lx + 18) << "\" y=\"" << fmt("%.1f", ly + 12) << "\">" << to_string(a) << "</text>\n";
        lx += 60;
    }
    s << "</svg>\n";
    return s.str();
}

std::string render_curve_svg(const ThresholdCurve& curve, const std::vector<double>& critical) {
    constexpr double W = 640, H = 400, ml = 60, mr = 20, mt = 20, mb = 50;
    const double t0 = curve.time.empty() ? 0.0 : curve.time.front();
    const double t1 = curve.time.empty() ? 1.0 : std::max(curve.time.back(), t0 + 1e-12);
    double ymax = 0.0;
    for (double v : curve.lambda) ymax = std::max(ymax, v);
    if (!(ymax > 0.0)) ymax = 1.0;
    auto X = [&](double t) { return ml + (W - ml - mr) * (t - t0) / (t1 - t0); };
    auto Y = [&](double v) { return H - mb - (H - mt - mb) * v / ymax; };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
    s << "<line class=\"axis\" x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"#000000\"/>\n";
    s << "<line class=\"axis\" x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"#000000\"/>\n";
    s << "<text x=\"" << fmt("%.1f", X(t0)) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << format_number(t0) << "</text>\n";
    s << "<text x=\"" << fmt("%.1f", X(t1)) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << format_number(t1) << "</text>\n";
    s << "<text x=\"" << ml - 6 << "\" y=\"" << fmt("%.1f", Y(ymax) + 4) << "\" text-anchor=\"end\">" << format_number(ymax) << "</text>\n";
    s << "<text x=\"" << ml - 6 << "\" y=\"" << fmt("%.1f", Y(0) + 4) << "\" text-anchor=\"end\">0</text>\n";
    s << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">t</text>\n";
    s << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\">lambda</text>\n";
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"1.5\" points=\"";
    // Thin very dense curves to at most ~2000 drawn points.
    const std::size_t stride = std::max<std::size_t>(1, curve.time.size() / 2000);
    for (std::size_t i = 0; i < curve.time.size(); i += stride) {
        if (i) s << ' ';
        s << fmt("%.2f", X(curve.time[i])) << ',' << fmt("%.2f", Y(curve.lambda[i]));
    }
    if (!curve.time.empty() && (curve.time.size() - 1) % stride != 0)
        s << ' ' << fmt("%.2f", X(curve.time.back())) << ',' << fmt("%.2f", Y(curve.lambda.back()));
    s << "\"/>\n";
    for (double t : critical) {
        if (!std::isfinite(t)) continue;
        const double x = X(std::clamp(t, t0, t1));
        s << "<line class=\"critical\" x1=\"" << fmt("%.2f", x) << "\" y1=\"" << mt << "\" x2=\"" << fmt("%.2f", x) << "\" y2=\"" << H - mb
          << "\" stroke=\"#dd8452\" stroke-dasharray=\"4 3\"><title>t = " << format_number(t) << "</title></line>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace omdp
