#include "omdp/cli.hpp"

#include "omdp/io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <sstream>

namespace omdp {

namespace {

struct RunConfig {
    std::string command;
    std::string input;
    std::string output;
    double tol = 1e-8;
    std::size_t max_iters = 100000;
    std::string method = "auto";
    std::string tie_break = "wait";
    std::size_t trajectories = 10000;
    std::uint64_t seed = 1;
    std::size_t dump = 0;
    std::string format = "svg";
    std::optional<double> grid_step;
    std::optional<double> t_max;
};

/// Error carrying the exit code it maps to.
struct Failure : std::runtime_error {
    int code;
    Failure(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

SolveOptions solve_options(const RunConfig& c) {
    SolveOptions o;
    o.tolerance = c.tol;
    o.max_iterations = c.max_iters;
    o.tie_break = c.tie_break == "transplant" ? TieBreak::PreferTransplant : TieBreak::PreferWait;
    return o;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void emit(const RunConfig& c, const std::string& text, std::ostream& out) {
    if (c.output.empty() || c.output == "-")
        out << text;
    else
        write_text_file(c.output, text);
}

/// Sibling file of --output with a new suffix; empty when writing to stdout.
std::string sibling(const RunConfig& c, const std::string& suffix) {
    if (c.output.empty() || c.output == "-") return {};
    std::filesystem::path p(c.output);
    return (p.parent_path() / p.stem()).string() + suffix;
}

ModelDocument load_model(const RunConfig& c, std::ostream& err) {
    ModelDocument doc = parse_model_document(read_json_file(c.input));
    for (const auto& w : doc.warnings) err << "warning: " << w << "\n";
    return doc;
}

ValidatedModel require_discrete(const ModelDocument& doc) {
    if (!doc.discrete) throw Failure(kExitValidation, "document has no discrete model; use the 'continuous' command");
    return validated(*doc.discrete);
}

/// Expand a one-column living-donor policy onto the model's full layout.
Policy full_policy(const ValidatedModel& model, const Policy& p) {
    const Layout L = layout_of(model.spec());
    if (p.layout == L) return p;
    Policy out{L, std::vector<Action>(L.cells(), Action::None)};
    for (std::size_t h = 0; h < L.patient.count; ++h)
        for (std::size_t k = 0; k < L.organ.count; ++k) out.at(0, h, k) = p.at(0, h, 0);
    return out;
}

Solution solve_primary(const ValidatedModel& model, const SolveOptions& opts, std::string& method) {
    if (method == "brute-force") {
        auto bf = brute_force_optimal(model);
        return {std::move(bf.values), std::move(bf.policy)};
    }
    if (model->variant == Variant::LivingDonor) {
        method = "living_donor_iteration";
        return solve_living_donor(model, opts);
    }
    method = "value_iteration";
    return solve_value_iteration(model, opts);
}

Json dominance_json(const DominanceReport& d) {
    auto opt = [](const std::optional<std::size_t>& x) { return x ? Json(*x) : Json(nullptr); };
    return {{"values_dominated", d.values_dominated}, {"value_violation", opt(d.value_violation)},
            {"transplant_subset", d.transplant_subset}, {"subset_violation", opt(d.subset_violation)},
            {"limits_applicable", d.limits_applicable}, {"robust_limit", opt(d.robust_limit)},
            {"myopic_limit", opt(d.myopic_limit)},      {"limit_order", d.limit_order}};
}

int cmd_solve(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto doc = load_model(c, err);
    const ValidatedModel model = require_discrete(doc);
    const SolveOptions opts = solve_options(c);
    std::string method = c.method;
    if (method != "auto" && method != "brute-force") throw Failure(kExitUsage, "--method must be auto or brute-force");
    const Solution sol = solve_primary(model, opts, method);
    Json j = solution_to_json(sol, model->variant, method);
    bool converged = sol.values.converged;

    if (doc.ambiguity) {
        if (model->variant != Variant::LivingDonor)
            throw Failure(kExitValidation, "/ambiguity: robust solving needs the living_donor variant");
        const Solution robust = robust_value_iteration(model, *doc.ambiguity, opts);
        converged = converged && robust.values.converged;
        Json r = solution_to_json(robust, model->variant, "robust_iteration");
        r["dominance"] = dominance_json(compare_solutions(robust, sol));
        j["robust"] = r;
    }
    if (doc.risk) {
        const RiskSolution risk = risk_sensitive_value_iteration(model, *doc.risk, opts);
        Json r = solution_to_json({risk.values, risk.policy}, model->variant, "risk_sensitive_iteration");
        r["gamma"] = number(doc.risk->gamma);
        r["diverged"] = risk.diverged;
        converged = converged && risk.values.converged && !risk.diverged;
        j["risk_sensitive"] = r;
    }
    if (!doc.warnings.empty()) j["warnings"] = doc.warnings;
    emit(c, dump_json(j), out);
    if (!converged) {
        err << "error: value iteration did not reach tolerance " << format_number(c.tol) << " (residual "
            << format_number(sol.values.residual) << ")\n";
        return kExitNonConvergence;
    }
    return kExitOk;
}

int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream&) {
    const Json doc = read_json_file(c.input);
    const std::string kind = doc.is_object() ? doc.value("kind", "") : "";
    ActionGrid grid;
    bool three_action = false;
    if (kind == "solution") {
        const Solution sol = solution_from_json(doc);
        grid = sol.policy.canonical_grid(0);
        three_action = doc.value("variant", "") == "combined";
    } else if (kind == "policy") {
        if (!doc.contains("grid") || !doc["grid"].is_array()) throw Failure(kExitMissingInput, "/grid: missing policy grid");
        std::vector<std::string> rows;
        for (const auto& r : doc["grid"]) rows.push_back(r.get<std::string>());
        try {
            grid = ActionGrid::parse(rows);
        } catch (const std::invalid_argument& e) {
            throw SchemaError("/grid", e.what());
        }
        bool has_ld = false, has_t = false;
        for (Action a : grid.cells) {
            has_ld = has_ld || a == Action::TransplantLiving;
            has_t = has_t || a == Action::Transplant;
        }
        three_action = doc.value("three_action", has_ld && has_t);
    } else if (kind == "model" || (doc.is_object() && doc.contains("variant"))) {
        throw Failure(kExitMissingInput, "input is a model without a solved policy; run 'solve' first");
    } else {
        throw Failure(kExitMissingInput, "unknown document kind '" + kind + "'");
    }
    const StructureReport rep = analyze_structure(grid, three_action);
    emit(c, dump_json(structure_to_json(grid, rep)), out);
    if (const auto csv = sibling(c, ".regions.csv"); !csv.empty()) write_text_file(csv, regions_csv(grid, rep.regions));
    return kExitOk;
}

struct CurveResult {
    ThresholdCurve curve;
    std::string method;
    std::vector<double> thresholds;  // lambda / beta per grid point
};

CurveResult compute_curve(const ContinuousSection& sec, const RunConfig& c) {
    const auto& spec = sec.spec;
    CurveResult res;
    res.method = sec.method;
    const bool fixed = std::holds_alternative<FixedInstants>(spec.arrivals);
    if (res.method == "auto")
        res.method = fixed ? "recursion"
                     : std::holds_alternative<RenewalArrivals>(spec.arrivals) ? "renewal"
                                                                             : "ode";
    if (res.method == "recursion") {
        if (!fixed) throw Failure(kExitValidation, "/continuous/method: recursion needs fixed arrival instants");
        res.curve.time = std::get<FixedInstants>(spec.arrivals).times;
        res.curve.lambda = finite_horizon_thresholds(spec);
    } else {
        if (fixed) throw Failure(kExitValidation, "/continuous/method: fixed instants use the recursion");
        const double t_max = c.t_max ? *c.t_max : sec.t_max ? *sec.t_max : default_horizon(spec.lifetime);
        const double step = c.grid_step ? *c.grid_step : sec.grid_step ? *sec.grid_step : 0.01;
        if (!(t_max > 0.0) || !(step > 0.0)) throw Failure(kExitUsage, "--t-max and --grid-step must be positive");
        res.curve = res.method == "renewal" ? renewal_lambda(spec, t_max, step) : poisson_lambda_ode(spec, t_max, step);
    }
    for (std::size_t i = 0; i < res.curve.time.size(); ++i)
        res.thresholds.push_back(res.curve.lambda[i] / spec.discount(res.curve.time[i]));
    return res;
}

std::vector<double> critical_values_of(const ContinuousSection& sec) {
    if (!sec.critical_values.empty()) return sec.critical_values;
    if (sec.spec.offers.kind() == OfferDistribution::Kind::Finite) return sec.spec.offers.values();
    return {};
}

Json times_json(const std::vector<double>& ts) {
    Json out = Json::array();
    for (double t : ts) out.push_back(std::isfinite(t) ? number(t) : Json("inf"));
    return out;
}

int cmd_continuous(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto doc = load_model(c, err);
    if (!doc.continuous) throw Failure(kExitValidation, "/continuous: missing continuous section");
    const auto& sec = *doc.continuous;
    const CurveResult res = compute_curve(sec, c);
    const bool monotone = res.curve.nonincreasing();
    const auto values = critical_values_of(sec);

    Json j = {{"kind", "curve"},
              {"method", res.method},
              {"lifetime", sec.spec.lifetime.describe()},
              {"lifetime_ifr", sec.spec.lifetime.ifr()},
              {"t", Json::array()},
              {"lambda", Json::array()},
              {"threshold", Json::array()},
              {"truncated", res.curve.truncated},
              {"nonincreasing", monotone}};
    for (std::size_t i = 0; i < res.curve.time.size(); ++i) {
        j["t"].push_back(number(res.curve.time[i]));
        j["lambda"].push_back(number(res.curve.lambda[i]));
        j["threshold"].push_back(number(res.thresholds[i]));
    }
    j["critical_values"] = Json::array();
    for (double v : values) j["critical_values"].push_back(number(v));
    if (!values.empty() && monotone && res.method != "recursion")
        j["critical_times"] = times_json(critical_times(res.curve, values));
    else
        j["critical_times"] = Json::array();
    if (!sec.pattern.empty()) {
        const auto ih = infinite_horizon_limit(sec.pattern, sec.spec.offers);
        Json g = Json::array();
        for (double x : ih.gamma) g.push_back(number(x));
        j["infinite_horizon"] = {{"gamma", g}, {"residual", number(ih.residual)}};
    }
    emit(c, dump_json(j), out);
    if (const auto csv = sibling(c, ".csv"); !csv.empty()) write_text_file(csv, curve_csv(res.curve));
    if (res.curve.truncated) {
        err << "error: survival at T_max exceeds 1e-6; increase --t-max\n";
        return kExitTruncation;
    }
    return kExitOk;
}

int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.trajectories < 2) throw Failure(kExitUsage, "--trajectories must be at least 2");
    const auto doc = load_model(c, err);
    Json j = {{"kind", "simulation"}, {"trajectories", c.trajectories}, {"seed", c.seed}};
    std::size_t truncated = 0;
    if (doc.discrete) {
        const ValidatedModel model = validated(*doc.discrete);
        std::string method = "auto";
        const Solution sol = solve_primary(model, solve_options(c), method);
        if (!sol.values.converged) throw Failure(kExitNonConvergence, "value iteration did not converge");
        const Policy policy = full_policy(model, sol.policy);
        const auto& s = model.spec();
        Json est = Json::array();
        std::uint64_t stream = 0;
        for (std::size_t g = 0; g < s.regimes(); ++g)
            for (std::size_t h = 0; h < s.patient.count; ++h) {
                if (!s.live(h)) continue;
                for (std::size_t k = 0; k < s.organ.count; ++k) {
                    const std::uint64_t seed = derive_seed(c.seed, stream++);
                    const auto e = estimate_policy_value(model, policy, {g, h, k}, c.trajectories, seed);
                    const std::size_t vk = sol.values.layout.organ.count == 1 ? 0 : k;
                    const double v = sol.values.at(g, h, vk);
                    truncated += e.truncated;
                    Json row = estimate_to_json(e);
                    row["regime"] = g;
                    row["h"] = h;
                    row["k"] = k;
                    row["solver_value"] = number(v);
                    row["within_3se"] = std::abs(e.mean - v) <= 3.0 * e.se + 1e-12;
                    if (c.dump) {
                        Json dumps = Json::array();
                        for (std::size_t i = 0; i < std::min(c.dump, c.trajectories); ++i)
                            dumps.push_back(trajectory_to_json(simulate_trajectory(model, policy, {g, h, k}, derive_seed(seed, i))));
                        row["dump"] = dumps;
                    }
                    est.push_back(row);
                }
            }
        j["discrete"] = est;
    }
    if (doc.continuous) {
        const CurveResult res = compute_curve(*doc.continuous, c);
        const auto& curve = res.curve;
        const ThresholdRule rule = res.method == "recursion" ? rule_from_thresholds(curve.lambda) : rule_from_curve(curve);
        const auto e = continuous_time_simulate(doc.continuous->spec, rule, c.trajectories, c.seed);
        Json row = estimate_to_json(e);
        row["method"] = res.method;
        row["lambda0"] = number(curve.lambda.front());
        row["within_3se"] = std::abs(e.mean - curve.lambda.front()) <= 3.0 * e.se + 1e-12;
        j["continuous"] = row;
    }
    emit(c, dump_json(j), out);
    if (truncated) {
        err << "error: " << truncated << " trajectories hit the epoch limit\n";
        return kExitTruncation;
    }
    return kExitOk;
}

ThresholdCurve curve_from_json(const Json& doc) {
    ThresholdCurve curve;
    try {
        for (const auto& t : doc.at("t")) curve.time.push_back(t.get<double>());
        for (const auto& l : doc.at("lambda")) curve.lambda.push_back(l.get<double>());
    } catch (const Json::exception&) {
        throw SchemaError("/t", "curve documents need numeric 't' and 'lambda' arrays");
    }
    if (curve.time.size() != curve.lambda.size()) throw SchemaError("/lambda", "length differs from 't'");
    return curve;
}

int cmd_plot(const RunConfig& c, std::ostream& out, std::ostream&) {
    if (c.format != "svg" && c.format != "csv") throw Failure(kExitUsage, "--format must be svg or csv");
    const Json doc = read_json_file(c.input);
    const std::string kind = doc.is_object() ? doc.value("kind", "") : "";
    if (kind == "analysis") {
        std::vector<std::string> rows;
        for (const auto& r : doc.value("grid", Json::array())) rows.push_back(r.get<std::string>());
        const ActionGrid grid = ActionGrid::parse(rows);
        const auto regions = region_connectivity(grid);
        emit(c, c.format == "svg" ? render_regions_svg(grid, regions) : regions_csv(grid, regions), out);
    } else if (kind == "curve") {
        const ThresholdCurve curve = curve_from_json(doc);
        std::vector<double> times;
        for (const auto& t : doc.value("critical_times", Json::array()))
            times.push_back(t.is_number() ? t.get<double>() : kInfinity);
        emit(c, c.format == "svg" ? render_curve_svg(curve, times) : curve_csv(curve), out);
    } else {
        throw Failure(kExitMissingInput, "cannot plot document kind '" + kind + "'");
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Organ-acceptance MDP toolkit: solve, analyze, simulate, continuous, plot"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto add_io = [&](CLI::App* sub) {
        sub->add_option("--input,-i", cfg.input, "input document")->required();
        sub->add_option("--output,-o", cfg.output, "output path (stdout when omitted)");
    };
    auto add_solver = [&](CLI::App* sub) {
        sub->add_option("--tol", cfg.tol, "Bellman residual tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--max-iters", cfg.max_iters, "iteration cap")->check(CLI::PositiveNumber);
        sub->add_option("--tie-break", cfg.tie_break, "wait or transplant")->check(CLI::IsMember({"wait", "transplant"}));
    };
    auto add_curve = [&](CLI::App* sub) {
        sub->add_option("--grid-step", cfg.grid_step, "time grid spacing")->check(CLI::PositiveNumber);
        sub->add_option("--t-max", cfg.t_max, "time horizon")->check(CLI::PositiveNumber);
    };

    auto* solve = app.add_subcommand("solve", "solve a discrete model");
    add_io(solve);
    add_solver(solve);
    solve->add_option("--method", cfg.method, "auto or brute-force")->check(CLI::IsMember({"auto", "brute-force"}));

    auto* analyze = app.add_subcommand("analyze", "classify the structure of a solved policy");
    add_io(analyze);

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation of the optimal policy");
    add_io(simulate);
    add_solver(simulate);
    add_curve(simulate);
    simulate->add_option("--trajectories", cfg.trajectories, "trajectories per start state")->check(CLI::Range(2ul, 100000000ul));
    simulate->add_option("--seed", cfg.seed, "master seed");
    simulate->add_option("--dump", cfg.dump, "dump this many trajectories per start state");

    auto* continuous = app.add_subcommand("continuous", "continuous-time threshold curve and critical times");
    add_io(continuous);
    add_curve(continuous);

    auto* plot = app.add_subcommand("plot", "render an analysis or curve document");
    add_io(plot);
    plot->add_option("--format", cfg.format, "svg or csv")->check(CLI::IsMember({"svg", "csv"}));

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (solve->parsed()) return cmd_solve(cfg, out, err);
        if (analyze->parsed()) return cmd_analyze(cfg, out, err);
        if (simulate->parsed()) return cmd_simulate(cfg, out, err);
        if (continuous->parsed()) return cmd_continuous(cfg, out, err);
        if (plot->parsed()) return cmd_plot(cfg, out, err);
    } catch (const Failure& f) {
        err << "error: " << f.what() << "\n";
        return f.code;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        err << "error: model validation failed\n";
        for (const auto& v : e.violations()) err << "  " << document_pointer(v.path) << ": " << v.message << "\n";
        return kExitValidation;
    } catch (const StiffnessError& e) {
        err << "error: " << e.what() << "\n";
        return kExitTruncation;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}

}  // namespace omdp
