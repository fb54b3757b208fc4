#pragma once

#include "omdp/continuous.hpp"
#include "omdp/model.hpp"
#include "omdp/robust_risk.hpp"
#include "omdp/simulator.hpp"
#include "omdp/solver.hpp"
#include "omdp/structure.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace omdp {

using Json = nlohmann::json;

/// Structural problems in a document, each tagged with a JSON pointer.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(std::vector<Violation> violations);
    SchemaError(std::string path, std::string message) : SchemaError(std::vector<Violation>{{std::move(path), std::move(message)}}) {}
    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rounded to 12 significant digits; non-finite values become null.
Json number(double x);
/// 12-significant-digit decimal text.
std::string format_number(double x);

struct ContinuousSection {
    ContinuousModelSpec spec;
    std::optional<double> t_max;
    std::optional<double> grid_step;
    std::string method = "auto";  // auto | recursion | renewal | ode
    std::vector<double> critical_values;
    std::vector<PatternStep> pattern;  // optional periodic instant pattern
};

struct ModelDocument {
    std::optional<DiscreteModelSpec> discrete;
    std::optional<AnalogGridSpec> analog;
    std::optional<AmbiguitySpec> ambiguity;
    std::optional<RiskSpec> risk;
    std::optional<ContinuousSection> continuous;
    std::vector<std::string> warnings;
};

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Throws SchemaError naming document paths. Model-level checks are left to
/// validate_model.
ModelDocument parse_model_document(const Json& doc);

/// Document location of a validate_model path: "transition.wait[2][0]"
/// becomes "/transition/2/0".
std::string document_pointer(std::string_view model_path);

Json model_to_json(const DiscreteModelSpec& spec);

Json layout_to_json(const Layout& layout);
Layout layout_from_json(const Json& j);

/// values[regime][h][k] and policy[regime][h][k] using action names.
Json solution_to_json(const Solution& sol, Variant variant, const std::string& method);
Solution solution_from_json(const Json& doc);

Json structure_to_json(const ActionGrid& grid, const StructureReport& report);

/// CSV with header h,k,action,region_id in row-major order.
std::string regions_csv(const ActionGrid& grid, const std::vector<Region>& regions);

Json estimate_to_json(const EvalEstimate& e);
Json trajectory_to_json(const TrajectoryRecord& r);

/// CSV with header t,lambda.
std::string curve_csv(const ThresholdCurve& curve);

/// Deterministic SVG renderings.
std::string render_regions_svg(const ActionGrid& grid, const std::vector<Region>& regions);
std::string render_curve_svg(const ThresholdCurve& curve, const std::vector<double>& critical_times);

}  // namespace omdp
