#pragma once

// JSON and CSV serialization for sequences, weights, scenarios and reports.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nestack/nested_models.hpp"
#include "nestack/simulation.hpp"
#include "nestack/stacking.hpp"

namespace nestack {

using Json = nlohmann::ordered_json;

/// Parses text; syntax errors become validation errors.
Json parse_json(const std::string& text, const std::string& what);
Json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Two-space indented, trailing newline.
std::string dump(const Json& j);

Json to_json(const NestedModelSequence& seq);
/// {"sigma2", "n", "d", "R0", "R", optional "coef_blocks", optional
/// "block_indices"}; validated before returning.
NestedModelSequence sequence_from_json(const Json& j);

Json to_json(const StackWeights& w);
Json to_json(const Summary& s);
Json to_json(const RiskReport& r);
Json to_json(const DfEstimate& d);
Json to_json(const BreimanStats& b);

/// One row per estimator.
std::string report_to_csv(const RiskReport& r);

/// Contents of a simulation config file.
struct SimulationConfig {
    ScenarioConfig scenario;
    std::vector<EstimatorSpec> estimators;
    double tau = 0.5;
    double lambda = 2.0;
    std::size_t threads = 1;
};

/// `base_dir` resolves relative file references (basis CSV).
SimulationConfig config_from_json(const Json& j, const std::string& base_dir = ".");
EstimatorSpec estimator_from_json(const Json& j);

/// Headerless numeric CSV; all rows must have the same width.
Eigen::MatrixXd read_csv_matrix(const std::string& path);

}  // namespace nestack
