#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "epimpc/scenario.hpp"

namespace epimpc {

/// `populations.csv`: header `node_id,population`, one row per node.
/// Strict parsing: NaN, negative, or ragged rows are load errors.
Eigen::VectorXd load_populations_csv(const std::filesystem::path& path);

/// `flow.csv`: dense n x n matrix, row-major, header row of node ids.
Eigen::MatrixXd load_flow_csv(const std::filesystem::path& path);

/// Scenario config plus the network it runs on, with the resolved JSON echo.
struct LoadedConfig {
    Scenario scenario;
    NetworkModel model;
    nlohmann::json echo;
};

/// Parses and validates a scenario config file. Unknown keys are rejected.
/// Calibration and the variant shock are resolved here; the shock
/// multiplier is folded into beta_max.
LoadedConfig load_config(const std::filesystem::path& path);

/// Wide per-step table: t, s_i, xa_i, xs_i, k_i, qa_i, qs_i, beta_a, beta_s,
/// lambda_max, y_norm1, burden_cum. 17 significant digits.
void write_timeseries_csv(const std::filesystem::path& path, const RunRecord& rec,
                          const NetworkModel& model);

/// Reads the per-step provenance back out of a timeseries file.
ClosedLoopTrace read_timeseries_csv(const std::filesystem::path& path);

nlohmann::json certificate_json(const DecayCertificate& cert);
nlohmann::json summary_json(const RunRecord& rec);

/// Comparison table (one row per run) as CSV text.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

}  // namespace epimpc
