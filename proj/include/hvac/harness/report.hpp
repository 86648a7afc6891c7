#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hvac/harness/experiment.hpp"

namespace hvac::harness {

/// Marker written for metrics that do not apply (no occupied steps, failed
/// cell).
inline constexpr const char* kNotApplicable = "NA";

/// Median over seeds of one controller group at a fixed beta and p_max.
struct GroupSummary {
  std::string group;  // mpc, rule, rl:S1 .. rl:S4
  std::size_t runs = 0;
  std::size_t failed = 0;
  std::optional<double> violation_probability;
  std::optional<double> mae_to_setpoint;
  std::optional<double> energy_cost;
  std::optional<double> total_cost;
};

std::string group_of(const CellSpec& cell);

std::vector<GroupSummary> summarize_groups(const std::vector<StoredResult>& results,
                                           double beta, double p_max);

/// Spread of the median MAE across the p_max grid, relative to the median
/// MAE at p_max 1: (max - min) / mae(1). Empty without a p_max 1 point or
/// with fewer than two grid points.
std::optional<double> sensitivity_variation(const std::vector<StoredResult>& results,
                                            ScenarioId scenario, double beta);

/// Directional checks on the expected controller ordering.
struct OrderingChecks {
  std::optional<bool> hitl_cost_le_rule;       // median HITL(S1) total <= rule total
  std::optional<bool> hitl_within_mpc_margin;  // HITL(S1) total <= 1.25 * MPC total
  std::optional<bool> violation_order;         // mpc <= rule <= HITL(S1)
  std::optional<bool> rule_mae_smallest;       // rule MAE below every other group
  std::optional<bool> mpc_violation_zero;
  std::optional<bool> s1_cost_le_s3;          // at the given beta
};

OrderingChecks check_orderings(const std::vector<StoredResult>& results, double beta);

void write_results_csv(std::ostream& out, const std::vector<StoredResult>& results);

/// Writes results.csv, cost_vs_beta.csv, sensitivity.csv and summary.txt into
/// `dir`. Output depends only on the store contents. Returns the paths.
std::vector<std::filesystem::path> emit_report(const ResultStore& store,
                                               const std::filesystem::path& dir);

}  // namespace hvac::harness
