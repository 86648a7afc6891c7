#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hvac/domain.hpp"
#include "hvac/env/episode.hpp"
#include "json.hpp"

namespace hvac::harness {

/// Per-run comfort and cost metrics. Comfort metrics are empty when the run
/// has no occupied step.
struct MetricsSummary {
  std::optional<double> violation_probability;
  std::optional<double> mae_to_setpoint;
  double energy_cost = 0.0;
  double discomfort_cost = 0.0;
  double total_cost = 0.0;
  int override_count = 0;
  int occupied_steps = 0;
  int steps = 0;
  int episodes = 0;

  bool operator==(const MetricsSummary&) const = default;
};

MetricsSummary compute_metrics(std::span<const env::EpisodeRecord> records,
                               const ComfortModel& comfort);

nlohmann::json to_json(const MetricsSummary& m);
MetricsSummary metrics_from_json(const nlohmann::json& j);

/// Median and quartiles with linear interpolation between order statistics.
struct Distribution {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  std::size_t n = 0;
};

std::optional<Distribution> summarize(std::vector<double> values);
double quantile(std::vector<double> values, double q);

}  // namespace hvac::harness
