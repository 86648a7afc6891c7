#include "hvac/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hvac::harness {

MetricsSummary compute_metrics(std::span<const env::EpisodeRecord> records,
                               const ComfortModel& comfort) {
  if (records.empty()) throw std::invalid_argument("compute_metrics needs at least one record");
  MetricsSummary m;
  int violations = 0;
  double abs_error = 0.0;
  for (const env::EpisodeRecord& rec : records) {
    ++m.episodes;
    for (const env::StepRecord& s : rec.steps) {
      ++m.steps;
      m.energy_cost += s.energy;
      m.discomfort_cost += s.discomfort;
      m.total_cost += s.total;
      if (s.feedback != 0) ++m.override_count;
      if (!s.occupied) continue;
      ++m.occupied_steps;
      const double err = std::abs(s.t_in - comfort.t_set_degc);
      abs_error += err;
      if (err > comfort.theta_range_degc) ++violations;
    }
  }
  if (m.occupied_steps > 0) {
    m.violation_probability = static_cast<double>(violations) / m.occupied_steps;
    m.mae_to_setpoint = abs_error / m.occupied_steps;
  }
  return m;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const MetricsSummary& m) {
  return {{"violation_probability", optional_json(m.violation_probability)},
          {"mae_to_setpoint", optional_json(m.mae_to_setpoint)},
          {"energy_cost", m.energy_cost},
          {"discomfort_cost", m.discomfort_cost},
          {"total_cost", m.total_cost},
          {"override_count", m.override_count},
          {"occupied_steps", m.occupied_steps},
          {"steps", m.steps},
          {"episodes", m.episodes}};
}

MetricsSummary metrics_from_json(const nlohmann::json& j) {
  MetricsSummary m;
  m.violation_probability = optional_from(j.at("violation_probability"));
  m.mae_to_setpoint = optional_from(j.at("mae_to_setpoint"));
  m.energy_cost = j.at("energy_cost").get<double>();
  m.discomfort_cost = j.at("discomfort_cost").get<double>();
  m.total_cost = j.at("total_cost").get<double>();
  m.override_count = j.at("override_count").get<int>();
  m.occupied_steps = j.at("occupied_steps").get<int>();
  m.steps = j.at("steps").get<int>();
  m.episodes = j.at("episodes").get<int>();
  return m;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

std::optional<Distribution> summarize(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  Distribution d;
  d.n = values.size();
  d.q1 = quantile(values, 0.25);
  d.median = quantile(values, 0.5);
  d.q3 = quantile(values, 0.75);
  return d;
}

}  // namespace hvac::harness
