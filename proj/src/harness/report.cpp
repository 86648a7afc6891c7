#include "hvac/harness/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace hvac::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : kNotApplicable; }

std::string short_num(const std::optional<double>& v, const char* fmt) {
  if (!v) return kNotApplicable;
  char buf[40];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

// Free text goes into a single CSV field without quoting.
std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  return quantile(std::move(v), 0.5);
}

bool same(double a, double b) { return std::abs(a - b) < 1e-12; }

auto sort_key(const StoredResult& r) {
  return std::make_tuple(r.cell.controller, to_string(r.cell.scenario), r.cell.beta,
                         r.cell.p_max, r.cell.seed, r.key);
}

std::vector<StoredResult> sorted(std::vector<StoredResult> results) {
  std::sort(results.begin(), results.end(), [](const StoredResult& a, const StoredResult& b) {
    return sort_key(a) < sort_key(b);
  });
  return results;
}

template <typename Fn>
std::vector<double> collect(const std::vector<const StoredResult*>& rows, Fn&& field) {
  std::vector<double> out;
  for (const StoredResult* r : rows) {
    if (!r->ok()) continue;
    if (std::optional<double> v = field(*r->metrics)) out.push_back(*v);
  }
  return out;
}

GroupSummary summarize_rows(const std::string& group,
                            const std::vector<const StoredResult*>& rows) {
  GroupSummary g;
  g.group = group;
  for (const StoredResult* r : rows) {
    ++g.runs;
    if (!r->ok()) ++g.failed;
  }
  using M = MetricsSummary;
  g.violation_probability =
      median_of(collect(rows, [](const M& m) { return m.violation_probability; }));
  g.mae_to_setpoint = median_of(collect(rows, [](const M& m) { return m.mae_to_setpoint; }));
  g.energy_cost = median_of(
      collect(rows, [](const M& m) { return std::optional<double>(m.energy_cost); }));
  g.total_cost = median_of(
      collect(rows, [](const M& m) { return std::optional<double>(m.total_cost); }));
  return g;
}

const GroupSummary* find_group(const std::vector<GroupSummary>& groups, const std::string& name) {
  for (const GroupSummary& g : groups) {
    if (g.group == name) return &g;
  }
  return nullptr;
}

std::string verdict(const std::optional<bool>& v) {
  if (!v) return kNotApplicable;
  return *v ? "PASS" : "FAIL";
}

}  // namespace

std::string group_of(const CellSpec& cell) {
  if (cell.controller == "rl") return "rl:" + to_string(cell.scenario);
  return cell.controller;
}

std::vector<GroupSummary> summarize_groups(const std::vector<StoredResult>& results,
                                           double beta, double p_max) {
  std::map<std::string, std::vector<const StoredResult*>> by_group;
  for (const StoredResult& r : results) {
    if (same(r.cell.beta, beta) && same(r.cell.p_max, p_max)) {
      by_group[group_of(r.cell)].push_back(&r);
    }
  }
  std::vector<GroupSummary> out;
  for (const auto& [name, rows] : by_group) out.push_back(summarize_rows(name, rows));
  return out;
}

std::optional<double> sensitivity_variation(const std::vector<StoredResult>& results,
                                            ScenarioId scenario, double beta) {
  std::map<double, std::vector<const StoredResult*>> by_p;
  for (const StoredResult& r : results) {
    if (r.cell.controller == "rl" && r.cell.scenario == scenario && same(r.cell.beta, beta)) {
      by_p[r.cell.p_max].push_back(&r);
    }
  }
  if (by_p.size() < 2) return std::nullopt;
  std::optional<double> at_one, lo, hi;
  for (const auto& [p, rows] : by_p) {
    const auto mae = median_of(collect(rows, [](const MetricsSummary& m) {
      return m.mae_to_setpoint;
    }));
    if (!mae) return std::nullopt;
    if (same(p, 1.0)) at_one = mae;
    lo = lo ? std::min(*lo, *mae) : *mae;
    hi = hi ? std::max(*hi, *mae) : *mae;
  }
  if (!at_one || *at_one <= 0.0) return std::nullopt;
  return (*hi - *lo) / *at_one;
}

OrderingChecks check_orderings(const std::vector<StoredResult>& results, double beta) {
  const std::vector<GroupSummary> groups = summarize_groups(results, beta, 1.0);
  const GroupSummary* mpc = find_group(groups, "mpc");
  const GroupSummary* rule = find_group(groups, "rule");
  const GroupSummary* s1 = find_group(groups, "rl:S1");
  const GroupSummary* s3 = find_group(groups, "rl:S3");
  OrderingChecks c;
  if (s1 && rule && s1->total_cost && rule->total_cost) {
    c.hitl_cost_le_rule = *s1->total_cost <= *rule->total_cost;
  }
  if (s1 && mpc && s1->total_cost && mpc->total_cost) {
    c.hitl_within_mpc_margin = *s1->total_cost <= 1.25 * *mpc->total_cost;
  }
  if (mpc && rule && s1 && mpc->violation_probability && rule->violation_probability &&
      s1->violation_probability) {
    c.violation_order = *mpc->violation_probability <= *rule->violation_probability &&
                        *rule->violation_probability <= *s1->violation_probability;
  }
  if (rule && rule->mae_to_setpoint && groups.size() > 1) {
    bool smallest = true;
    for (const GroupSummary& g : groups) {
      if (&g == rule || !g.mae_to_setpoint) continue;
      smallest = smallest && *rule->mae_to_setpoint < *g.mae_to_setpoint;
    }
    c.rule_mae_smallest = smallest;
  }
  if (mpc && mpc->violation_probability) {
    bool all_zero = true;
    for (const StoredResult& r : results) {
      if (r.cell.controller != "mpc" || !same(r.cell.beta, beta) || !r.ok()) continue;
      all_zero = all_zero && r.metrics->violation_probability.value_or(0.0) == 0.0;
    }
    c.mpc_violation_zero = all_zero;
  }
  if (s1 && s3 && s1->total_cost && s3->total_cost) {
    c.s1_cost_le_s3 = *s1->total_cost <= *s3->total_cost;
  }
  return c;
}

void write_results_csv(std::ostream& out, const std::vector<StoredResult>& results) {
  out << "key,status,controller,scenario,beta,p_max,seed,config_hash,checkpoint_hash,"
         "violation_probability,mae_to_setpoint,energy_cost,discomfort_cost,total_cost,"
         "override_count,occupied_steps,steps,episodes,error\n";
  for (const StoredResult& r : sorted(results)) {
    out << r.key << ',' << r.status << ',' << r.cell.controller << ','
        << to_string(r.cell.scenario) << ',' << num(r.cell.beta) << ',' << num(r.cell.p_max)
        << ',' << r.cell.seed << ',' << r.config_hash << ','
        << (r.checkpoint_hash.empty() ? kNotApplicable : r.checkpoint_hash) << ',';
    if (r.ok()) {
      const MetricsSummary& m = *r.metrics;
      out << num(m.violation_probability) << ',' << num(m.mae_to_setpoint) << ','
          << num(m.energy_cost) << ',' << num(m.discomfort_cost) << ',' << num(m.total_cost)
          << ',' << m.override_count << ',' << m.occupied_steps << ',' << m.steps << ','
          << m.episodes << ',';
    } else {
      for (int i = 0; i < 9; ++i) out << kNotApplicable << ',';
    }
    out << (r.error.empty() ? kNotApplicable : sanitize(r.error)) << '\n';
  }
}

namespace {

void write_cost_vs_beta(std::ostream& out, const std::vector<StoredResult>& results) {
  std::map<std::tuple<std::string, double, double>, std::vector<const StoredResult*>> groups;
  for (const StoredResult& r : results) {
    groups[{group_of(r.cell), r.cell.beta, r.cell.p_max}].push_back(&r);
  }
  out << "group,beta,p_max,runs,failed,total_q1,total_median,total_q3\n";
  for (const auto& [k, rows] : groups) {
    const auto& [group, beta, p_max] = k;
    const GroupSummary g = summarize_rows(group, rows);
    const auto d = summarize(collect(rows, [](const MetricsSummary& m) {
      return std::optional<double>(m.total_cost);
    }));
    out << group << ',' << num(beta) << ',' << num(p_max) << ',' << g.runs << ',' << g.failed
        << ',' << num(d ? std::optional(d->q1) : std::nullopt) << ','
        << num(d ? std::optional(d->median) : std::nullopt) << ','
        << num(d ? std::optional(d->q3) : std::nullopt) << '\n';
  }
}

void write_sensitivity(std::ostream& out, const std::vector<StoredResult>& results) {
  std::map<std::tuple<std::string, double, double>, std::vector<const StoredResult*>> groups;
  for (const StoredResult& r : results) {
    if (r.cell.controller != "rl") continue;
    groups[{to_string(r.cell.scenario), r.cell.beta, r.cell.p_max}].push_back(&r);
  }
  out << "scenario,beta,p_max,runs,failed,mae_median,violation_median,total_median\n";
  for (const auto& [k, rows] : groups) {
    const auto& [scenario, beta, p_max] = k;
    const GroupSummary g = summarize_rows(scenario, rows);
    out << scenario << ',' << num(beta) << ',' << num(p_max) << ',' << g.runs << ','
        << g.failed << ',' << num(g.mae_to_setpoint) << ',' << num(g.violation_probability)
        << ',' << num(g.total_cost) << '\n';
  }
}

void write_summary(std::ostream& out, const std::vector<StoredResult>& results) {
  std::set<double> betas;
  std::size_t failed = 0;
  for (const StoredResult& r : results) {
    betas.insert(r.cell.beta);
    if (!r.ok()) ++failed;
  }
  out << "cells " << results.size() << ", failed " << failed << "\n";
  for (double beta : betas) {
    out << "\nbeta " << short_num(beta, "%.2f") << ", p_max 1.00 (medians over runs)\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %5s %6s %12s %8s %10s %10s\n", "group", "runs",
                  "failed", "violation", "mae", "energy", "total");
    out << line;
    for (const GroupSummary& g : summarize_groups(results, beta, 1.0)) {
      std::snprintf(line, sizeof line, "%-8s %5zu %6zu %12s %8s %10s %10s\n", g.group.c_str(),
                    g.runs, g.failed,
                    g.violation_probability
                        ? short_num(*g.violation_probability * 100.0, "%.2f%%").c_str()
                        : kNotApplicable,
                    short_num(g.mae_to_setpoint, "%.3f").c_str(),
                    short_num(g.energy_cost, "%.3f").c_str(),
                    short_num(g.total_cost, "%.3f").c_str());
      out << line;
    }
    const OrderingChecks c = check_orderings(results, beta);
    out << "ordering: optimization violation 0: " << verdict(c.mpc_violation_zero) << "\n";
    out << "ordering: violation mpc <= rule <= hitl(S1): " << verdict(c.violation_order) << "\n";
    out << "ordering: rule MAE smallest: " << verdict(c.rule_mae_smallest) << "\n";
    out << "ordering: hitl(S1) total <= rule total: " << verdict(c.hitl_cost_le_rule) << "\n";
    out << "ordering: hitl(S1) total <= 1.25 x mpc total: " << verdict(c.hitl_within_mpc_margin)
        << "\n";
    out << "ordering: hitl(S1) total <= hitl(S3) total: " << verdict(c.s1_cost_le_s3) << "\n";
  }
  bool header = false;
  for (double beta : betas) {
    for (ScenarioId s : {ScenarioId::kS1, ScenarioId::kS2, ScenarioId::kS3, ScenarioId::kS4}) {
      const auto v = sensitivity_variation(results, s, beta);
      if (!v) continue;
      if (!header) {
        out << "\np_max sensitivity: (max - min) / MAE at p_max 1\n";
        header = true;
      }
      out << to_string(s) << " beta " << short_num(beta, "%.2f") << ": "
          << short_num(*v * 100.0, "%.3f%%") << "\n";
    }
  }
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StoreError("cannot write report file " + path.string());
  out << text;
  out.flush();
  if (!out) throw StoreError("write failed for report file " + path.string());
  return path;
}

}  // namespace

std::vector<fs::path> emit_report(const ResultStore& store, const fs::path& dir) {
  const std::vector<StoredResult> results = sorted(store.all());
  if (results.empty()) throw StoreError("result store " + store.dir().string() + " is empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create report directory " + dir.string() + ": " + ec.message());
  std::vector<fs::path> paths;
  std::ostringstream csv, beta, sens, summary;
  write_results_csv(csv, results);
  write_cost_vs_beta(beta, results);
  write_sensitivity(sens, results);
  write_summary(summary, results);
  paths.push_back(write_file(dir / "results.csv", csv.str()));
  paths.push_back(write_file(dir / "cost_vs_beta.csv", beta.str()));
  paths.push_back(write_file(dir / "sensitivity.csv", sens.str()));
  paths.push_back(write_file(dir / "summary.txt", summary.str()));
  return paths;
}

}  // namespace hvac::harness
