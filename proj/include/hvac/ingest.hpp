#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hvac/domain.hpp"

namespace hvac::ingest {

enum class SeriesKind { kOccupancy, kTemperature, kPrice };

struct RawSeries {
  std::vector<std::int64_t> timestamps;  // seconds, naive local time
  std::vector<double> values;
  SeriesKind kind = SeriesKind::kTemperature;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line,
             const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GapError : public std::runtime_error {
 public:
  GapError(std::vector<std::pair<std::int64_t, std::int64_t>> spans,
           const std::string& what);
  /// Missing [from, to] instants, exclusive of the observed endpoints.
  const std::vector<std::pair<std::int64_t, std::int64_t>>& spans() const {
    return spans_;
  }

 private:
  std::vector<std::pair<std::int64_t, std::int64_t>> spans_;
};

constexpr std::int64_t kGridSeconds = 900;

/// "YYYY-MM-DDTHH:MM[:SS]" or "YYYY-MM-DD HH:MM[:SS]" to epoch seconds.
/// No timezone handling; callers add a fixed offset if they need one.
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t epoch_s);

/// Header `timestamp,resident_1..resident_N`, cells 1 = away, 0 = home.
/// Sub-15-minute data is reduced per resident by 15-minute majority vote
/// (ties count as home) before aggregation; the house is unoccupied only
/// when every resident is away.
RawSeries load_occupancy_csv(std::istream& in, int residents,
                             const std::string& source = "<stream>");
RawSeries load_occupancy_csv(const std::filesystem::path& path, int residents);

/// Weather `timestamp,temp_c` or market `timestamp,price_per_mwh`.
/// Prices are converted to $/kWh. Gaps wider than one cadence step throw.
RawSeries load_hourly_csv(std::istream& in, SeriesKind kind,
                          const std::string& source = "<stream>");
RawSeries load_hourly_csv(const std::filesystem::path& path, SeriesKind kind);

/// Onto the 15-minute grid spanning the series. Continuous kinds are
/// linearly interpolated; occupancy is step-held and thresholded.
RawSeries resample_15min(const RawSeries& series);

/// Intersects three resampled series on their common grid.
ExogenousTraces align(const RawSeries& occupancy, const RawSeries& weather,
                      const RawSeries& price, int cycle_steps = 96);

std::pair<ExogenousTraces, ExogenousTraces> split_train_test(
    const ExogenousTraces& traces, int train_days = 23, int test_days = 7);

struct SynthProfile {
  double t_min_degc = 5.0;
  double t_max_degc = 15.0;
  double temp_noise_degc = 0.4;
  double price_base_per_mwh = 80.0;
  double morning_peak_per_mwh = 60.0;
  double evening_peak_per_mwh = 110.0;
  double price_noise_per_mwh = 12.0;
  double spike_probability = 0.004;
  double spike_per_mwh = 600.0;
  double negative_probability = 0.01;
  double leave_hour = 9.0;
  double return_hour = 17.5;
  double jitter_hours = 0.5;
  double weekend_outing_probability = 0.6;
  // 2023-05-01 00:00, a Monday.
  std::int64_t start_epoch_s = 1682899200;
};

/// Desk-scale stand-in for the non-bundled datasets. Deterministic in seed.
ExogenousTraces synth_traces(int days, std::uint64_t seed,
                             const SynthProfile& profile = {});

/// Binary dataset file; layout documented in docs/formats.md.
void save_dataset(const ExogenousTraces& traces,
                  const std::filesystem::path& path);
ExogenousTraces load_dataset(const std::filesystem::path& path);

/// `timestamp,temp_c,price_per_kwh,occupancy` with round-trip precision.
void write_traces_csv(const ExogenousTraces& traces, std::ostream& out);
ExogenousTraces read_traces_csv(std::istream& in, int cycle_steps = 96);

/// Minimal comma-separated table reader shared by the report round-trip.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(std::istream& in, const std::string& source = "<stream>");

}  // namespace hvac::ingest
