#include "hvac/ingest.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hvac/rng.hpp"

namespace hvac::ingest {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

std::int64_t min_positive_step(const std::vector<std::int64_t>& ts) {
  std::int64_t step = 0;
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const std::int64_t d = ts[i] - ts[i - 1];
    if (step == 0 || d < step) step = d;
  }
  return step;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line,
                       const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

GapError::GapError(std::vector<std::pair<std::int64_t, std::int64_t>> spans,
                   const std::string& what)
    : std::runtime_error(what), spans_(std::move(spans)) {}

std::int64_t parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const std::string t(text);
  const int n =
      std::sscanf(t.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h,
                  &mi, &s);
  if (n < 6 || (sep != 'T' && sep != ' ')) {
    throw std::invalid_argument("bad timestamp '" + t + "'");
  }
  if (n == 6) s = 0;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
    throw std::invalid_argument("bad timestamp '" + t + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t epoch_s) {
  using namespace std::chrono;
  std::int64_t days = epoch_s / 86400;
  std::int64_t rem = epoch_s % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

RawSeries load_occupancy_csv(std::istream& in, int residents,
                             const std::string& source) {
  if (residents < 1) throw std::invalid_argument("residents must be >= 1");
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  const auto header = split_fields(line);
  if (header.size() != static_cast<std::size_t>(residents) + 1 ||
      trim(header[0]) != "timestamp") {
    throw ParseError(source, lineno,
                     "expected header timestamp,resident_1..resident_" +
                         std::to_string(residents));
  }
  for (int r = 1; r <= residents; ++r) {
    if (trim(header[r]) != "resident_" + std::to_string(r)) {
      throw ParseError(source, lineno,
                       "expected column resident_" + std::to_string(r));
    }
  }

  std::vector<std::int64_t> ts;
  std::vector<std::vector<std::uint8_t>> away;  // [row][resident]
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(f.size()));
    }
    std::int64_t t;
    try {
      t = parse_timestamp(trim(f[0]));
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (!ts.empty() && t <= ts.back()) {
      throw ParseError(source, lineno, "timestamps must strictly increase");
    }
    std::vector<std::uint8_t> row(residents);
    for (int r = 0; r < residents; ++r) {
      const std::string cell = trim(f[r + 1]);
      if (cell != "0" && cell != "1") {
        throw ValidationError(source + ":" + std::to_string(lineno) +
                              ": resident_" + std::to_string(r + 1) +
                              " cell '" + cell + "' is not 0/1");
      }
      row[r] = cell == "1" ? 1 : 0;
    }
    ts.push_back(t);
    away.push_back(std::move(row));
  }
  if (ts.empty()) throw ParseError(source, lineno, "no data rows");

  RawSeries out;
  out.kind = SeriesKind::kOccupancy;
  const std::int64_t cadence = min_positive_step(ts);
  if (ts.size() > 1 && cadence < kGridSeconds) {
    // Majority vote per resident within each 15-minute bin.
    std::map<std::int64_t, std::pair<std::vector<int>, int>> bins;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::int64_t key =
          ts[i] - ((ts[i] % kGridSeconds) + kGridSeconds) % kGridSeconds;
      auto& [counts, total] = bins[key];
      if (counts.empty()) counts.assign(residents, 0);
      for (int r = 0; r < residents; ++r) counts[r] += away[i][r];
      ++total;
    }
    for (const auto& [key, bin] : bins) {
      const auto& [counts, total] = bin;
      bool all_away = true;
      for (int r = 0; r < residents; ++r) {
        if (2 * counts[r] <= total) all_away = false;
      }
      out.timestamps.push_back(key);
      out.values.push_back(all_away ? 0.0 : 1.0);
    }
  } else {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const bool all_away = std::all_of(away[i].begin(), away[i].end(),
                                        [](std::uint8_t a) { return a == 1; });
      out.timestamps.push_back(ts[i]);
      out.values.push_back(all_away ? 0.0 : 1.0);
    }
  }
  return out;
}

RawSeries load_occupancy_csv(const std::filesystem::path& path,
                             int residents) {
  auto in = open_or_throw(path);
  return load_occupancy_csv(in, residents, path.string());
}

RawSeries load_hourly_csv(std::istream& in, SeriesKind kind,
                          const std::string& source) {
  if (kind == SeriesKind::kOccupancy) {
    throw std::invalid_argument("use load_occupancy_csv for occupancy");
  }
  const std::string value_col =
      kind == SeriesKind::kPrice ? "price_per_mwh" : "temp_c";
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  const auto header = split_fields(line);
  if (header.size() != 2 || trim(header[0]) != "timestamp" ||
      trim(header[1]) != value_col) {
    throw ParseError(source, lineno, "expected header timestamp," + value_col);
  }
  RawSeries out;
  out.kind = kind;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 2) {
      throw ParseError(source, lineno,
                       "expected 2 fields, got " + std::to_string(f.size()));
    }
    std::int64_t t;
    try {
      t = parse_timestamp(trim(f[0]));
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, lineno, e.what());
    }
    double v;
    if (!parse_double(f[1], v)) {
      throw ParseError(source, lineno, "bad number '" + trim(f[1]) + "'");
    }
    if (!out.timestamps.empty() && t <= out.timestamps.back()) {
      throw ParseError(source, lineno, "timestamps must strictly increase");
    }
    out.timestamps.push_back(t);
    out.values.push_back(kind == SeriesKind::kPrice ? v / 1000.0 : v);
  }
  if (out.timestamps.empty()) throw ParseError(source, lineno, "no data rows");

  const std::int64_t cadence = min_positive_step(out.timestamps);
  if (cadence > 3600) {
    throw ValidationError(source + ": cadence " + std::to_string(cadence) +
                          " s is coarser than hourly");
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> gaps;
  std::string listing;
  for (std::size_t i = 1; i < out.timestamps.size(); ++i) {
    const std::int64_t d = out.timestamps[i] - out.timestamps[i - 1];
    if (d > cadence) {
      const std::int64_t from = out.timestamps[i - 1] + cadence;
      const std::int64_t to = out.timestamps[i] - cadence;
      gaps.emplace_back(from, to);
      listing += " [" + format_timestamp(from) + " .. " +
                 format_timestamp(to) + "]";
    }
  }
  if (!gaps.empty()) {
    throw GapError(gaps, source + ": missing spans" + listing);
  }
  return out;
}

RawSeries load_hourly_csv(const std::filesystem::path& path,
                          SeriesKind kind) {
  auto in = open_or_throw(path);
  return load_hourly_csv(in, kind, path.string());
}

RawSeries resample_15min(const RawSeries& series) {
  if (series.timestamps.empty()) {
    throw std::invalid_argument("cannot resample an empty series");
  }
  if (series.timestamps.size() != series.values.size()) {
    throw std::invalid_argument("timestamps/values length mismatch");
  }
  const auto& ts = series.timestamps;
  const auto& vs = series.values;
  auto floor_grid = [](std::int64_t t) {
    return t - ((t % kGridSeconds) + kGridSeconds) % kGridSeconds;
  };
  std::int64_t start = floor_grid(ts.front());
  if (start < ts.front()) start += kGridSeconds;
  const std::int64_t end = floor_grid(ts.back());

  RawSeries out;
  out.kind = series.kind;
  std::size_t seg = 0;
  for (std::int64_t g = start; g <= end; g += kGridSeconds) {
    while (seg + 1 < ts.size() && ts[seg + 1] <= g) ++seg;
    double v;
    if (ts[seg] == g || seg + 1 == ts.size()) {
      v = vs[seg];
    } else if (series.kind == SeriesKind::kOccupancy) {
      v = vs[seg];
    } else {
      const double w = static_cast<double>(g - ts[seg]) /
                       static_cast<double>(ts[seg + 1] - ts[seg]);
      const double lo = std::min(vs[seg], vs[seg + 1]);
      const double hi = std::max(vs[seg], vs[seg + 1]);
      v = std::clamp(vs[seg] + (vs[seg + 1] - vs[seg]) * w, lo, hi);
    }
    if (series.kind == SeriesKind::kOccupancy) v = v >= 0.5 ? 1.0 : 0.0;
    out.timestamps.push_back(g);
    out.values.push_back(v);
  }
  return out;
}

ExogenousTraces align(const RawSeries& occupancy, const RawSeries& weather,
                      const RawSeries& price, int cycle_steps) {
  for (const RawSeries* s : {&occupancy, &weather, &price}) {
    if (s->timestamps.empty()) throw std::invalid_argument("empty series");
    for (std::size_t i = 1; i < s->timestamps.size(); ++i) {
      if (s->timestamps[i] - s->timestamps[i - 1] != kGridSeconds) {
        throw std::invalid_argument("align expects 15-minute resampled series");
      }
    }
  }
  const std::int64_t start =
      std::max({occupancy.timestamps.front(), weather.timestamps.front(),
                price.timestamps.front()});
  const std::int64_t end =
      std::min({occupancy.timestamps.back(), weather.timestamps.back(),
                price.timestamps.back()});
  if (end < start) throw std::invalid_argument("series do not overlap in time");
  const std::size_t n = static_cast<std::size_t>((end - start) / kGridSeconds) + 1;
  auto offset = [&](const RawSeries& s) {
    return static_cast<std::size_t>((start - s.timestamps.front()) /
                                    kGridSeconds);
  };
  ExogenousTraces out;
  out.dt_hours = kGridSeconds / 3600.0;
  out.cycle_steps = cycle_steps;
  out.start_epoch_s = start;
  const std::size_t oo = offset(occupancy), ow = offset(weather),
                    op = offset(price);
  for (std::size_t i = 0; i < n; ++i) {
    out.occupancy.push_back(occupancy.values[oo + i] >= 0.5 ? 1 : 0);
    out.t_out_degc.push_back(weather.values[ow + i]);
    out.rho_per_kwh.push_back(price.values[op + i]);
  }
  out.validate();
  return out;
}

std::pair<ExogenousTraces, ExogenousTraces> split_train_test(
    const ExogenousTraces& traces, int train_days, int test_days) {
  if (train_days < 1 || test_days < 1) {
    throw std::invalid_argument("train_days and test_days must be >= 1");
  }
  const std::size_t per_day = static_cast<std::size_t>(traces.cycle_steps);
  const std::size_t train_steps = per_day * train_days;
  const std::size_t need = per_day * (train_days + test_days);
  if (traces.size() < need) {
    throw std::invalid_argument(
        "split_train_test requires " + std::to_string(need) +
        " steps, available " + std::to_string(traces.size()));
  }
  return {traces.slice(0, train_steps), traces.slice(train_steps, need)};
}

ExogenousTraces synth_traces(int days, std::uint64_t seed,
                             const SynthProfile& p) {
  if (days < 1) throw std::invalid_argument("days must be >= 1");
  if (p.t_max_degc < p.t_min_degc) {
    throw std::invalid_argument("profile t_max below t_min");
  }
  constexpr int kSteps = 96;
  const Rng root(seed);
  Rng temp_rng = root.substream("temperature");
  Rng price_rng = root.substream("price");
  Rng occ_rng = root.substream("occupancy");

  ExogenousTraces out;
  out.dt_hours = 0.25;
  out.cycle_steps = kSteps;
  out.start_epoch_s = p.start_epoch_s;
  const std::size_t n = static_cast<std::size_t>(days) * kSteps;
  out.t_out_degc.reserve(n);
  out.rho_per_kwh.reserve(n);
  out.occupancy.reserve(n);

  const double mid = 0.5 * (p.t_min_degc + p.t_max_degc);
  const double amp = 0.35 * (p.t_max_degc - p.t_min_degc);
  // 1970-01-01 was a Thursday; Monday = 0.
  const std::int64_t start_day = p.start_epoch_s / 86400;
  double day_offset = 0.0;
  for (int d = 0; d < days; ++d) {
    day_offset = 0.6 * day_offset + temp_rng.normal(0.0, 1.2);
    const int weekday = static_cast<int>(((start_day + d) % 7 + 3) % 7);
    const bool weekend = weekday >= 5;

    double away_from = 25.0, away_to = 25.0;
    if (!weekend) {
      away_from = p.leave_hour + occ_rng.normal(0.0, p.jitter_hours);
      away_to = p.return_hour + occ_rng.normal(0.0, 1.5 * p.jitter_hours);
    } else if (occ_rng.uniform() < p.weekend_outing_probability) {
      away_from = occ_rng.uniform(10.0, 15.0);
      away_to = away_from + occ_rng.uniform(2.0, 4.0);
    }
    const bool negative_window = price_rng.uniform() < 10 * p.negative_probability;

    for (int s = 0; s < kSteps; ++s) {
      const double hour = s * 0.25;
      double t = mid + amp * std::cos(2.0 * std::numbers::pi * (hour - 15.0) / 24.0) +
                 day_offset + temp_rng.normal(0.0, p.temp_noise_degc);
      out.t_out_degc.push_back(std::clamp(t, p.t_min_degc, p.t_max_degc));

      const double morning = std::exp(-0.5 * std::pow((hour - 8.0) / 1.2, 2));
      const double evening = std::exp(-0.5 * std::pow((hour - 18.5) / 1.5, 2));
      double price = p.price_base_per_mwh + p.morning_peak_per_mwh * morning +
                     p.evening_peak_per_mwh * evening +
                     price_rng.normal(0.0, p.price_noise_per_mwh);
      if (price_rng.uniform() < p.spike_probability) {
        price += p.spike_per_mwh * price_rng.uniform(0.5, 1.5);
      }
      if (negative_window && hour >= 11.0 && hour < 15.0) {
        price = -price_rng.uniform(5.0, 40.0);
      }
      out.rho_per_kwh.push_back(price / 1000.0);

      const bool away = hour >= away_from && hour < away_to;
      out.occupancy.push_back(away ? 0 : 1);
    }
  }
  return out;
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("dataset truncated while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

constexpr char kDatasetMagic[4] = {'H', 'V', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void save_dataset(const ExogenousTraces& traces,
                  const std::filesystem::path& path) {
  traces.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kDatasetMagic, 4);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint64_t>(out, traces.size());
  put<double>(out, traces.dt_hours);
  put<std::int32_t>(out, traces.cycle_steps);
  put<std::int64_t>(out, traces.start_epoch_s);
  for (double v : traces.t_out_degc) put<double>(out, v);
  for (double v : traces.rho_per_kwh) put<double>(out, v);
  for (std::uint8_t v : traces.occupancy) put<std::uint8_t>(out, v);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ExogenousTraces load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw std::runtime_error(path.string() + " is not an hvacsim dataset");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kDatasetVersion) {
    throw std::runtime_error("unsupported dataset version " +
                             std::to_string(version));
  }
  ExogenousTraces t;
  const auto n = get<std::uint64_t>(in, "length");
  t.dt_hours = get<double>(in, "dt_hours");
  t.cycle_steps = get<std::int32_t>(in, "cycle_steps");
  t.start_epoch_s = get<std::int64_t>(in, "start");
  t.t_out_degc.resize(n);
  t.rho_per_kwh.resize(n);
  t.occupancy.resize(n);
  for (auto& v : t.t_out_degc) v = get<double>(in, "t_out");
  for (auto& v : t.rho_per_kwh) v = get<double>(in, "rho");
  for (auto& v : t.occupancy) v = get<std::uint8_t>(in, "occupancy");
  t.validate();
  return t;
}

void write_traces_csv(const ExogenousTraces& traces, std::ostream& out) {
  out << "timestamp,temp_c,price_per_kwh,occupancy\n";
  const auto step_s =
      static_cast<std::int64_t>(std::llround(traces.dt_hours * 3600.0));
  char buf[96];
  for (std::size_t i = 0; i < traces.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d\n", traces.t_out_degc[i],
                  traces.rho_per_kwh[i], traces.occupancy[i]);
    out << format_timestamp(traces.start_epoch_s +
                            static_cast<std::int64_t>(i) * step_s)
        << buf;
  }
}

ExogenousTraces read_traces_csv(std::istream& in, int cycle_steps) {
  const CsvTable table = read_csv(in, "<traces>");
  if (table.header != std::vector<std::string>{"timestamp", "temp_c",
                                               "price_per_kwh", "occupancy"}) {
    throw ParseError("<traces>", 1,
                     "expected header timestamp,temp_c,price_per_kwh,occupancy");
  }
  ExogenousTraces t;
  t.cycle_steps = cycle_steps;
  std::vector<std::int64_t> ts;
  std::size_t lineno = 1;
  for (const auto& row : table.rows) {
    ++lineno;
    if (row.size() != 4) throw ParseError("<traces>", lineno, "expected 4 fields");
    double temp, price, occ;
    if (!parse_double(row[1], temp) || !parse_double(row[2], price) ||
        !parse_double(row[3], occ)) {
      throw ParseError("<traces>", lineno, "bad number");
    }
    ts.push_back(parse_timestamp(row[0]));
    t.t_out_degc.push_back(temp);
    t.rho_per_kwh.push_back(price);
    t.occupancy.push_back(occ >= 0.5 ? 1 : 0);
  }
  if (ts.empty()) throw ParseError("<traces>", lineno, "no data rows");
  t.start_epoch_s = ts.front();
  t.dt_hours = ts.size() > 1 ? static_cast<double>(ts[1] - ts[0]) / 3600.0
                             : 0.25;
  t.validate();
  return t;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  table.header = split_fields(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(table.header.size()) +
                           " fields, got " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace hvac::ingest
