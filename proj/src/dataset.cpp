#include "heatcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "heatcast/config.hpp"

namespace heatcast::dataset {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double_field(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  return std::isfinite(out);
}

bool parse_hour_timestamp(const std::string& s, std::int64_t& out) {
  if (!cal::parse_iso8601(s, out)) return false;
  return out % cal::kHourSeconds == 0;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open file: " + path.string());
  return in;
}

}  // namespace

MeterIngest ingest_meter_csv(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("meter CSV " + path.string() + ": missing header at row 1");
  }
  {
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"timestamp", "meter_id", "dma_id",
                                               "consumption_kwh"};
    if (header != expected) {
      throw FormatError("meter CSV " + path.string() +
                        ": row 1 header must be timestamp,meter_id,dma_id,consumption_kwh");
    }
  }
  MeterIngest out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      out.errors.push_back({row, "expected 4 columns, got " + std::to_string(fields.size())});
      continue;
    }
    MeterReading r;
    if (!parse_hour_timestamp(fields[0], r.timestamp)) {
      out.errors.push_back({row, "bad hourly ISO-8601 timestamp: " + fields[0]});
      continue;
    }
    r.meter_id = fields[1];
    r.dma_id = fields[2];
    if (r.meter_id.empty() || r.dma_id.empty()) {
      out.errors.push_back({row, "empty meter_id or dma_id"});
      continue;
    }
    if (!parse_double_field(fields[3], r.consumption_kwh)) {
      out.errors.push_back({row, "non-numeric consumption: " + fields[3]});
      continue;
    }
    out.readings.push_back(std::move(r));
  }
  return out;
}

WeatherIngest ingest_weather_csv(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("weather CSV " + path.string() + ": missing header at row 1");
  }
  {
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"timestamp", "max_temp_c", "feels_like_c"};
    if (header != expected) {
      throw FormatError("weather CSV " + path.string() +
                        ": row 1 header must be timestamp,max_temp_c,feels_like_c");
    }
  }
  WeatherIngest out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      out.errors.push_back({row, "expected 3 columns, got " + std::to_string(fields.size())});
      continue;
    }
    WeatherRecord r;
    if (!parse_hour_timestamp(fields[0], r.timestamp)) {
      out.errors.push_back({row, "bad hourly ISO-8601 timestamp: " + fields[0]});
      continue;
    }
    if (!parse_double_field(fields[1], r.max_temp_c) ||
        !parse_double_field(fields[2], r.feels_like_c)) {
      out.errors.push_back({row, "non-numeric temperature"});
      continue;
    }
    out.records.push_back(r);
  }
  return out;
}

void write_meter_csv(const std::filesystem::path& path, std::span<const MeterReading> readings) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << "timestamp,meter_id,dma_id,consumption_kwh\n";
  for (const MeterReading& r : readings) {
    out << cal::format_iso8601(r.timestamp) << ',' << r.meter_id << ',' << r.dma_id << ','
        << format_g9(r.consumption_kwh) << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

void write_weather_csv(const std::filesystem::path& path, std::span<const WeatherRecord> records) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << "timestamp,max_temp_c,feels_like_c\n";
  for (const WeatherRecord& r : records) {
    out << cal::format_iso8601(r.timestamp) << ',' << format_g9(r.max_temp_c) << ','
        << format_g9(r.feels_like_c) << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

std::map<std::string, signal::TimeSeries> aggregate_dma(std::span<const MeterReading> readings) {
  if (readings.empty()) throw ContractError("aggregate_dma: no readings");
  struct Range {
    std::int64_t lo = 0, hi = 0;
    bool init = false;
  };
  std::map<std::string, Range> ranges;
  for (const MeterReading& r : readings) {
    if (r.timestamp % cal::kHourSeconds != 0) {
      throw ContractError("aggregate_dma: timestamp not hour aligned: " +
                          cal::format_iso8601(r.timestamp));
    }
    Range& rg = ranges[r.dma_id];
    if (!rg.init) {
      rg.lo = rg.hi = r.timestamp;
      rg.init = true;
    } else {
      rg.lo = std::min(rg.lo, r.timestamp);
      rg.hi = std::max(rg.hi, r.timestamp);
    }
  }
  std::map<std::string, signal::TimeSeries> out;
  for (const auto& [dma, rg] : ranges) {
    signal::TimeSeries ts;
    ts.start = rg.lo;
    ts.unit = "kWh";
    ts.values.assign(static_cast<std::size_t>((rg.hi - rg.lo) / cal::kHourSeconds) + 1,
                     signal::missing());
    out.emplace(dma, std::move(ts));
  }
  for (const MeterReading& r : readings) {
    signal::TimeSeries& ts = out.at(r.dma_id);
    const std::size_t idx = static_cast<std::size_t>((r.timestamp - ts.start) / cal::kHourSeconds);
    if (signal::is_missing(ts.values[idx])) {
      ts.values[idx] = r.consumption_kwh;
    } else {
      ts.values[idx] += r.consumption_kwh;
    }
  }
  return out;
}

WeatherSeries weather_to_series(std::span<const WeatherRecord> records) {
  if (records.empty()) throw ContractError("weather_to_series: no records");
  std::int64_t lo = records.front().timestamp, hi = records.front().timestamp;
  for (const WeatherRecord& r : records) {
    lo = std::min(lo, r.timestamp);
    hi = std::max(hi, r.timestamp);
  }
  WeatherSeries out;
  const std::size_t n = static_cast<std::size_t>((hi - lo) / cal::kHourSeconds) + 1;
  out.max_temp.start = out.feels_like.start = lo;
  out.max_temp.unit = out.feels_like.unit = "degC";
  out.max_temp.values.assign(n, signal::missing());
  out.feels_like.values.assign(n, signal::missing());
  for (const WeatherRecord& r : records) {
    const std::size_t idx = static_cast<std::size_t>((r.timestamp - lo) / cal::kHourSeconds);
    out.max_temp.values[idx] = r.max_temp_c;
    out.feels_like.values[idx] = r.feels_like_c;
  }
  return out;
}

std::string FeatureConfig::to_text() const {
  KeyValueConfig kv;
  kv.set("window_hours", std::to_string(window_hours));
  kv.set("scale_count", std::to_string(scale_count));
  kv.set("horizon", std::to_string(horizon));
  kv.set("decomposition_period", std::to_string(decomposition_period));
  kv.set("demand_cwt_differenced", demand_cwt_differenced ? "true" : "false");
  kv.set("temperature_cwt_differenced", temperature_cwt_differenced ? "true" : "false");
  return kv.to_text();
}

FeatureConfig FeatureConfig::from_text(const std::string& text) {
  const KeyValueConfig kv = KeyValueConfig::parse(text);
  FeatureConfig c;
  c.window_hours = static_cast<std::size_t>(kv.get_int("window_hours", 24));
  c.scale_count = static_cast<std::size_t>(kv.get_int("scale_count", 24));
  c.horizon = static_cast<std::size_t>(kv.get_int("horizon", 24));
  c.decomposition_period = static_cast<std::size_t>(kv.get_int("decomposition_period", 24));
  c.demand_cwt_differenced = kv.get_bool("demand_cwt_differenced", true);
  c.temperature_cwt_differenced = kv.get_bool("temperature_cwt_differenced", false);
  return c;
}

namespace {

bool mask_all(const std::vector<unsigned char>& mask, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    if (!mask[i]) return false;
  }
  return true;
}

std::vector<double> slice(const std::vector<double>& v, std::size_t begin, std::size_t count) {
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                             v.begin() + static_cast<std::ptrdiff_t>(begin + count));
}

// Backward difference aligned with the source series. Index 0 has no prior
// observation and is set to 0.
std::vector<double> backward_difference(const std::vector<double>& x) {
  std::vector<double> d(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) d[i] = x[i] - x[i - 1];
  return d;
}

}  // namespace

FeatureSet build_features(const signal::TimeSeries& demand, const WeatherSeries& weather,
                          const FeatureConfig& config, const std::string& dma_id) {
  const std::size_t h = config.window_hours;
  const std::size_t horizon = config.horizon;
  const std::size_t n = demand.size();

  if (demand.start != weather.max_temp.start || n != weather.max_temp.size() ||
      demand.start != weather.feels_like.start || n != weather.feels_like.size()) {
    const std::int64_t first = std::max(demand.start, weather.max_temp.start);
    throw ContractError("build_features: demand and weather series are misaligned near " +
                        cal::format_iso8601(first));
  }
  if (n < cal::kWeekHours + 2 * h) {
    throw ContractError("build_features: series must span at least two weeks beyond the first "
                        "window, got " +
                        std::to_string(n) + " hours");
  }

  FeatureSet out;
  out.dma_id = dma_id;
  out.config = config;
  out.endo_names = {"demand_lag24", "demand_lag168", "demand_trend", "demand_seasonal",
                    "demand_residual"};
  out.exo_names = {"temp_max",  "temp_feels", "temp_trend", "temp_residual",
                   "hour_sin",  "hour_cos",   "dow_sin",    "dow_cos"};

  const auto scales = signal::default_scales(config.scale_count, h);
  const auto dem_decomp = signal::seasonal_decompose(demand, config.decomposition_period);
  const auto tmp_decomp =
      signal::seasonal_decompose(weather.max_temp, config.decomposition_period);
  const std::vector<double> dem_diff = backward_difference(demand.values);
  const std::vector<double> tmp_diff = backward_difference(weather.max_temp.values);

  const std::vector<double>& dem_cwt_src =
      config.demand_cwt_differenced ? dem_diff : demand.values;
  const std::vector<double>& tmp_cwt_src =
      config.temperature_cwt_differenced ? tmp_diff : weather.max_temp.values;

  for (std::size_t t = cal::kWeekHours; t + horizon <= n; t += 1) {
    const std::int64_t origin = demand.timestamp_at(t);
    if (!cal::is_midnight(origin)) continue;
    if (t < h) continue;
    // Demand components over the day before the origin, weather components
    // over the forecast day; skip windows touching undefined trend.
    if (!mask_all(dem_decomp.mask, t - h, t)) continue;
    if (!mask_all(tmp_decomp.mask, t, t + horizon)) continue;

    SampleWindow w;
    w.origin = origin;
    w.dma_id = dma_id;
    w.persistence = slice(demand.values, t - h, h);
    w.target = slice(demand.values, t, horizon);

    std::vector<std::vector<double>> raw;
    raw.push_back(slice(dem_cwt_src, t - h, h));                      // demand_lag24
    raw.push_back(slice(dem_cwt_src, t - cal::kWeekHours, h));        // demand_lag168
    raw.push_back(slice(dem_decomp.trend, t - h, h));                 // demand_trend
    raw.push_back(slice(dem_decomp.seasonal, t - h, h));              // demand_seasonal
    raw.push_back(slice(dem_decomp.residual, t - h, h));              // demand_residual
    raw.push_back(slice(tmp_cwt_src, t, h));                          // temp_max
    raw.push_back(slice(weather.feels_like.values, t, h));            // temp_feels
    raw.push_back(slice(tmp_decomp.trend, t, h));                     // temp_trend
    raw.push_back(slice(tmp_decomp.residual, t, h));                  // temp_residual

    std::vector<double> hour_sin(h), hour_cos(h), dow_sin(h), dow_cos(h);
    for (std::size_t k = 0; k < h; ++k) {
      const std::int64_t ts = origin + static_cast<std::int64_t>(k) * cal::kHourSeconds;
      const auto [hs, hc] = signal::cyclical_encode(cal::hour_of_day(ts), 24.0);
      const auto [ds, dc] = signal::cyclical_encode(cal::day_of_week(ts), 7.0);
      hour_sin[k] = hs;
      hour_cos[k] = hc;
      dow_sin[k] = ds;
      dow_cos[k] = dc;
    }
    raw.push_back(std::move(hour_sin));
    raw.push_back(std::move(hour_cos));
    raw.push_back(std::move(dow_sin));
    raw.push_back(std::move(dow_cos));

    const std::size_t n_endo = out.endo_names.size();
    for (std::size_t c = 0; c < raw.size(); ++c) {
      signal::Scalogram sg = signal::cwt_scalogram(raw[c], scales);
      if (c < n_endo) {
        w.endogenous.push_back(std::move(sg));
      } else {
        w.exogenous.push_back(std::move(sg));
      }
    }
    w.raw_channels = std::move(raw);
    out.windows.push_back(std::move(w));
  }
  return out;
}

Splits make_splits(std::span<const SampleWindow> windows, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ContractError("make_splits: train_fraction must be in (0, 1)");
  }
  for (std::size_t i = 1; i < windows.size(); ++i) {
    if (windows[i].origin < windows[i - 1].origin) {
      throw ContractError("make_splits: windows must be sorted chronologically");
    }
  }
  Splits out;
  std::vector<const SampleWindow*> rest;
  for (const SampleWindow& w : windows) {
    if (cal::year_of(w.origin) == spec.test_year) {
      out.test.push_back(w);
    } else {
      rest.push_back(&w);
    }
  }
  if (out.test.empty()) {
    throw ContractError("make_splits: no windows fall in test year " +
                        std::to_string(spec.test_year));
  }
  // Split by distinct origins so equal-origin windows never straddle splits.
  std::vector<std::int64_t> origins;
  for (const SampleWindow* w : rest) {
    if (origins.empty() || origins.back() != w->origin) origins.push_back(w->origin);
  }
  const std::size_t n_train =
      static_cast<std::size_t>(static_cast<double>(origins.size()) * spec.train_fraction);
  if (n_train == 0 || n_train >= origins.size()) {
    throw ContractError("make_splits: train/validation split is empty (have " +
                        std::to_string(origins.size()) + " non-test origins)");
  }
  const std::int64_t cutoff = origins[n_train - 1];
  for (const SampleWindow* w : rest) {
    if (w->origin <= cutoff) {
      out.train.push_back(*w);
    } else {
      out.val.push_back(*w);
    }
  }
  return out;
}

ChannelScalers fit_scalers(std::span<const SampleWindow> train_windows) {
  if (train_windows.empty()) throw ContractError("fit_scalers: empty training split");
  const std::size_t n_channels =
      train_windows.front().endogenous.size() + train_windows.front().exogenous.size();
  ChannelScalers out;
  out.scalogram.assign(n_channels, ScaleRange{std::numeric_limits<double>::infinity(),
                                              -std::numeric_limits<double>::infinity()});
  out.raw.assign(n_channels, ScaleRange{std::numeric_limits<double>::infinity(),
                                        -std::numeric_limits<double>::infinity()});
  out.target = ScaleRange{std::numeric_limits<double>::infinity(),
                          -std::numeric_limits<double>::infinity()};

  auto update = [](ScaleRange& r, double v) {
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
  };
  for (const SampleWindow& w : train_windows) {
    for (std::size_t c = 0; c < n_channels; ++c) {
      const signal::Scalogram& sg =
          c < w.endogenous.size() ? w.endogenous[c] : w.exogenous[c - w.endogenous.size()];
      for (double v : sg.grid) update(out.scalogram[c], v);
      for (double v : w.raw_channels[c]) update(out.raw[c], v);
    }
    for (double v : w.target) update(out.target, v);
  }
  return out;
}

std::string dma_name(std::size_t index) {
  if (index < 26) return std::string("DMA_") + static_cast<char>('A' + index);
  return "DMA_" + std::to_string(index);
}

double synth_max_temp_base(std::int64_t epoch) {
  const double yf = cal::year_fraction(epoch);
  const int hour = cal::hour_of_day(epoch);
  const double yearly = 9.0 - 9.5 * std::cos(2.0 * kPi * (yf - 0.54));
  const double daily = 3.5 * std::sin(2.0 * kPi * (hour - 9) / 24.0);
  return yearly + daily;
}

double synth_feels_like_base(std::int64_t epoch) {
  const int hour = cal::hour_of_day(epoch);
  return synth_max_temp_base(epoch) - 1.5 - 0.8 * (1.0 + std::sin(2.0 * kPi * (hour - 3) / 24.0));
}

double synth_demand_base(std::int64_t epoch, std::size_t dma_index) {
  const double scale = 1.0 + 0.35 * static_cast<double>(dma_index);
  const double yf = cal::year_fraction(epoch);
  const int hour = cal::hour_of_day(epoch);
  const int dow = cal::day_of_week(epoch);
  const double yearly = 3.2 * std::cos(2.0 * kPi * (yf - 0.035));
  const double morning = 1.1 * std::exp(-0.5 * std::pow((hour - 7.0) / 2.2, 2.0));
  const double evening = 0.9 * std::exp(-0.5 * std::pow((hour - 19.0) / 2.8, 2.0));
  const double weekly = dow < 5 ? 0.5 : -0.7;
  return scale * (8.0 + yearly + morning + evening + weekly);
}

SynthData synth_generate(const SynthConfig& config) {
  if (config.n_days < 21) throw ContractError("synth_generate: n_days must be >= 21");
  if (config.dma_count < 1) throw ContractError("synth_generate: dma_count must be >= 1");
  if (config.start_epoch % cal::kDaySeconds != 0) {
    throw ContractError("synth_generate: start must be midnight aligned");
  }
  const std::size_t n_hours = config.n_days * 24;
  const Rng base(config.seed);

  SynthData out;
  for (std::size_t d = 0; d < config.dma_count; ++d) {
    Rng rng = base.fork(d);
    signal::TimeSeries ts;
    ts.start = config.start_epoch;
    ts.unit = "kWh";
    ts.values.resize(n_hours);
    const double scale = 1.0 + 0.35 * static_cast<double>(d);
    for (std::size_t i = 0; i < n_hours; ++i) {
      const std::int64_t epoch = ts.timestamp_at(i);
      const double v =
          synth_demand_base(epoch, d) + config.noise_level * scale * rng.gaussian();
      ts.values[i] = std::max(0.0, v);
    }
    out.demand.emplace(dma_name(d), std::move(ts));
  }

  Rng wrng = base.fork(1000);
  out.weather.resize(n_hours);
  for (std::size_t i = 0; i < n_hours; ++i) {
    const std::int64_t epoch =
        config.start_epoch + static_cast<std::int64_t>(i) * cal::kHourSeconds;
    WeatherRecord& r = out.weather[i];
    r.timestamp = epoch;
    r.max_temp_c = synth_max_temp_base(epoch) + config.noise_level * wrng.gaussian();
    r.feels_like_c =
        synth_feels_like_base(epoch) + 0.3 * config.noise_level * wrng.gaussian();
  }
  return out;
}

std::vector<MeterReading> demand_to_meter_readings(
    const std::map<std::string, signal::TimeSeries>& demand) {
  std::vector<MeterReading> out;
  for (const auto& [dma, ts] : demand) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (signal::is_missing(ts.values[i])) continue;
      const double total = ts.values[i];
      const double first = 0.6 * total;
      out.push_back({dma + "_M1", dma, ts.timestamp_at(i), first});
      out.push_back({dma + "_M2", dma, ts.timestamp_at(i), total - first});
    }
  }
  return out;
}

}  // namespace heatcast::dataset
