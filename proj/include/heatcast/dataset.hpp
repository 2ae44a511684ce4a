#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "heatcast/calendar.hpp"
#include "heatcast/common.hpp"
#include "heatcast/signal.hpp"

namespace heatcast::dataset {

struct MeterReading {
  std::string meter_id;
  std::string dma_id;
  std::int64_t timestamp = 0;  // epoch seconds, whole hours
  double consumption_kwh = 0.0;
};

struct WeatherRecord {
  std::int64_t timestamp = 0;
  double max_temp_c = 0.0;
  double feels_like_c = 0.0;
};

struct CsvRowError {
  std::size_t row = 0;  // 1-based, header is row 1
  std::string message;
};

struct MeterIngest {
  std::vector<MeterReading> readings;
  std::vector<CsvRowError> errors;
};

struct WeatherIngest {
  std::vector<WeatherRecord> records;
  std::vector<CsvRowError> errors;
};

// Header: timestamp,meter_id,dma_id,consumption_kwh (ISO-8601 UTC, hourly).
MeterIngest ingest_meter_csv(const std::filesystem::path& path);
// Header: timestamp,max_temp_c,feels_like_c.
WeatherIngest ingest_weather_csv(const std::filesystem::path& path);

void write_meter_csv(const std::filesystem::path& path, std::span<const MeterReading> readings);
void write_weather_csv(const std::filesystem::path& path, std::span<const WeatherRecord> records);

// Hourly sum per dma_id; hours with no readings inside a DMA's span are
// marked missing for downstream imputation.
std::map<std::string, signal::TimeSeries> aggregate_dma(std::span<const MeterReading> readings);

struct WeatherSeries {
  signal::TimeSeries max_temp;    // unit "degC"
  signal::TimeSeries feels_like;  // unit "degC"
};

WeatherSeries weather_to_series(std::span<const WeatherRecord> records);

// Fixed channel layout of one training example. All scalograms are
// window_hours x scale_count; raw_channels hold the pre-transform windows in
// the same channel order (used by sequence models and scaling).
struct SampleWindow {
  std::int64_t origin = 0;  // midnight the forecast day starts at
  std::string dma_id;
  std::vector<signal::Scalogram> endogenous;
  std::vector<signal::Scalogram> exogenous;
  std::vector<std::vector<double>> raw_channels;  // endo then exo order
  std::vector<double> persistence;                // raw demand over [origin-24h, origin)
  std::vector<double> target;                     // raw demand over [origin, origin+24h)
};

struct FeatureConfig {
  std::size_t window_hours = 24;
  std::size_t scale_count = 24;
  std::size_t horizon = 24;
  std::size_t decomposition_period = 24;
  bool demand_cwt_differenced = true;
  bool temperature_cwt_differenced = false;

  std::string to_text() const;
  static FeatureConfig from_text(const std::string& text);
};

struct FeatureSet {
  std::string dma_id;
  std::vector<std::string> endo_names;
  std::vector<std::string> exo_names;
  FeatureConfig config;
  std::vector<SampleWindow> windows;
};

// Assembles one window per midnight origin that has a full week of history,
// a full forecast day ahead, and fully decomposed demand/weather slices.
FeatureSet build_features(const signal::TimeSeries& demand, const WeatherSeries& weather,
                          const FeatureConfig& config, const std::string& dma_id);

struct SplitSpec {
  int test_year = 2019;
  double train_fraction = 0.8;
};

struct Splits {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> val;
  std::vector<SampleWindow> test;
};

// test = windows whose origin year equals test_year; the remaining windows
// split chronologically, first train_fraction to train.
Splits make_splits(std::span<const SampleWindow> windows, const SplitSpec& spec);

struct ScaleRange {
  double lo = 0.0;
  double hi = 1.0;
  double span() const { return hi - lo > 0.0 ? hi - lo : 1.0; }
  double scale(double v) const { return (v - lo) / span(); }
  double descale(double v) const { return v * span() + lo; }
};

// Per-channel min-max ranges, fitted on the training split only.
struct ChannelScalers {
  std::vector<ScaleRange> scalogram;  // per channel, over all grid cells
  std::vector<ScaleRange> raw;        // per channel, over raw window values
  ScaleRange target;
};

ChannelScalers fit_scalers(std::span<const SampleWindow> train_windows);

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_days = 365;
  std::size_t dma_count = 3;
  double noise_level = 0.3;
  std::int64_t start_epoch = cal::make_epoch(2018, 7, 1);
};

struct SynthData {
  std::map<std::string, signal::TimeSeries> demand;  // per DMA, unit "kWh"
  std::vector<WeatherRecord> weather;
};

// Deterministic synthetic benchmark: yearly + daily + weekly structure plus
// seeded Gaussian noise, demand clipped at zero; temperature runs inversely
// to the demand trend.
SynthData synth_generate(const SynthConfig& config);

// Noise-free structural components; synth_generate adds seeded noise on top.
double synth_demand_base(std::int64_t epoch, std::size_t dma_index);
double synth_max_temp_base(std::int64_t epoch);
double synth_feels_like_base(std::int64_t epoch);

std::string dma_name(std::size_t index);

// Splits each DMA demand series across two meters (60/40, exact sum).
std::vector<MeterReading> demand_to_meter_readings(
    const std::map<std::string, signal::TimeSeries>& demand);

}  // namespace heatcast::dataset
