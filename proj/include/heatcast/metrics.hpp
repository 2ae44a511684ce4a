#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "heatcast/dataset.hpp"
#include "heatcast/models.hpp"

namespace heatcast::eval {

inline constexpr double kMapeEpsilon = 1e-6;

// Mean absolute error in kWh.
double mae(std::span<const double> pred, std::span<const double> actual);

// Mean of |pred-actual| / max(|actual|, epsilon) * 100.
double mape(std::span<const double> pred, std::span<const double> actual);

struct ForecastRecord {
  std::int64_t origin = 0;
  std::string dma_id;
  std::string model;
  std::vector<double> forecast_kwh;
  std::vector<double> actual_kwh;
};

struct ModelMetrics {
  std::size_t windows = 0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double mape_mean = 0.0;
  double mape_std = 0.0;
};

struct MetricsReport {
  std::string model;
  std::map<std::string, ModelMetrics> per_dma;
  ModelMetrics aggregate;
};

// Forecasts every test window, de-scales to kWh, and reduces per-window
// MAE/MAPE to mean +- std per DMA and overall. Window metrics are sorted by
// (dma, origin) before reduction so the report is order-independent.
MetricsReport evaluate(const models::TrainedModel& trained, const dataset::FeatureSet& test,
                       std::vector<ForecastRecord>* records = nullptr);

// Lag-24 persistence baseline over the same windows.
MetricsReport evaluate_persistence(const dataset::FeatureSet& test,
                                   std::vector<ForecastRecord>* records = nullptr);

// Shared reduction used by both evaluate paths: one forecast per window.
MetricsReport evaluate_forecasts(
    const std::string& model_name, std::span<const dataset::SampleWindow> windows,
    const std::function<std::vector<double>(const dataset::SampleWindow&)>& forecast_fn,
    std::vector<ForecastRecord>* records);

// CSV: timestamp,dma_id,model,forecast_kwh,actual_kwh; one row per hour.
void export_forecast(std::span<const ForecastRecord> records,
                     const std::filesystem::path& path);

// CSV: model,dma_id,windows,mae_mean,mae_std,mape_mean,mape_std with one
// "ALL" aggregate row per report.
void write_metrics_csv(std::span<const MetricsReport> reports,
                       const std::filesystem::path& path);

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);

}  // namespace heatcast::eval
