#include "heatcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "heatcast/calendar.hpp"

namespace heatcast::eval {

double mae(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) {
    throw ContractError("mae: length mismatch " + std::to_string(pred.size()) + " vs " +
                        std::to_string(actual.size()));
  }
  if (pred.empty()) throw ContractError("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - actual[i]);
  return acc / static_cast<double>(pred.size());
}

double mape(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) {
    throw ContractError("mape: length mismatch " + std::to_string(pred.size()) + " vs " +
                        std::to_string(actual.size()));
  }
  if (pred.empty()) throw ContractError("mape: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i] - actual[i]) / std::max(std::abs(actual[i]), kMapeEpsilon);
  }
  return 100.0 * acc / static_cast<double>(pred.size());
}

namespace {

struct WindowMetric {
  std::string dma_id;
  std::int64_t origin = 0;
  double mae = 0.0;
  double mape = 0.0;
};

ModelMetrics reduce(std::span<const WindowMetric> metrics) {
  ModelMetrics out;
  out.windows = metrics.size();
  if (metrics.empty()) return out;
  const double n = static_cast<double>(metrics.size());
  for (const WindowMetric& m : metrics) {
    out.mae_mean += m.mae;
    out.mape_mean += m.mape;
  }
  out.mae_mean /= n;
  out.mape_mean /= n;
  double var_mae = 0.0, var_mape = 0.0;
  for (const WindowMetric& m : metrics) {
    var_mae += (m.mae - out.mae_mean) * (m.mae - out.mae_mean);
    var_mape += (m.mape - out.mape_mean) * (m.mape - out.mape_mean);
  }
  out.mae_std = std::sqrt(var_mae / n);
  out.mape_std = std::sqrt(var_mape / n);
  return out;
}

}  // namespace

MetricsReport evaluate_forecasts(
    const std::string& model_name, std::span<const dataset::SampleWindow> windows,
    const std::function<std::vector<double>(const dataset::SampleWindow&)>& forecast_fn,
    std::vector<ForecastRecord>* records) {
  if (windows.empty()) throw ContractError("evaluate: no test windows");

  std::vector<WindowMetric> metrics;
  metrics.reserve(windows.size());
  std::vector<const dataset::SampleWindow*> order;
  order.reserve(windows.size());
  for (const dataset::SampleWindow& w : windows) order.push_back(&w);
  std::sort(order.begin(), order.end(),
            [](const dataset::SampleWindow* a, const dataset::SampleWindow* b) {
              if (a->dma_id != b->dma_id) return a->dma_id < b->dma_id;
              return a->origin < b->origin;
            });

  for (const dataset::SampleWindow* w : order) {
    const std::vector<double> forecast = forecast_fn(*w);
    if (forecast.size() != w->target.size()) {
      throw ContractError("evaluate: forecast length " + std::to_string(forecast.size()) +
                          " does not match target length " + std::to_string(w->target.size()));
    }
    WindowMetric m;
    m.dma_id = w->dma_id;
    m.origin = w->origin;
    m.mae = mae(forecast, w->target);
    m.mape = mape(forecast, w->target);
    metrics.push_back(std::move(m));
    if (records != nullptr) {
      records->push_back({w->origin, w->dma_id, model_name, forecast, w->target});
    }
  }

  MetricsReport report;
  report.model = model_name;
  report.aggregate = reduce(metrics);
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= metrics.size(); ++i) {
    if (i == metrics.size() || metrics[i].dma_id != metrics[begin].dma_id) {
      report.per_dma[metrics[begin].dma_id] =
          reduce(std::span<const WindowMetric>(metrics.data() + begin, i - begin));
      begin = i;
    }
  }
  return report;
}

MetricsReport evaluate(const models::TrainedModel& trained, const dataset::FeatureSet& test,
                       std::vector<ForecastRecord>* records) {
  if (trained.endo_names != test.endo_names || trained.exo_names != test.exo_names) {
    throw ContractError("evaluate: channel metadata mismatch between model and windows");
  }
  return evaluate_forecasts(
      trained.model->kind(), test.windows,
      [&](const dataset::SampleWindow& w) { return models::predict_kwh(trained, w); }, records);
}

MetricsReport evaluate_persistence(const dataset::FeatureSet& test,
                                   std::vector<ForecastRecord>* records) {
  return evaluate_forecasts(
      "persistence", test.windows,
      [](const dataset::SampleWindow& w) { return w.persistence; }, records);
}

void export_forecast(std::span<const ForecastRecord> records,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write forecast file: " + path.string());
  out << "timestamp,dma_id,model,forecast_kwh,actual_kwh\n";
  for (const ForecastRecord& r : records) {
    for (std::size_t h = 0; h < r.forecast_kwh.size(); ++h) {
      const std::int64_t ts = r.origin + static_cast<std::int64_t>(h) * cal::kHourSeconds;
      out << cal::format_iso8601(ts) << ',' << r.dma_id << ',' << r.model << ','
          << format_g9(r.forecast_kwh[h]) << ',' << format_g9(r.actual_kwh[h]) << '\n';
    }
  }
  if (!out) throw FormatError("forecast write failed: " + path.string());
}

void write_metrics_csv(std::span<const MetricsReport> reports,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write metrics file: " + path.string());
  out << "model,dma_id,windows,mae_mean,mae_std,mape_mean,mape_std\n";
  for (const MetricsReport& r : reports) {
    for (const auto& [dma, m] : r.per_dma) {
      out << r.model << ',' << dma << ',' << m.windows << ',' << format_g17(m.mae_mean) << ','
          << format_g17(m.mae_std) << ',' << format_g17(m.mape_mean) << ','
          << format_g17(m.mape_std) << '\n';
    }
    out << r.model << ",ALL," << r.aggregate.windows << ',' << format_g17(r.aggregate.mae_mean)
        << ',' << format_g17(r.aggregate.mae_std) << ',' << format_g17(r.aggregate.mape_mean)
        << ',' << format_g17(r.aggregate.mape_std) << '\n';
  }
  if (!out) throw FormatError("metrics write failed: " + path.string());
}

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metrics file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("metrics file is empty: " + path.string());

  std::vector<MetricsReport> reports;
  auto find_report = [&](const std::string& model) -> MetricsReport& {
    for (MetricsReport& r : reports) {
      if (r.model == model) return r;
    }
    reports.push_back(MetricsReport{});
    reports.back().model = model;
    return reports.back();
  };

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string model, dma, field;
    ModelMetrics m;
    if (!std::getline(is, model, ',') || !std::getline(is, dma, ',')) {
      throw FormatError("metrics file row " + std::to_string(row) + " malformed");
    }
    try {
      std::getline(is, field, ',');
      m.windows = std::stoull(field);
      std::getline(is, field, ',');
      m.mae_mean = std::stod(field);
      std::getline(is, field, ',');
      m.mae_std = std::stod(field);
      std::getline(is, field, ',');
      m.mape_mean = std::stod(field);
      std::getline(is, field, ',');
      m.mape_std = std::stod(field);
    } catch (const std::exception&) {
      throw FormatError("metrics file row " + std::to_string(row) + " malformed");
    }
    MetricsReport& r = find_report(model);
    if (dma == "ALL") {
      r.aggregate = m;
    } else {
      r.per_dma[dma] = m;
    }
  }
  return reports;
}

}  // namespace heatcast::eval
