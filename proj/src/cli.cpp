#include "heatcast/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "heatcast/config.hpp"
#include "heatcast/dataset.hpp"
#include "heatcast/metrics.hpp"
#include "heatcast/models.hpp"
#include "heatcast/training.hpp"

namespace heatcast::cli {

namespace fs = std::filesystem;

namespace {

struct CleanData {
  std::map<std::string, signal::TimeSeries> demand;
  dataset::WeatherSeries weather;
};

// Intersects all demand series and the weather series on their common
// hourly span.
void trim_to_overlap(CleanData& data) {
  std::int64_t lo = data.weather.max_temp.start;
  std::int64_t hi = data.weather.max_temp.start +
                    static_cast<std::int64_t>(data.weather.max_temp.size() - 1) * cal::kHourSeconds;
  for (const auto& [dma, ts] : data.demand) {
    lo = std::max(lo, ts.start);
    hi = std::min(hi, ts.start + static_cast<std::int64_t>(ts.size() - 1) * cal::kHourSeconds);
  }
  if (hi < lo) throw ContractError("demand and weather series do not overlap");
  auto trim = [&](signal::TimeSeries& ts) {
    const std::size_t begin = static_cast<std::size_t>((lo - ts.start) / cal::kHourSeconds);
    const std::size_t count = static_cast<std::size_t>((hi - lo) / cal::kHourSeconds) + 1;
    std::vector<double> v(ts.values.begin() + static_cast<std::ptrdiff_t>(begin),
                          ts.values.begin() + static_cast<std::ptrdiff_t>(begin + count));
    ts.values = std::move(v);
    ts.start = lo;
  };
  for (auto& [dma, ts] : data.demand) trim(ts);
  trim(data.weather.max_temp);
  trim(data.weather.feels_like);
}

CleanData load_clean(const fs::path& dir) {
  const fs::path demand_path = dir / "demand.csv";
  const fs::path weather_path = dir / "weather.csv";
  if (!fs::exists(demand_path)) {
    throw FormatError("no demand.csv in " + dir.string() + " (run `preprocess` first)");
  }
  const auto meters = dataset::ingest_meter_csv(demand_path);
  if (!meters.errors.empty()) {
    throw FormatError("demand.csv has " + std::to_string(meters.errors.size()) +
                      " malformed rows, first at row " + std::to_string(meters.errors[0].row) +
                      ": " + meters.errors[0].message);
  }
  const auto weather = dataset::ingest_weather_csv(weather_path);
  if (!weather.errors.empty()) {
    throw FormatError("weather.csv has " + std::to_string(weather.errors.size()) +
                      " malformed rows, first at row " + std::to_string(weather.errors[0].row) +
                      ": " + weather.errors[0].message);
  }
  CleanData out;
  out.demand = dataset::aggregate_dma(meters.readings);
  out.weather = dataset::weather_to_series(weather.records);
  trim_to_overlap(out);
  return out;
}

dataset::FeatureConfig feature_config_from(const KeyValueConfig& cfg) {
  dataset::FeatureConfig fc;
  fc.window_hours = static_cast<std::size_t>(cfg.get_int("window_hours", 24));
  fc.scale_count = static_cast<std::size_t>(cfg.get_int("scale_count", 24));
  fc.horizon = static_cast<std::size_t>(cfg.get_int("horizon", 24));
  fc.decomposition_period = static_cast<std::size_t>(cfg.get_int("decomposition_period", 24));
  fc.demand_cwt_differenced = cfg.get_bool("demand_cwt_differenced", true);
  fc.temperature_cwt_differenced = cfg.get_bool("temperature_cwt_differenced", false);
  return fc;
}

dataset::SplitSpec split_spec_from(const KeyValueConfig& cfg) {
  dataset::SplitSpec spec;
  spec.test_year = static_cast<int>(cfg.get_int("test_year", 2019));
  spec.train_fraction = cfg.get_double("train_fraction", 0.8);
  return spec;
}

training::TrainConfig train_config_from(const KeyValueConfig& cfg) {
  training::TrainConfig tc;
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 256));
  tc.learning_rate = cfg.get_double("learning_rate", 0.01);
  tc.max_epochs = static_cast<std::size_t>(cfg.get_int("max_epochs", 150));
  tc.patience = static_cast<std::size_t>(cfg.get_int("patience", 10));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
  return tc;
}

std::string internal_kind(const std::string& cli_model) {
  if (cli_model == "lstm") return "lstm";
  if (cli_model == "f") return "model_f";
  if (cli_model == "fprime") return "model_fprime";
  throw ContractError("unknown model: " + cli_model);
}

std::unique_ptr<models::ForecastModel> build_model(const std::string& kind,
                                                   const dataset::FeatureSet& features,
                                                   const KeyValueConfig& cfg, Rng& rng) {
  const bool paper_scale = cfg.get_string("model_scale", "desk") == "paper";
  models::DefaultConfigs defs =
      paper_scale ? models::default_configs() : models::desk_configs();
  const std::size_t n_endo = features.endo_names.size();
  const std::size_t n_exo = features.exo_names.size();
  const std::size_t h = features.config.window_hours;
  const std::size_t s = features.config.scale_count;
  const std::size_t horizon = features.config.horizon;

  if (kind == "lstm") {
    defs.lstm.input_dim = n_endo + n_exo;
    defs.lstm.horizon = horizon;
    return std::make_unique<models::LstmModel>(defs.lstm, rng);
  }
  if (kind == "model_f") {
    defs.model_f.in_channels = n_endo + n_exo;
    defs.model_f.height = h;
    defs.model_f.width = s;
    defs.model_f.horizon = horizon;
    return std::make_unique<models::ModelF>(defs.model_f, rng);
  }
  if (kind == "model_fprime") {
    defs.model_fprime.endo_channels = n_endo;
    defs.model_fprime.exo_channels = n_exo;
    defs.model_fprime.height = h;
    defs.model_fprime.width = s;
    defs.model_fprime.horizon = horizon;
    defs.model_fprime.heads = static_cast<std::size_t>(
        cfg.get_int("heads", static_cast<long long>(defs.model_fprime.heads)));
    defs.model_fprime.residual = cfg.get_bool("residual", defs.model_fprime.residual);
    return std::make_unique<models::ModelFPrime>(defs.model_fprime, rng);
  }
  throw ContractError("unknown model kind: " + kind);
}

struct CommonOpts {
  std::string config_path;
  long long seed = -1;
  bool seed_set = false;
};

KeyValueConfig resolve_config(const CommonOpts& opts) {
  KeyValueConfig cfg;
  if (!opts.config_path.empty()) cfg = KeyValueConfig::load(opts.config_path);
  if (opts.seed_set) cfg.set("seed", std::to_string(opts.seed));
  return cfg;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const CommonOpts& common, long long days, long long dmas, double noise,
              const std::string& start, bool days_set, bool dmas_set, bool noise_set,
              bool start_set, const std::string& out_dir) {
  KeyValueConfig cfg = resolve_config(common);
  if (days_set) cfg.set("n_days", std::to_string(days));
  if (dmas_set) cfg.set("dma_count", std::to_string(dmas));
  if (noise_set) cfg.set("noise_level", format_g17(noise));
  if (start_set) cfg.set("start_date", start);

  dataset::SynthConfig sc;
  sc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
  sc.n_days = static_cast<std::size_t>(cfg.get_int("n_days", 365));
  sc.dma_count = static_cast<std::size_t>(cfg.get_int("dma_count", 3));
  sc.noise_level = cfg.get_double("noise_level", 0.3);
  const std::string start_date = cfg.get_string("start_date", "2018-07-01");
  if (!cal::parse_date(start_date, sc.start_epoch)) {
    throw FormatError("bad start_date (want YYYY-MM-DD): " + start_date);
  }

  const dataset::SynthData data = dataset::synth_generate(sc);
  fs::create_directories(out_dir);
  dataset::write_meter_csv(fs::path(out_dir) / "meters.csv",
                           dataset::demand_to_meter_readings(data.demand));
  dataset::write_weather_csv(fs::path(out_dir) / "weather.csv", data.weather);

  KeyValueConfig echo;
  echo.set("seed", std::to_string(sc.seed));
  echo.set("n_days", std::to_string(sc.n_days));
  echo.set("dma_count", std::to_string(sc.dma_count));
  echo.set("noise_level", format_g17(sc.noise_level));
  echo.set("start_date", start_date);
  std::ofstream echo_out(fs::path(out_dir) / "synth_config.txt");
  echo_out << echo.to_text();

  std::cout << "wrote " << sc.dma_count << " DMA(s), " << sc.n_days << " days to " << out_dir
            << "\n";
  return 0;
}

// ---- preprocess -------------------------------------------------------------

int cmd_preprocess(const CommonOpts& common, const std::string& data_dir,
                   const std::string& out_dir) {
  const KeyValueConfig cfg = resolve_config(common);
  const double z = cfg.get_double("outlier_z", 5.0);

  const auto meters = dataset::ingest_meter_csv(fs::path(data_dir) / "meters.csv");
  const auto weather_in = dataset::ingest_weather_csv(fs::path(data_dir) / "weather.csv");

  CleanData data;
  data.demand = dataset::aggregate_dma(meters.readings);
  data.weather = dataset::weather_to_series(weather_in.records);

  std::map<std::string, std::size_t> outliers_removed;
  std::map<std::string, std::size_t> imputed;
  for (auto& [dma, ts] : data.demand) {
    const auto cleaned = signal::remove_outliers(ts, z);
    outliers_removed[dma] = cleaned.removed;
    std::size_t missing = 0;
    for (double v : cleaned.series.values) {
      if (signal::is_missing(v) || v < 0.0) ++missing;
    }
    imputed[dma] = missing;
    ts = signal::impute_missing(cleaned.series, true);
  }
  data.weather.max_temp = signal::impute_missing(data.weather.max_temp, false);
  data.weather.feels_like = signal::impute_missing(data.weather.feels_like, false);
  trim_to_overlap(data);

  fs::create_directories(out_dir);
  std::vector<dataset::MeterReading> rows;
  for (const auto& [dma, ts] : data.demand) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      rows.push_back({dma, dma, ts.timestamp_at(i), ts.values[i]});
    }
  }
  dataset::write_meter_csv(fs::path(out_dir) / "demand.csv", rows);

  std::vector<dataset::WeatherRecord> weather_rows(data.weather.max_temp.size());
  for (std::size_t i = 0; i < weather_rows.size(); ++i) {
    weather_rows[i] = {data.weather.max_temp.timestamp_at(i), data.weather.max_temp.values[i],
                       data.weather.feels_like.values[i]};
  }
  dataset::write_weather_csv(fs::path(out_dir) / "weather.csv", weather_rows);

  std::ofstream report(fs::path(out_dir) / "preprocess_report.txt");
  report << "malformed_meter_rows = " << meters.errors.size() << "\n";
  for (const auto& e : meters.errors) {
    report << "meter_row_error " << e.row << ": " << e.message << "\n";
  }
  report << "malformed_weather_rows = " << weather_in.errors.size() << "\n";
  for (const auto& e : weather_in.errors) {
    report << "weather_row_error " << e.row << ": " << e.message << "\n";
  }
  for (const auto& [dma, n] : outliers_removed) {
    report << "outliers_removed." << dma << " = " << n << "\n";
    report << "values_imputed." << dma << " = " << imputed.at(dma) << "\n";
  }
  std::cout << "preprocessed " << data.demand.size() << " DMA(s) into " << out_dir << "\n";
  return 0;
}

// ---- decompose --------------------------------------------------------------

int cmd_decompose(const CommonOpts& common, const std::string& data_dir, const std::string& dma,
                  const std::string& series_name, long long period, const std::string& out_file) {
  (void)common;
  const CleanData data = load_clean(data_dir);
  const signal::TimeSeries* series = nullptr;
  if (series_name == "demand") {
    if (dma.empty()) throw ContractError("specify --dma for the demand series");
    auto it = data.demand.find(dma);
    if (it == data.demand.end()) throw ContractError("unknown DMA: " + dma);
    series = &it->second;
  } else if (series_name == "temp_max") {
    series = &data.weather.max_temp;
  } else if (series_name == "feels_like") {
    series = &data.weather.feels_like;
  } else {
    throw ContractError("unknown series: " + series_name);
  }
  const auto dec = signal::seasonal_decompose(*series, static_cast<std::size_t>(period));

  std::ofstream out(out_file);
  if (!out) throw FormatError("cannot write: " + out_file);
  out << "timestamp,value,trend,seasonal,residual,mask\n";
  for (std::size_t i = 0; i < series->size(); ++i) {
    out << cal::format_iso8601(series->timestamp_at(i)) << ',' << format_g9(series->values[i])
        << ',' << (dec.mask[i] ? format_g9(dec.trend[i]) : std::string()) << ','
        << format_g9(dec.seasonal[i]) << ','
        << (dec.mask[i] ? format_g9(dec.residual[i]) : std::string()) << ','
        << (dec.mask[i] ? 1 : 0) << '\n';
  }
  std::cout << "wrote decomposition of " << series_name << " to " << out_file << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& cli_model,
              const std::string& out_dir, bool grid) {
  KeyValueConfig cfg = resolve_config(common);
  const std::string kind = internal_kind(cli_model);
  const dataset::FeatureConfig fc = feature_config_from(cfg);
  const dataset::SplitSpec spec = split_spec_from(cfg);
  const training::TrainConfig base_tc = train_config_from(cfg);

  const CleanData data = load_clean(data_dir);
  fs::create_directories(out_dir);

  std::size_t dma_index = 0;
  for (const auto& [dma, demand] : data.demand) {
    const dataset::FeatureSet features = dataset::build_features(demand, data.weather, fc, dma);
    const dataset::Splits splits = dataset::make_splits(features.windows, spec);
    const dataset::ChannelScalers scalers = dataset::fit_scalers(splits.train);

    training::TrainConfig tc = base_tc;
    tc.seed = splitmix64(base_tc.seed + 7919 * dma_index);

    if (grid) {
      std::vector<training::GridAxis> space;
      for (const auto& [key, value] : cfg.entries()) {
        if (key.rfind("grid.", 0) != 0) continue;
        training::GridAxis axis;
        axis.name = key.substr(5);
        std::istringstream is(value);
        std::string field;
        while (std::getline(is, field, ',')) axis.values.push_back(std::stod(field));
        space.push_back(std::move(axis));
      }
      if (space.empty()) {
        space.push_back({"learning_rate", {0.01, 0.005}});
      }
      auto train_fn = [&](const training::GridPoint& point, std::uint64_t seed) {
        training::TrainConfig cell_tc = tc;
        cell_tc.seed = seed;
        auto it = point.find("learning_rate");
        if (it != point.end()) cell_tc.learning_rate = it->second;
        it = point.find("batch_size");
        if (it != point.end()) cell_tc.batch_size = static_cast<std::size_t>(it->second);
        Rng cell_rng(seed);
        auto cell_model = build_model(kind, features, cfg, cell_rng);
        const auto hist = training::train(*cell_model, scalers, splits.train, splits.val, cell_tc);
        return hist.val_loss[hist.best_epoch];
      };
      const auto [best, results] = training::grid_search(space, train_fn, tc.seed);
      std::cout << dma << ": grid search over " << results.size()
                << " cells, best val loss " << format_g9(best.val_loss) << "\n";
      auto it = best.point.find("learning_rate");
      if (it != best.point.end()) tc.learning_rate = it->second;
      it = best.point.find("batch_size");
      if (it != best.point.end()) tc.batch_size = static_cast<std::size_t>(it->second);
    }

    Rng model_rng(splitmix64(tc.seed ^ 0xabcdef12345ULL));
    auto model = build_model(kind, features, cfg, model_rng);

    std::cout << dma << ": training " << kind << " on " << splits.train.size() << "/"
              << splits.val.size() << "/" << splits.test.size() << " train/val/test windows\n";
    const fs::path history_path = fs::path(out_dir) / ("history_" + kind + "_" + dma + ".csv");
    std::ofstream history_file(history_path);
    history_file << "epoch,train_loss,val_loss\n";

    std::ostringstream epochs_log;
    const training::TrainHistory history =
        training::train(*model, scalers, splits.train, splits.val, tc, &epochs_log);
    std::cout << epochs_log.str();
    history_file << epochs_log.str();

    models::TrainedModel trained;
    trained.model = std::move(model);
    trained.scalers = scalers;
    trained.endo_names = features.endo_names;
    trained.exo_names = features.exo_names;
    trained.dma_id = dma;

    models::ModelCheckpoint cp = models::to_checkpoint(trained);
    cp.config_text += fc.to_text();
    cp.config_text += "test_year = " + std::to_string(spec.test_year) + "\n";
    cp.config_text += "train_fraction = " + format_g17(spec.train_fraction) + "\n";
    const fs::path ckpt_path = fs::path(out_dir) / (kind + "_" + dma + ".ckpt");
    models::save_checkpoint(cp, ckpt_path);

    std::cout << dma << ": best epoch " << history.best_epoch << ", val loss "
              << format_g9(history.val_loss.empty() ? 0.0 : history.val_loss[history.best_epoch])
              << ", checkpoint " << ckpt_path.string() << "\n";
    ++dma_index;
  }
  return 0;
}

// ---- evaluate / forecast / plot-data ----------------------------------------

struct LoadedRun {
  models::ModelCheckpoint checkpoint;
  models::TrainedModel trained;
};

std::vector<fs::path> checkpoint_files(const std::string& runs_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ckpt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ContractError("no .ckpt files in " + runs_dir);
  return files;
}

// Features must be rebuilt exactly as at training time; the checkpoint's
// config echo carries the feature and split settings.
class FeatureCache {
 public:
  explicit FeatureCache(const CleanData& data) : data_(data) {}

  const dataset::FeatureSet& features(const std::string& dma, const dataset::FeatureConfig& fc) {
    const std::string key = dma + "\n" + fc.to_text();
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto dit = data_.demand.find(dma);
    if (dit == data_.demand.end()) throw ContractError("checkpoint DMA not in data: " + dma);
    auto [ins, ok] =
        cache_.emplace(key, dataset::build_features(dit->second, data_.weather, fc, dma));
    return ins->second;
  }

 private:
  const CleanData& data_;
  std::map<std::string, dataset::FeatureSet> cache_;
};

int cmd_evaluate(const CommonOpts& common, const std::string& data_dir,
                 const std::string& runs_dir, const std::string& out_dir) {
  const KeyValueConfig cli_cfg = resolve_config(common);
  const CleanData data = load_clean(data_dir);
  FeatureCache cache(data);

  // kind -> dma -> trained model, plus that kind's test windows.
  std::map<std::string, std::map<std::string, models::TrainedModel>> by_kind;
  std::map<std::string, std::vector<dataset::SampleWindow>> test_by_kind;
  std::set<std::string> seen_dmas;
  std::vector<dataset::SampleWindow> persistence_windows;

  for (const fs::path& path : checkpoint_files(runs_dir)) {
    models::ModelCheckpoint cp = models::read_checkpoint(path);
    KeyValueConfig stored = KeyValueConfig::parse(cp.config_text);
    for (const auto& [k, v] : cli_cfg.entries()) stored.set(k, v);
    const dataset::FeatureConfig fc = feature_config_from(stored);
    const dataset::SplitSpec spec = split_spec_from(stored);

    const dataset::FeatureSet& features = cache.features(cp.dma_id, fc);
    if (features.endo_names != cp.endo_names || features.exo_names != cp.exo_names) {
      throw ContractError("channel metadata mismatch for checkpoint " + path.string());
    }
    const dataset::Splits splits = dataset::make_splits(features.windows, spec);

    models::TrainedModel trained = models::from_checkpoint(cp);
    auto& tests = test_by_kind[cp.kind];
    tests.insert(tests.end(), splits.test.begin(), splits.test.end());
    if (seen_dmas.insert(cp.dma_id).second) {
      persistence_windows.insert(persistence_windows.end(), splits.test.begin(),
                                 splits.test.end());
    }
    by_kind[cp.kind].emplace(cp.dma_id, std::move(trained));
  }

  std::vector<eval::MetricsReport> reports;
  std::vector<eval::ForecastRecord> records;
  for (const auto& [kind, models_by_dma] : by_kind) {
    const auto& windows = test_by_kind.at(kind);
    reports.push_back(eval::evaluate_forecasts(
        kind, windows,
        [&](const dataset::SampleWindow& w) {
          auto it = models_by_dma.find(w.dma_id);
          if (it == models_by_dma.end()) {
            throw ContractError("no " + kind + " checkpoint for DMA " + w.dma_id);
          }
          return models::predict_kwh(it->second, w);
        },
        &records));
  }
  reports.push_back(
      eval::evaluate_forecasts("persistence", persistence_windows,
                               [](const dataset::SampleWindow& w) { return w.persistence; },
                               &records));

  fs::create_directories(out_dir);
  eval::write_metrics_csv(reports, fs::path(out_dir) / "metrics.csv");
  eval::export_forecast(records, fs::path(out_dir) / "forecasts.csv");

  for (const auto& r : reports) {
    std::cout << r.model << ": MAE " << format_g9(r.aggregate.mae_mean) << " +- "
              << format_g9(r.aggregate.mae_std) << " kWh, MAPE "
              << format_g9(r.aggregate.mape_mean) << "% +- " << format_g9(r.aggregate.mape_std)
              << "% over " << r.aggregate.windows << " windows\n";
  }
  std::cout << "wrote " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_forecast(const CommonOpts& common, const std::string& data_dir,
                 const std::string& checkpoint_path, const std::string& out_file) {
  const KeyValueConfig cli_cfg = resolve_config(common);
  const CleanData data = load_clean(data_dir);
  FeatureCache cache(data);

  models::ModelCheckpoint cp = models::read_checkpoint(checkpoint_path);
  KeyValueConfig stored = KeyValueConfig::parse(cp.config_text);
  for (const auto& [k, v] : cli_cfg.entries()) stored.set(k, v);
  const dataset::FeatureSet& features = cache.features(cp.dma_id, feature_config_from(stored));
  const dataset::Splits splits = dataset::make_splits(features.windows, split_spec_from(stored));

  const models::TrainedModel trained = models::from_checkpoint(cp);
  std::vector<eval::ForecastRecord> records;
  for (const dataset::SampleWindow& w : splits.test) {
    records.push_back(
        {w.origin, w.dma_id, cp.kind, models::predict_kwh(trained, w), w.target});
  }
  eval::export_forecast(records, out_file);
  std::cout << "wrote " << records.size() << " forecast windows to " << out_file << "\n";
  return 0;
}

int cmd_plot_data(const CommonOpts& common, const std::string& data_dir,
                  const std::string& runs_dir, const std::string& out_dir) {
  const KeyValueConfig cli_cfg = resolve_config(common);
  const CleanData data = load_clean(data_dir);
  FeatureCache cache(data);
  fs::create_directories(out_dir);

  std::vector<eval::ForecastRecord> records;
  std::map<std::string, dataset::Splits> splits_by_dma;

  for (const fs::path& path : checkpoint_files(runs_dir)) {
    models::ModelCheckpoint cp = models::read_checkpoint(path);
    KeyValueConfig stored = KeyValueConfig::parse(cp.config_text);
    for (const auto& [k, v] : cli_cfg.entries()) stored.set(k, v);
    const dataset::FeatureSet& features = cache.features(cp.dma_id, feature_config_from(stored));
    const dataset::Splits splits = dataset::make_splits(features.windows, split_spec_from(stored));
    const models::TrainedModel trained = models::from_checkpoint(cp);
    for (const dataset::SampleWindow& w : splits.test) {
      records.push_back({w.origin, w.dma_id, cp.kind, models::predict_kwh(trained, w), w.target});
    }
    splits_by_dma.emplace(cp.dma_id, splits);
  }
  for (const auto& [dma, splits] : splits_by_dma) {
    for (const dataset::SampleWindow& w : splits.test) {
      records.push_back({w.origin, w.dma_id, "persistence", w.persistence, w.target});
    }
  }

  // Per-window metric rows for distribution plots.
  {
    std::ofstream out(fs::path(out_dir) / "window_metrics.csv");
    if (!out) throw FormatError("cannot write window_metrics.csv");
    out << "dma_id,origin,model,mae,mape\n";
    std::vector<const eval::ForecastRecord*> order;
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      return std::tie(a->dma_id, a->origin, a->model) < std::tie(b->dma_id, b->origin, b->model);
    });
    for (const auto* r : order) {
      out << r->dma_id << ',' << cal::format_iso8601(r->origin) << ',' << r->model << ','
          << format_g9(eval::mae(r->forecast_kwh, r->actual_kwh)) << ','
          << format_g9(eval::mape(r->forecast_kwh, r->actual_kwh)) << '\n';
    }
  }

  // Hourly forecast-vs-actual for the last test week of each DMA.
  for (const auto& [dma, splits] : splits_by_dma) {
    const std::size_t n = splits.test.size();
    const std::size_t take = std::min<std::size_t>(7, n);
    const std::int64_t first_origin = splits.test[n - take].origin;
    std::vector<eval::ForecastRecord> week;
    for (const auto& r : records) {
      if (r.dma_id == dma && r.origin >= first_origin) week.push_back(r);
    }
    std::sort(week.begin(), week.end(), [](const auto& a, const auto& b) {
      return std::tie(a.origin, a.model) < std::tie(b.origin, b.model);
    });
    eval::export_forecast(week, fs::path(out_dir) / ("forecast_week_" + dma + ".csv"));
  }
  std::cout << "wrote plot data for " << splits_by_dma.size() << " DMA(s) to " << out_dir << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"wavelet-scalogram heat demand forecasting pipeline"};
  app.require_subcommand(1);

  CommonOpts common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value config file");
    sub->add_option("--seed", common.seed, "RNG seed override")->check(CLI::NonNegativeNumber);
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  long long days = 365, dmas = 3;
  double noise = 0.3;
  std::string start_date = "2018-07-01";
  std::string synth_out = "data";
  add_common(synth);
  auto* days_opt = synth->add_option("--days", days, "number of days");
  auto* dmas_opt = synth->add_option("--dmas", dmas, "number of DMAs");
  auto* noise_opt = synth->add_option("--noise", noise, "gaussian noise level");
  auto* start_opt = synth->add_option("--start", start_date, "start date YYYY-MM-DD");
  synth->add_option("--out", synth_out, "output directory");

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "clean, de-spike and impute raw CSVs");
  std::string pre_data = "data", pre_out = "clean";
  add_common(preprocess);
  preprocess->add_option("--data", pre_data, "directory with meters.csv and weather.csv");
  preprocess->add_option("--out", pre_out, "output directory");

  // decompose
  auto* decompose = app.add_subcommand("decompose", "write seasonal decomposition CSV");
  std::string dec_data = "clean", dec_dma, dec_series = "demand", dec_out = "decomposition.csv";
  long long dec_period = 24;
  add_common(decompose);
  decompose->add_option("--data", dec_data, "preprocessed data directory");
  decompose->add_option("--dma", dec_dma, "DMA id (for demand series)");
  decompose->add_option("--series", dec_series, "demand|temp_max|feels_like")
      ->check(CLI::IsMember({"demand", "temp_max", "feels_like"}));
  decompose->add_option("--period", dec_period, "seasonal period in hours");
  decompose->add_option("--out", dec_out, "output CSV path");

  // train
  auto* train = app.add_subcommand("train", "train a forecasting model per DMA");
  std::string train_data = "clean", train_model = "fprime", train_out = "runs";
  bool train_grid = false;
  add_common(train);
  train->add_option("--data", train_data, "preprocessed data directory");
  train->add_option("--model", train_model, "lstm|f|fprime")
      ->check(CLI::IsMember({"lstm", "f", "fprime"}));
  train->add_option("--out", train_out, "output directory for checkpoints");
  train->add_flag("--grid", train_grid, "grid-search hyperparameters first");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "evaluate checkpoints on the test year");
  std::string eval_data = "clean", eval_runs = "runs", eval_out = "report";
  add_common(evaluate);
  evaluate->add_option("--data", eval_data, "preprocessed data directory");
  evaluate->add_option("--runs", eval_runs, "directory with .ckpt files");
  evaluate->add_option("--out", eval_out, "output directory");

  // forecast
  auto* forecast = app.add_subcommand("forecast", "export forecasts for one checkpoint");
  std::string fc_data = "clean", fc_ckpt, fc_out = "forecast.csv";
  add_common(forecast);
  forecast->add_option("--data", fc_data, "preprocessed data directory");
  forecast->add_option("--checkpoint", fc_ckpt, "checkpoint file")->required();
  forecast->add_option("--out", fc_out, "output CSV path");

  // plot-data
  auto* plot = app.add_subcommand("plot-data", "emit CSVs for external plotting");
  std::string plot_data_dir = "clean", plot_runs = "runs", plot_out = "plots";
  add_common(plot);
  plot->add_option("--data", plot_data_dir, "preprocessed data directory");
  plot->add_option("--runs", plot_runs, "directory with .ckpt files");
  plot->add_option("--out", plot_out, "output directory");

  std::vector<const char*> argv;
  argv.push_back("heatcast");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto parsed_subs = app.get_subcommands();
  if (!parsed_subs.empty()) {
    common.seed_set = parsed_subs.front()->count("--seed") > 0;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(common, days, dmas, noise, start_date, days_opt->count() > 0,
                       dmas_opt->count() > 0, noise_opt->count() > 0, start_opt->count() > 0,
                       synth_out);
    }
    if (preprocess->parsed()) return cmd_preprocess(common, pre_data, pre_out);
    if (decompose->parsed()) {
      return cmd_decompose(common, dec_data, dec_dma, dec_series, dec_period, dec_out);
    }
    if (train->parsed()) return cmd_train(common, train_data, train_model, train_out, train_grid);
    if (evaluate->parsed()) return cmd_evaluate(common, eval_data, eval_runs, eval_out);
    if (forecast->parsed()) return cmd_forecast(common, fc_data, fc_ckpt, fc_out);
    if (plot->parsed()) return cmd_plot_data(common, plot_data_dir, plot_runs, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}

}  // namespace heatcast::cli
