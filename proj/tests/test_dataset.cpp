#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "heatcast/dataset.hpp"

using namespace heatcast;
using namespace heatcast::dataset;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("heatcast_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

SampleWindow window_at(std::int64_t origin) {
  SampleWindow w;
  w.origin = origin;
  w.dma_id = "DMA_A";
  return w;
}

}  // namespace

TEST_CASE("ingest_meter_csv: header, empty file, one row, error report") {
  const fs::path dir = temp_dir("ingest");

  write_file(dir / "empty.csv", "timestamp,meter_id,dma_id,consumption_kwh\n");
  const auto empty = ingest_meter_csv(dir / "empty.csv");
  CHECK(empty.readings.empty());
  CHECK(empty.errors.empty());

  write_file(dir / "one.csv",
             "timestamp,meter_id,dma_id,consumption_kwh\n"
             "2019-01-01T05:00:00Z,m1,DMA_A,2.25\n");
  const auto one = ingest_meter_csv(dir / "one.csv");
  REQUIRE(one.readings.size() == 1);
  CHECK(one.readings[0].timestamp == cal::make_epoch(2019, 1, 1, 5));
  CHECK(one.readings[0].consumption_kwh == 2.25);
  CHECK(one.readings[0].dma_id == "DMA_A");

  write_file(dir / "bad.csv",
             "timestamp,meter_id,dma_id,consumption_kwh\n"
             "2019-01-01T05:00:00Z,m1,DMA_A,not_a_number\n"
             "2019-01-01T06:00:00Z,m1,DMA_A,1.5\n"
             "2019-01-01T06:30:00Z,m1,DMA_A,1.5\n");
  const auto bad = ingest_meter_csv(dir / "bad.csv");
  CHECK(bad.readings.size() == 1);
  REQUIRE(bad.errors.size() == 2);
  CHECK(bad.errors[0].row == 2);
  CHECK(bad.errors[1].row == 4);  // sub-hourly timestamp rejected

  write_file(dir / "noheader.csv", "time,meter,dma,kwh\n");
  CHECK_THROWS_AS(ingest_meter_csv(dir / "noheader.csv"), FormatError);
  CHECK_THROWS_AS(ingest_meter_csv(dir / "missing.csv"), FormatError);
}

TEST_CASE("aggregate_dma sums per hour and marks missing hours") {
  const std::int64_t h0 = cal::make_epoch(2019, 3, 1, 0);
  std::vector<MeterReading> readings = {
      {"m1", "DMA_A", h0, 1.0},
      {"m2", "DMA_A", h0, 2.0},
      {"m1", "DMA_A", h0 + 2 * cal::kHourSeconds, 4.0},
      {"mx", "DMA_B", h0, 7.0},
  };
  const auto agg = aggregate_dma(readings);
  REQUIRE(agg.count("DMA_A") == 1);
  REQUIRE(agg.count("DMA_B") == 1);
  const auto& a = agg.at("DMA_A");
  REQUIRE(a.size() == 3);
  CHECK(a.values[0] == 3.0);
  CHECK(signal::is_missing(a.values[1]));
  CHECK(a.values[2] == 4.0);
  CHECK(agg.at("DMA_B").values == std::vector<double>{7.0});

  CHECK_THROWS_AS(aggregate_dma(std::vector<MeterReading>{}), ContractError);
}

TEST_CASE("synth_generate: deterministic, noise-free matches the composition") {
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_days = 28;
  cfg.dma_count = 2;
  cfg.noise_level = 0.0;
  const auto a = synth_generate(cfg);
  REQUIRE(a.demand.size() == 2);
  const auto& dma_a = a.demand.at("DMA_A");
  for (std::size_t i = 0; i < dma_a.size(); ++i) {
    CHECK(dma_a.values[i] ==
          std::max(0.0, synth_demand_base(dma_a.timestamp_at(i), 0)));
  }
  const auto& dma_b = a.demand.at("DMA_B");
  for (std::size_t i = 0; i < dma_b.size(); ++i) {
    CHECK(dma_b.values[i] ==
          std::max(0.0, synth_demand_base(dma_b.timestamp_at(i), 1)));
  }
  for (const auto& r : a.weather) {
    CHECK(r.max_temp_c == synth_max_temp_base(r.timestamp));
    CHECK(r.feels_like_c == synth_feels_like_base(r.timestamp));
  }

  SynthConfig noisy = cfg;
  noisy.noise_level = 0.4;
  const auto n1 = synth_generate(noisy);
  const auto n2 = synth_generate(noisy);
  CHECK(n1.demand.at("DMA_A").values == n2.demand.at("DMA_A").values);
  CHECK(n1.demand.at("DMA_B").values == n2.demand.at("DMA_B").values);
  for (std::size_t i = 0; i < n1.weather.size(); ++i) {
    CHECK(n1.weather[i].max_temp_c == n2.weather[i].max_temp_c);
    CHECK(n1.weather[i].feels_like_c == n2.weather[i].feels_like_c);
  }

  CHECK_THROWS_AS(synth_generate(SynthConfig{7, 10, 1, 0.0}), ContractError);
}

TEST_CASE("synth demand and temperature are negatively correlated weekly") {
  SynthConfig cfg;
  cfg.seed = 42;
  cfg.n_days = 365;
  cfg.dma_count = 1;
  cfg.noise_level = 0.3;
  cfg.start_epoch = cal::make_epoch(2018, 7, 1);
  const auto data = synth_generate(cfg);
  const auto& demand = data.demand.at("DMA_A").values;

  std::vector<double> dw, tw;
  const std::size_t week = 168;
  for (std::size_t begin = 0; begin + week <= demand.size(); begin += week) {
    double ds = 0.0, tsum = 0.0;
    for (std::size_t i = begin; i < begin + week; ++i) {
      ds += demand[i];
      tsum += data.weather[i].max_temp_c;
    }
    dw.push_back(ds / week);
    tw.push_back(tsum / week);
  }
  const std::size_t n = dw.size();
  double md = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    md += dw[i];
    mt += tw[i];
  }
  md /= n;
  mt /= n;
  double cov = 0.0, vd = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (dw[i] - md) * (tw[i] - mt);
    vd += (dw[i] - md) * (dw[i] - md);
    vt += (tw[i] - mt) * (tw[i] - mt);
  }
  const double pearson = cov / std::sqrt(vd * vt);
  CHECK(pearson < -0.5);
}

TEST_CASE("build_features: channel counts, first origin, raw targets") {
  SynthConfig cfg;
  cfg.seed = 21;
  cfg.n_days = 21;  // three weeks
  cfg.dma_count = 1;
  cfg.noise_level = 0.1;
  cfg.start_epoch = cal::make_epoch(2018, 3, 1);
  const auto data = synth_generate(cfg);
  const auto weather = weather_to_series(data.weather);

  FeatureConfig fc;
  const auto features = build_features(data.demand.at("DMA_A"), weather, fc, "DMA_A");

  CHECK(features.endo_names.size() == 5);   // N_c
  CHECK(features.exo_names.size() == 8);    // N_w = 4 weather + N_t = 4 time
  CHECK(features.endo_names[0] == "demand_lag24");
  CHECK(features.exo_names[0] == "temp_max");

  REQUIRE(!features.windows.empty());
  // Earliest midnight with a full week of history: start + 168h.
  CHECK(features.windows.front().origin ==
        cfg.start_epoch + cal::kWeekHours * cal::kHourSeconds);

  const auto& demand = data.demand.at("DMA_A");
  for (const auto& w : features.windows) {
    REQUIRE(w.endogenous.size() == 5);
    REQUIRE(w.exogenous.size() == 8);
    for (const auto& sg : w.endogenous) {
      CHECK(sg.time_bins == 24);
      CHECK(sg.scale_bins == 24);
      for (double v : sg.grid) {
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
      }
    }
    REQUIRE(w.target.size() == 24);
    const std::size_t t =
        static_cast<std::size_t>((w.origin - demand.start) / cal::kHourSeconds);
    for (std::size_t k = 0; k < 24; ++k) {
      CHECK(w.target[k] == demand.values[t + k]);
      CHECK(w.persistence[k] == demand.values[t - 24 + k]);
    }
    // Forecast-day exogenous calendar channels.
    const auto& hour_sin = w.raw_channels[9];
    CHECK(hour_sin[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hour_sin[6] == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Feature assembly is deterministic.
  const auto again = build_features(data.demand.at("DMA_A"), weather, fc, "DMA_A");
  REQUIRE(again.windows.size() == features.windows.size());
  for (std::size_t i = 0; i < again.windows.size(); ++i) {
    CHECK(again.windows[i].origin == features.windows[i].origin);
    CHECK(again.windows[i].endogenous[0].grid == features.windows[i].endogenous[0].grid);
  }
}

TEST_CASE("build_features rejects misaligned series") {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.n_days = 21;
  cfg.dma_count = 1;
  const auto data = synth_generate(cfg);
  auto weather = weather_to_series(data.weather);
  weather.max_temp.start += cal::kHourSeconds;
  CHECK_THROWS_AS(build_features(data.demand.at("DMA_A"), weather, FeatureConfig{}, "DMA_A"),
                  ContractError);
}

TEST_CASE("make_splits: chronological 80:20 and partition") {
  std::vector<SampleWindow> windows;
  const std::int64_t base2018 = cal::make_epoch(2018, 1, 8);
  for (int i = 0; i < 100; ++i) {
    windows.push_back(window_at(base2018 + static_cast<std::int64_t>(i) * cal::kDaySeconds));
  }
  const std::int64_t base2019 = cal::make_epoch(2019, 2, 1);
  for (int i = 0; i < 30; ++i) {
    windows.push_back(window_at(base2019 + static_cast<std::int64_t>(i) * cal::kDaySeconds));
  }

  const Splits splits = make_splits(windows, SplitSpec{2019, 0.8});
  CHECK(splits.train.size() == 80);
  CHECK(splits.val.size() == 20);
  CHECK(splits.test.size() == 30);

  std::int64_t train_max = 0;
  for (const auto& w : splits.train) train_max = std::max(train_max, w.origin);
  for (const auto& w : splits.val) CHECK(w.origin > train_max);
  for (const auto& w : splits.test) CHECK(cal::year_of(w.origin) == 2019);

  std::set<std::int64_t> seen;
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    for (const auto& w : *part) {
      CHECK(seen.insert(w.origin).second);
    }
  }
  CHECK(seen.size() == windows.size());
}

TEST_CASE("make_splits contract errors") {
  std::vector<SampleWindow> only2019;
  const std::int64_t base = cal::make_epoch(2019, 1, 8);
  for (int i = 0; i < 50; ++i) {
    only2019.push_back(window_at(base + static_cast<std::int64_t>(i) * cal::kDaySeconds));
  }
  // All origins in the test year: train and validation would be empty.
  CHECK_THROWS_AS(make_splits(only2019, SplitSpec{2019, 0.8}), ContractError);
  // No window in the test year at all.
  CHECK_THROWS_AS(make_splits(only2019, SplitSpec{2023, 0.8}), ContractError);

  std::vector<SampleWindow> unsorted = {window_at(base + cal::kDaySeconds), window_at(base)};
  CHECK_THROWS_AS(make_splits(unsorted, SplitSpec{2019, 0.8}), ContractError);
}

TEST_CASE("fit_scalers uses only the training split") {
  SampleWindow w1 = window_at(0);
  w1.target = {1.0, 5.0};
  w1.raw_channels = {{0.0, 2.0}};
  signal::Scalogram sg;
  sg.time_bins = 1;
  sg.scale_bins = 2;
  sg.grid = {0.5, 1.5};
  w1.endogenous.push_back(sg);

  const auto scalers = fit_scalers(std::vector<SampleWindow>{w1});
  CHECK(scalers.target.lo == 1.0);
  CHECK(scalers.target.hi == 5.0);
  CHECK(scalers.target.scale(5.0) == doctest::Approx(1.0));
  CHECK(scalers.target.descale(scalers.target.scale(3.3)) == doctest::Approx(3.3));
  CHECK(scalers.raw[0].scale(2.0) == doctest::Approx(1.0));
  CHECK(scalers.scalogram[0].scale(0.5) == doctest::Approx(0.0));

  // Degenerate constant channel maps to zero instead of dividing by zero.
  SampleWindow flat = w1;
  flat.target = {2.0, 2.0};
  const auto flat_scalers = fit_scalers(std::vector<SampleWindow>{flat});
  CHECK(flat_scalers.target.scale(2.0) == 0.0);
}

TEST_CASE("meter round trip preserves the aggregate demand") {
  SynthConfig cfg;
  cfg.seed = 13;
  cfg.n_days = 21;
  cfg.dma_count = 2;
  const auto data = synth_generate(cfg);
  const auto readings = demand_to_meter_readings(data.demand);
  const auto agg = aggregate_dma(readings);
  for (const auto& [dma, ts] : data.demand) {
    const auto& got = agg.at(dma);
    REQUIRE(got.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      CHECK(got.values[i] == doctest::Approx(ts.values[i]).epsilon(1e-12));
    }
  }
}
