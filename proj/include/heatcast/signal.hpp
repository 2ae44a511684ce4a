#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "heatcast/calendar.hpp"
#include "heatcast/common.hpp"

namespace heatcast::signal {

inline constexpr double kMorletOmega0 = 6.0;

inline bool is_missing(double v) { return std::isnan(v); }
inline double missing() { return std::numeric_limits<double>::quiet_NaN(); }

// Hourly series anchored at `start` (epoch seconds, hour aligned).
// NaN marks a missing observation until impute_missing has run.
struct TimeSeries {
  std::int64_t start = 0;
  std::vector<double> values;
  std::string unit;

  std::size_t size() const { return values.size(); }
  std::int64_t timestamp_at(std::size_t i) const {
    return start + static_cast<std::int64_t>(i) * cal::kHourSeconds;
  }
};

// h x s grid of wavelet magnitudes; rows are time positions, columns scales.
struct Scalogram {
  std::size_t time_bins = 0;
  std::size_t scale_bins = 0;
  std::vector<double> grid;  // row-major [time][scale]
  std::vector<double> scales;
  std::string wavelet;

  double at(std::size_t b, std::size_t j) const { return grid[b * scale_bins + j]; }
};

// Additive classical decomposition. trend/residual are NaN where the
// centered moving average is undefined; `mask` is 1 elsewhere.
struct DecompositionResult {
  std::vector<double> trend;
  std::vector<double> seasonal;
  std::vector<double> residual;
  std::vector<unsigned char> mask;
  std::size_t period = 0;
};

// Real Morlet mother wavelet, omega0 = 6.
inline double morlet(double u) { return std::exp(-0.5 * u * u) * std::cos(kMorletOmega0 * u); }

// Pseudo-period (hours) of a Morlet scale: 2*pi*a / omega0.
inline double scale_pseudo_period(double scale) { return 2.0 * kPi * scale / kMorletOmega0; }
inline double scale_for_pseudo_period(double period) {
  return period * kMorletOmega0 / (2.0 * kPi);
}

// Geometric scale grid covering pseudo-periods from 2 hours to 2*h hours.
std::vector<double> default_scales(std::size_t s, std::size_t window_hours = 24);

// grid[b][j] = | sum_t window[t] * psi((t-b)/a_j) | / sqrt(a_j), summed over
// the window only (zero extension outside it).
Scalogram cwt_scalogram(std::span<const double> window, std::span<const double> scales,
                        std::string_view wavelet = "morlet");

DecompositionResult seasonal_decompose(std::span<const double> values, std::size_t period);
DecompositionResult seasonal_decompose(const TimeSeries& series, std::size_t period);

// out[i] = series[i+lag] - series[i].
std::vector<double> difference(std::span<const double> series, std::size_t lag);

// Exact inverse of difference given the first `lag` original values.
std::vector<double> invert_difference(std::span<const double> diffs,
                                      std::span<const double> seed, std::size_t lag);

// (sin, cos) of 2*pi*value/period.
std::pair<double, double> cyclical_encode(double value, double period);

struct OutlierResult {
  TimeSeries series;                 // outliers replaced by missing markers
  std::vector<unsigned char> mask;   // 1 where a point was marked as outlier
  std::size_t removed = 0;
};

// Flags points deviating from a rolling median (169h centered window) by
// more than z_threshold times the MAD-scaled sigma of that window.
OutlierResult remove_outliers(const TimeSeries& series, double z_threshold = 5.0);

// Fills gaps <= max_interp_gap hours by linear interpolation, longer gaps by
// the value one week earlier, then one day earlier, then the series mean.
// Negative values are treated as missing first when negative_is_missing.
TimeSeries impute_missing(const TimeSeries& series, bool negative_is_missing);
TimeSeries impute_missing(const TimeSeries& series);  // negative_is_missing = (unit == "kWh")

}  // namespace heatcast::signal
