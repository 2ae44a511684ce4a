#include "heatcast/signal.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace heatcast::signal {

std::vector<double> default_scales(std::size_t s, std::size_t window_hours) {
  if (s < 1) throw ContractError("default_scales: scale count must be >= 1");
  const double a_min = scale_for_pseudo_period(2.0);
  const double a_max = scale_for_pseudo_period(2.0 * static_cast<double>(window_hours));
  std::vector<double> scales(s);
  if (s == 1) {
    scales[0] = a_min;
    return scales;
  }
  const double ratio = std::pow(a_max / a_min, 1.0 / static_cast<double>(s - 1));
  for (std::size_t j = 0; j < s; ++j) {
    scales[j] = a_min * std::pow(ratio, static_cast<double>(j));
  }
  return scales;
}

Scalogram cwt_scalogram(std::span<const double> window, std::span<const double> scales,
                        std::string_view wavelet) {
  if (wavelet != "morlet") {
    throw DomainError("cwt_scalogram: unsupported wavelet '" + std::string(wavelet) + "'");
  }
  if (window.empty()) throw ContractError("cwt_scalogram: empty window");
  if (scales.empty()) throw ContractError("cwt_scalogram: empty scale list");
  for (double v : window) {
    if (std::isnan(v)) throw ContractError("cwt_scalogram: NaN in window");
  }
  double prev = 0.0;
  for (double a : scales) {
    if (!(a > 0.0)) throw DomainError("cwt_scalogram: scales must be positive");
    if (a <= prev) throw DomainError("cwt_scalogram: scales must be strictly increasing");
    prev = a;
  }

  const std::size_t h = window.size();
  const std::size_t s = scales.size();
  Scalogram out;
  out.time_bins = h;
  out.scale_bins = s;
  out.scales.assign(scales.begin(), scales.end());
  out.wavelet = "morlet";
  out.grid.assign(h * s, 0.0);

  // psi((t-b)/a) depends only on (t-b); one kernel row per scale.
  std::vector<double> kernel(2 * h - 1);
  for (std::size_t j = 0; j < s; ++j) {
    const double a = scales[j];
    const double norm = 1.0 / std::sqrt(a);
    for (std::size_t i = 0; i < kernel.size(); ++i) {
      const double u = (static_cast<double>(i) - static_cast<double>(h - 1)) / a;
      kernel[i] = morlet(u);
    }
    for (std::size_t b = 0; b < h; ++b) {
      double acc = 0.0;
      for (std::size_t t = 0; t < h; ++t) {
        acc += window[t] * kernel[t + (h - 1) - b];
      }
      out.grid[b * s + j] = std::abs(acc) * norm;
    }
  }
  return out;
}

namespace {

// Centered moving average of width `period`; for even periods the two
// straddling windows are averaged (half weight at both ends).
std::vector<double> centered_moving_average(std::span<const double> x, std::size_t period,
                                            std::vector<unsigned char>& mask) {
  const std::size_t n = x.size();
  std::vector<double> trend(n, missing());
  mask.assign(n, 0);
  if (period == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      trend[i] = x[i];
      mask[i] = 1;
    }
    return trend;
  }
  const bool even = period % 2 == 0;
  const std::size_t half = period / 2;
  if (n < period + (even ? 1 : 0)) return trend;
  for (std::size_t i = half; i + half < n; ++i) {
    double acc = 0.0;
    if (even) {
      acc += 0.5 * x[i - half] + 0.5 * x[i + half];
      for (std::size_t k = i - half + 1; k < i + half; ++k) acc += x[k];
    } else {
      for (std::size_t k = i - half; k <= i + half; ++k) acc += x[k];
    }
    trend[i] = acc / static_cast<double>(period);
    mask[i] = 1;
  }
  return trend;
}

}  // namespace

DecompositionResult seasonal_decompose(std::span<const double> values, std::size_t period) {
  if (period < 1) throw ContractError("seasonal_decompose: period must be positive");
  const std::size_t n = values.size();
  if (n < 2 * period) {
    throw ContractError("seasonal_decompose: series length " + std::to_string(n) +
                        " is shorter than 2*period = " + std::to_string(2 * period));
  }
  DecompositionResult out;
  out.period = period;
  out.trend = centered_moving_average(values, period, out.mask);

  // Period-position means of the detrended series, recentered to zero mean.
  std::vector<double> pos_sum(period, 0.0);
  std::vector<std::size_t> pos_count(period, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.mask[i]) continue;
    pos_sum[i % period] += values[i] - out.trend[i];
    ++pos_count[i % period];
  }
  std::vector<double> seasonal_index(period, 0.0);
  for (std::size_t p = 0; p < period; ++p) {
    seasonal_index[p] = pos_count[p] > 0 ? pos_sum[p] / static_cast<double>(pos_count[p]) : 0.0;
  }
  const double mean_index =
      std::accumulate(seasonal_index.begin(), seasonal_index.end(), 0.0) /
      static_cast<double>(period);
  for (double& v : seasonal_index) v -= mean_index;

  out.seasonal.resize(n);
  out.residual.assign(n, missing());
  for (std::size_t i = 0; i < n; ++i) {
    out.seasonal[i] = seasonal_index[i % period];
    if (out.mask[i]) out.residual[i] = values[i] - out.trend[i] - out.seasonal[i];
  }
  return out;
}

DecompositionResult seasonal_decompose(const TimeSeries& series, std::size_t period) {
  return seasonal_decompose(std::span<const double>(series.values), period);
}

std::vector<double> difference(std::span<const double> series, std::size_t lag) {
  if (lag < 1) throw ContractError("difference: lag must be positive");
  if (series.size() <= lag) {
    throw ContractError("difference: series length " + std::to_string(series.size()) +
                        " must exceed lag " + std::to_string(lag));
  }
  std::vector<double> out(series.size() - lag);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = series[i + lag] - series[i];
  return out;
}

std::vector<double> invert_difference(std::span<const double> diffs,
                                      std::span<const double> seed, std::size_t lag) {
  if (lag < 1) throw ContractError("invert_difference: lag must be positive");
  if (seed.size() != lag) {
    throw ContractError("invert_difference: seed length " + std::to_string(seed.size()) +
                        " must equal lag " + std::to_string(lag));
  }
  std::vector<double> out(diffs.size() + lag);
  std::copy(seed.begin(), seed.end(), out.begin());
  for (std::size_t i = 0; i < diffs.size(); ++i) out[i + lag] = out[i] + diffs[i];
  return out;
}

std::pair<double, double> cyclical_encode(double value, double period) {
  if (!(period > 0.0)) throw ContractError("cyclical_encode: period must be positive");
  const double angle = 2.0 * kPi * value / period;
  return {std::sin(angle), std::cos(angle)};
}

namespace {

double median_of(std::vector<double>& scratch) {
  const std::size_t n = scratch.size();
  auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(scratch.begin(), mid, scratch.end());
  double m = *mid;
  if (n % 2 == 0) {
    auto lo = std::max_element(scratch.begin(), mid);
    m = 0.5 * (m + *lo);
  }
  return m;
}

}  // namespace

OutlierResult remove_outliers(const TimeSeries& series, double z_threshold) {
  if (!(z_threshold > 0.0)) throw ContractError("remove_outliers: z_threshold must be positive");
  const std::size_t n = series.size();
  std::size_t observed = 0;
  for (double v : series.values) {
    if (!is_missing(v)) ++observed;
  }
  if (observed == 0) throw ContractError("remove_outliers: series has no observed values");

  constexpr std::size_t kWindow = 169;  // one week plus the center hour
  constexpr std::size_t kHalf = kWindow / 2;
  constexpr double kMadToSigma = 1.4826;

  OutlierResult out;
  out.series = series;
  out.mask.assign(n, 0);

  std::vector<double> scratch;
  scratch.reserve(kWindow);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = series.values[i];
    if (is_missing(v)) continue;
    const std::size_t lo = i >= kHalf ? i - kHalf : 0;
    const std::size_t hi = std::min(n - 1, i + kHalf);
    scratch.clear();
    for (std::size_t k = lo; k <= hi; ++k) {
      if (!is_missing(series.values[k])) scratch.push_back(series.values[k]);
    }
    if (scratch.size() < 2) continue;
    const double med = median_of(scratch);
    for (double& x : scratch) x = std::abs(x - med);
    const double mad = median_of(scratch);
    const double sigma = kMadToSigma * mad;
    if (std::abs(v - med) > z_threshold * sigma) {
      out.series.values[i] = missing();
      out.mask[i] = 1;
      ++out.removed;
    }
  }
  return out;
}

TimeSeries impute_missing(const TimeSeries& series) {
  return impute_missing(series, series.unit == "kWh");
}

TimeSeries impute_missing(const TimeSeries& series, bool negative_is_missing) {
  if (series.size() == 0) throw ContractError("impute_missing: empty series");
  TimeSeries out = series;
  if (negative_is_missing) {
    for (double& v : out.values) {
      if (!is_missing(v) && v < 0.0) v = missing();
    }
  }
  const std::size_t n = out.size();

  double mean = 0.0;
  std::size_t observed = 0;
  for (double v : out.values) {
    if (!is_missing(v)) {
      mean += v;
      ++observed;
    }
  }
  if (observed == 0) throw ContractError("impute_missing: series has no observed values");
  mean /= static_cast<double>(observed);

  constexpr std::size_t kMaxInterpGap = 6;
  constexpr std::size_t kWeek = 168;
  constexpr std::size_t kDay = 24;

  std::size_t i = 0;
  while (i < n) {
    if (!is_missing(out.values[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && is_missing(out.values[j + 1])) ++j;
    const std::size_t run = j - i + 1;
    const bool has_left = i > 0 && !is_missing(out.values[i - 1]);
    const bool has_right = j + 1 < n && !is_missing(out.values[j + 1]);
    if (run <= kMaxInterpGap && has_left && has_right) {
      const double left = out.values[i - 1];
      const double right = out.values[j + 1];
      for (std::size_t k = 0; k < run; ++k) {
        out.values[i + k] =
            left + (right - left) * static_cast<double>(k + 1) / static_cast<double>(run + 1);
      }
    } else {
      // Earlier indices are already imputed, so lag lookups always resolve.
      for (std::size_t k = i; k <= j; ++k) {
        if (k >= kWeek && !is_missing(out.values[k - kWeek])) {
          out.values[k] = out.values[k - kWeek];
        } else if (k >= kDay && !is_missing(out.values[k - kDay])) {
          out.values[k] = out.values[k - kDay];
        } else {
          out.values[k] = mean;
        }
      }
    }
    i = j + 1;
  }
  return out;
}

}  // namespace heatcast::signal
