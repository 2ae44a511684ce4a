#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "heatcast/common.hpp"

namespace heatcast::cal {

inline constexpr std::int64_t kHourSeconds = 3600;
inline constexpr std::int64_t kDaySeconds = 86400;
inline constexpr std::int64_t kWeekHours = 168;

struct Civil {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
};

// Proleptic Gregorian conversions (Hinnant's algorithms).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : static_cast<unsigned>(-9));
  return Civil{static_cast<int>(y + (m <= 2)), m, d};
}

constexpr std::int64_t make_epoch(int year, unsigned month, unsigned day,
                                  unsigned hour = 0, unsigned minute = 0,
                                  unsigned second = 0) {
  return days_from_civil(year, month, day) * kDaySeconds +
         static_cast<std::int64_t>(hour) * 3600 +
         static_cast<std::int64_t>(minute) * 60 + second;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t positive_mod(std::int64_t a, std::int64_t b) {
  std::int64_t r = a % b;
  return r < 0 ? r + b : r;
}

inline int year_of(std::int64_t epoch) {
  return civil_from_days(floor_div(epoch, kDaySeconds)).year;
}

inline int hour_of_day(std::int64_t epoch) {
  return static_cast<int>(positive_mod(epoch, kDaySeconds) / kHourSeconds);
}

// 0 = Monday .. 6 = Sunday.
inline int day_of_week(std::int64_t epoch) {
  return static_cast<int>(positive_mod(floor_div(epoch, kDaySeconds) + 3, 7));
}

inline bool is_midnight(std::int64_t epoch) {
  return positive_mod(epoch, kDaySeconds) == 0;
}

// Fraction of the current calendar year elapsed at `epoch`, in [0, 1).
inline double year_fraction(std::int64_t epoch) {
  const int y = year_of(epoch);
  const std::int64_t y0 = make_epoch(y, 1, 1);
  const std::int64_t y1 = make_epoch(y + 1, 1, 1);
  return static_cast<double>(epoch - y0) / static_cast<double>(y1 - y0);
}

namespace detail {
inline bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len,
                             unsigned& out) {
  if (pos + len > s.size()) return false;
  unsigned v = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  out = v;
  return true;
}
}  // namespace detail

// Strict "YYYY-MM-DD" parser.
inline bool parse_date(std::string_view s, std::int64_t& epoch_out) {
  unsigned y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  if (!detail::parse_fixed_uint(s, 0, 4, y) || !detail::parse_fixed_uint(s, 5, 2, m) ||
      !detail::parse_fixed_uint(s, 8, 2, d)) {
    return false;
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) return false;
  const std::int64_t days = days_from_civil(static_cast<int>(y), m, d);
  const Civil back = civil_from_days(days);
  if (back.year != static_cast<int>(y) || back.month != m || back.day != d) return false;
  epoch_out = days * kDaySeconds;
  return true;
}

// Strict "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z', UTC.
inline bool parse_iso8601(std::string_view s, std::int64_t& epoch_out) {
  if (s.size() == 20 && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() != 19 || s[10] != 'T' || s[13] != ':' || s[16] != ':') return false;
  std::int64_t date_epoch = 0;
  if (!parse_date(s.substr(0, 10), date_epoch)) return false;
  unsigned hh = 0, mm = 0, ss = 0;
  if (!detail::parse_fixed_uint(s, 11, 2, hh) || !detail::parse_fixed_uint(s, 14, 2, mm) ||
      !detail::parse_fixed_uint(s, 17, 2, ss)) {
    return false;
  }
  if (hh > 23 || mm > 59 || ss > 59) return false;
  epoch_out = date_epoch + hh * 3600 + mm * 60 + ss;
  return true;
}

inline std::string format_iso8601(std::int64_t epoch) {
  const Civil c = civil_from_days(floor_div(epoch, kDaySeconds));
  const std::int64_t rem = positive_mod(epoch, kDaySeconds);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", c.year, c.month,
                c.day, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  return buf;
}

inline std::string format_date(std::int64_t epoch) {
  const Civil c = civil_from_days(floor_div(epoch, kDaySeconds));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
  return buf;
}

}  // namespace heatcast::cal
