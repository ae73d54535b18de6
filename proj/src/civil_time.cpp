#include "gapfill/civil_time.hpp"

#include <charconv>
#include <cstdio>

namespace gapfill {

// Civil calendar conversions after H. Hinnant's chrono-compatible algorithms.
std::int64_t days_from_civil(CivilDate date) noexcept {
  const std::int64_t y = static_cast<std::int64_t>(date.year) - (date.month <= 2 ? 1 : 0);
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned mp = date.month > 2 ? date.month - 3 : date.month + 9;
  const unsigned doy = (153 * mp + 2) / 5 + date.day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2 ? 1 : 0)), m, d};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

unsigned weekday_from_days(std::int64_t days) noexcept {
  // 1970-01-01 was a Thursday (index 3).
  return static_cast<unsigned>((days % 7 + 7 + 3) % 7);
}

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  const char* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc() && ptr == first + len;
}

}  // namespace

bool parse_date(std::string_view text, std::int64_t& days_out) {
  int y = 0, m = 0, d = 0;
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return false;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, m) || !read_int(text, 8, 2, d)) return false;
  if (m < 1 || m > 12 || d < 1 || d > 31) return false;
  const CivilDate date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
  days_out = days_from_civil(date);
  const CivilDate back = civil_from_days(days_out);
  return back.month == date.month && back.day == date.day;
}

bool parse_timestamp(std::string_view text, Timestamp& out) {
  std::int64_t days = 0;
  if (!parse_date(text, days)) return false;
  int hh = 0, mm = 0, ss = 0;
  if (text.size() > 10) {
    if (text[10] != 'T' && text[10] != ' ') return false;
    if (!read_int(text, 11, 2, hh) || text.size() < 16 || text[13] != ':' ||
        !read_int(text, 14, 2, mm)) {
      return false;
    }
    std::size_t pos = 16;
    if (text.size() > pos && text[pos] == ':') {
      if (!read_int(text, pos + 1, 2, ss)) return false;
      pos += 3;
      // Fractional seconds are truncated.
      if (text.size() > pos && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      }
    }
    if (pos != text.size()) return false;
    if (hh > 23 || mm > 59 || ss > 60) return false;
  }
  out = days * kSecondsPerDay + hh * 3600 + mm * 60 + ss;
  return true;
}

std::string format_timestamp(Timestamp t) {
  const std::int64_t days = floor_div(t, kSecondsPerDay);
  const std::int64_t secs = t - days * kSecondsPerDay;
  const CivilDate d = civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", d.year, d.month, d.day,
                static_cast<int>(secs / 3600), static_cast<int>(secs / 60 % 60),
                static_cast<int>(secs % 60));
  return buf;
}

std::string format_date(std::int64_t days) {
  const CivilDate d = civil_from_days(days);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", d.year, d.month, d.day);
  return buf;
}

}  // namespace gapfill
