#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gapfill {

// Naive local time: seconds since 1970-01-01T00:00:00, no time zone.
using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerDay = 86400;
inline constexpr Timestamp kSecondsPerSlot = 1800;

struct CivilDate {
  int year;
  unsigned month;
  unsigned day;
};

std::int64_t days_from_civil(CivilDate date) noexcept;
CivilDate civil_from_days(std::int64_t days) noexcept;

// Floor division, correct for negative timestamps.
std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept;

// 0 = Monday ... 6 = Sunday.
unsigned weekday_from_days(std::int64_t days) noexcept;

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DDTHH:MM:SS" (a space
// may replace 'T'). Returns false on malformed text.
bool parse_timestamp(std::string_view text, Timestamp& out);
bool parse_date(std::string_view text, std::int64_t& days_out);

std::string format_timestamp(Timestamp t);  // YYYY-MM-DDTHH:MM:SS
std::string format_date(std::int64_t days);  // YYYY-MM-DD

}  // namespace gapfill
