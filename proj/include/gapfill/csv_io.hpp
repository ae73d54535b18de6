#pragma once

#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/preprocess.hpp"

namespace gapfill {

inline constexpr std::string_view kSeriesHeader = "timestamp,room_id,variable,value";

// Time-series CSV: header `timestamp,room_id,variable,value`, ISO-8601
// timestamps, empty value = missing. Rows are grouped per (room, variable)
// and ordered by time; duplicate timestamps are averaged.
std::vector<TimeSeries> read_series_csv(std::istream& in);
std::vector<TimeSeries> read_series_csv_file(const std::string& path);

void write_series_csv(std::ostream& out, const std::vector<TimeSeries>& series);
void write_series_csv_file(const std::string& path, const std::vector<TimeSeries>& series);

// Day-matrix CSV: header `room_id,date,b00..b47`.
std::string day_matrix_header();
bool is_day_matrix_header(std::string_view line);
DayMatrix read_day_matrix_csv(std::istream& in);
DayMatrix read_day_matrix_csv_file(const std::string& path);
void write_day_matrix_csv(std::ostream& out, const DayMatrix& dm);
void write_day_matrix_csv_file(const std::string& path, const DayMatrix& dm);

// Unrolls day-matrix rows back into half-hourly series, one per room.
std::vector<TimeSeries> day_matrix_to_series(const DayMatrix& dm, Variable variable);

// Shortest round-trip decimal form.
std::string format_double(double v);

// Throw ConfigError when the file cannot be opened.
std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

std::vector<std::string_view> split_csv_line(std::string_view line);
std::string_view trim(std::string_view s);

}  // namespace gapfill
