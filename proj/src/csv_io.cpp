#include "gapfill/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gapfill/errors.hpp"

namespace gapfill {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool is_missing_token(std::string_view s) {
  return s.empty() || s == "nan" || s == "NaN" || s == "NA";
}

}  // namespace

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

std::vector<TimeSeries> read_series_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input, expected a header", 1);
  ++line_no;
  if (trim(line) != kSeriesHeader) {
    throw ParseError("expected header '" + std::string(kSeriesHeader) + "'", line_no);
  }
  std::map<std::pair<std::string, Variable>, std::vector<Sample>> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw ParseError("expected 4 fields, got " + std::to_string(f.size()), line_no);
    Sample s;
    if (!parse_timestamp(f[0], s.time)) {
      throw ParseError("bad timestamp '" + std::string(f[0]) + "'", line_no);
    }
    if (f[1].empty()) throw ParseError("empty room_id", line_no);
    Variable var;
    try {
      var = parse_variable(f[2]);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!is_missing_token(f[3])) {
      double v = 0.0;
      if (!parse_double(f[3], v) || !std::isfinite(v)) {
        throw ParseError("bad value '" + std::string(f[3]) + "'", line_no);
      }
      s.value = v;
    }
    groups[{std::string(f[1]), var}].push_back(s);
  }

  std::vector<TimeSeries> out;
  for (auto& [key, samples] : groups) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.time < b.time; });
    TimeSeries ts{key.second, key.first, {}};
    for (std::size_t i = 0; i < samples.size();) {
      std::size_t j = i;
      double total = 0.0;
      std::size_t count = 0;
      while (j < samples.size() && samples[j].time == samples[i].time) {
        if (samples[j].value) {
          total += *samples[j].value;
          ++count;
        }
        ++j;
      }
      Sample merged{samples[i].time, {}};
      if (count) merged.value = total / static_cast<double>(count);
      ts.samples.push_back(merged);
      i = j;
    }
    out.push_back(std::move(ts));
  }
  return out;
}

std::vector<TimeSeries> read_series_csv_file(const std::string& path) {
  auto in = open_input(path);
  return read_series_csv(in);
}

void write_series_csv(std::ostream& out, const std::vector<TimeSeries>& series) {
  out << kSeriesHeader << '\n';
  std::string buf;
  for (const auto& ts : series) {
    const std::string var = to_string(ts.variable);
    for (const auto& s : ts.samples) {
      buf.clear();
      buf += format_timestamp(s.time);
      buf += ',';
      buf += ts.room_id;
      buf += ',';
      buf += var;
      buf += ',';
      if (s.value) buf += format_double(*s.value);
      buf += '\n';
      out << buf;
    }
  }
}

void write_series_csv_file(const std::string& path, const std::vector<TimeSeries>& series) {
  auto out = open_output(path);
  write_series_csv(out, series);
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string day_matrix_header() {
  std::string h = "room_id,date";
  char buf[8];
  for (std::size_t i = 0; i < kBinsPerDay; ++i) {
    std::snprintf(buf, sizeof buf, ",b%02zu", i);
    h += buf;
  }
  return h;
}

bool is_day_matrix_header(std::string_view line) { return trim(line) == day_matrix_header(); }

DayMatrix read_day_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input, expected a header", 1);
  ++line_no;
  if (!is_day_matrix_header(line)) throw ParseError("expected day matrix header", line_no);
  std::vector<DayKey> keys;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2 + kBinsPerDay) {
      throw ParseError("expected 50 fields, got " + std::to_string(f.size()), line_no);
    }
    DayKey key{std::string(f[0]), 0};
    if (key.room_id.empty()) throw ParseError("empty room_id", line_no);
    if (!parse_date(f[1], key.day)) throw ParseError("bad date '" + std::string(f[1]) + "'", line_no);
    for (std::size_t i = 0; i < kBinsPerDay; ++i) {
      double v = 0.0;
      if (!parse_double(f[2 + i], v) || !std::isfinite(v)) {
        throw ParseError("bad value '" + std::string(f[2 + i]) + "'", line_no);
      }
      data.push_back(v);
    }
    keys.push_back(std::move(key));
  }
  const std::size_t n = keys.size();
  return DayMatrix::from_values(std::move(keys), Tensor({n, kBinsPerDay}, std::move(data)));
}

DayMatrix read_day_matrix_csv_file(const std::string& path) {
  auto in = open_input(path);
  return read_day_matrix_csv(in);
}

void write_day_matrix_csv(std::ostream& out, const DayMatrix& dm) {
  out << day_matrix_header() << '\n';
  for (std::size_t r = 0; r < dm.rows(); ++r) {
    out << dm.keys()[r].room_id << ',' << format_date(dm.keys()[r].day);
    for (double v : dm.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_day_matrix_csv_file(const std::string& path, const DayMatrix& dm) {
  auto out = open_output(path);
  write_day_matrix_csv(out, dm);
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::vector<TimeSeries> day_matrix_to_series(const DayMatrix& dm, Variable variable) {
  std::map<std::string, TimeSeries> rooms;
  for (std::size_t r = 0; r < dm.rows(); ++r) {
    const auto& key = dm.keys()[r];
    auto& ts = rooms[key.room_id];
    ts.variable = variable;
    ts.room_id = key.room_id;
    const auto row = dm.row(r);
    for (std::size_t b = 0; b < kBinsPerDay; ++b) {
      ts.samples.push_back({key.day * kSecondsPerDay + static_cast<Timestamp>(b) * kSecondsPerSlot, row[b]});
    }
  }
  std::vector<TimeSeries> out;
  for (auto& [room, ts] : rooms) {
    std::stable_sort(ts.samples.begin(), ts.samples.end(),
                     [](const Sample& a, const Sample& b) { return a.time < b.time; });
    out.push_back(std::move(ts));
  }
  return out;
}

}  // namespace gapfill
