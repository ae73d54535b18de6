#include "gapfill/synth.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>

#include "gapfill/civil_time.hpp"
#include "gapfill/csv_io.hpp"
#include "gapfill/errors.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

SynthConfig SynthConfig::defaults(Variable v) {
  SynthConfig c;
  c.variable = v;
  switch (v) {
    case Variable::temperature:
      break;
    case Variable::relative_humidity:
      c.base = 39.0;
      c.diurnal_amplitude = 3.0;
      c.diurnal_peak_hour = 5.0;
      c.occupancy_amplitude = 2.5;
      c.peak_sigma = 0.3;
      c.noise_std = 0.8;
      c.level_std = 3.0;
      c.level_ar = 0.85;
      c.room_spread = 4.0;
      break;
    case Variable::co2:
      c.base = 420.0;
      c.diurnal_amplitude = 0.0;
      c.occupancy_amplitude = 320.0;
      c.occupancy_start_hour = 7.5;
      c.occupancy_end_hour = 17.5;
      c.weekend_factor = 0.05;
      c.peak_sigma = 0.6;
      c.noise_std = 15.0;
      c.level_std = 15.0;
      c.level_ar = 0.5;
      c.room_spread = 40.0;
      break;
  }
  return c;
}

void SynthConfig::validate() const {
  const auto bad = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (days < 1) bad("days must be at least 1");
  if (rooms < 1) bad("rooms must be at least 1");
  if (interval_s < 1 || kSecondsPerSlot % static_cast<Timestamp>(interval_s) != 0) {
    bad("interval_s must divide 1800");
  }
  std::int64_t d = 0;
  if (!parse_date(start_date, d)) bad("start_date must be YYYY-MM-DD");
  if (noise_std < 0 || level_std < 0 || peak_sigma < 0 || weekend_factor < 0) {
    bad("spreads and factors must be non-negative");
  }
  if (!(level_ar >= 0 && level_ar < 1)) bad("level_ar must lie in [0, 1)");
  if (!(occupancy_start_hour >= 0 && occupancy_start_hour < occupancy_end_hour && occupancy_end_hour <= 24)) {
    bad("occupancy window must satisfy 0 <= start < end <= 24");
  }
  if (!(outlier_rate >= 0 && outlier_rate <= 1)) bad("outlier_rate must lie in [0, 1]");
  if (!(missing_run_rate >= 0 && missing_run_rate <= 1)) bad("missing_run_rate must lie in [0, 1]");
  for (double x : {base, diurnal_amplitude, diurnal_peak_hour, occupancy_amplitude, room_spread}) {
    if (!std::isfinite(x)) bad("parameters must be finite");
  }
}

namespace {

double bump(double hour, double start, double end) {
  if (hour <= start || hour >= end) return 0.0;
  const double ramp = std::min(1.0, (end - start) / 2.0);
  const double x = std::min({1.0, (hour - start) / ramp, (end - hour) / ramp});
  return x * x * (3.0 - 2.0 * x);  // smoothstep
}

std::string room_name(std::size_t r) {
  std::string n = std::to_string(r + 1);
  return "room" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

}  // namespace

std::vector<TimeSeries> generate(const SynthConfig& cfg) {
  cfg.validate();
  std::int64_t day0 = 0;
  parse_date(cfg.start_date, day0);
  const Bounds limits = CleaningLimits{}.of(cfg.variable);
  const double span = limits.upper - limits.lower;
  const std::size_t per_day = static_cast<std::size_t>(kSecondsPerDay) / cfg.interval_s;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<TimeSeries> out;

  for (std::size_t r = 0; r < cfg.rooms; ++r) {
    Rng room(mix_seed(cfg.seed, r + 1));
    Rng signal = room.child(1), outliers = room.child(2), gaps = room.child(3);
    const double offset =
        cfg.rooms > 1 ? cfg.room_spread * (static_cast<double>(r) / static_cast<double>(cfg.rooms - 1) - 0.5) : 0.0;
    TimeSeries ts{cfg.variable, room_name(r), {}};
    ts.samples.reserve(cfg.days * per_day);
    double level = cfg.level_std * signal.normal();
    const double innovation = cfg.level_std * std::sqrt(1.0 - cfg.level_ar * cfg.level_ar);

    for (std::size_t d = 0; d < cfg.days; ++d) {
      const std::int64_t day = day0 + static_cast<std::int64_t>(d);
      if (d > 0) level = cfg.level_ar * level + innovation * signal.normal();
      const bool weekend = weekday_from_days(day) >= 5;
      const double factor =
          weekend ? cfg.weekend_factor
                  : std::exp(cfg.peak_sigma * signal.normal() - 0.5 * cfg.peak_sigma * cfg.peak_sigma);
      std::size_t gap_begin = per_day, gap_end = per_day;
      if (cfg.missing_run_rate > 0 && gaps.next_double() < cfg.missing_run_rate) {
        gap_begin = gaps.below(per_day);
        gap_end = std::min(per_day, gap_begin + cfg.missing_run_minutes * 60 / cfg.interval_s);
      }
      for (std::size_t k = 0; k < per_day; ++k) {
        const Timestamp t = day * kSecondsPerDay + static_cast<Timestamp>(k * cfg.interval_s);
        const double hour = static_cast<double>(k * cfg.interval_s) / 3600.0;
        double v = cfg.base + offset + level +
                   cfg.diurnal_amplitude * std::cos(two_pi * (hour - cfg.diurnal_peak_hour) / 24.0) +
                   cfg.occupancy_amplitude * factor *
                       bump(hour, cfg.occupancy_start_hour, cfg.occupancy_end_hour) +
                   cfg.noise_std * signal.normal();
        v = std::clamp(v, limits.lower, limits.upper);
        if (cfg.outlier_rate > 0 && outliers.next_double() < cfg.outlier_rate) {
          const double excess = outliers.uniform(0.05, 0.25) * span;
          v = outliers.next_double() < 0.5 ? limits.upper + excess : limits.lower - excess;
        }
        if (k >= gap_begin && k < gap_end) {
          ts.samples.push_back({t, std::nullopt});
        } else {
          ts.samples.push_back({t, v});
        }
      }
    }
    out.push_back(std::move(ts));
  }
  return out;
}

namespace {

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    throw ConfigError("synthetic config: '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw ConfigError("synthetic config: '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

}  // namespace

SynthConfig synth_config_from_map(const std::map<std::string, std::string>& values) {
  SynthConfig c;
  if (auto it = values.find("variable"); it != values.end()) {
    try {
      c = SynthConfig::defaults(parse_variable(it->second));
    } catch (const Error& e) {
      throw ConfigError(std::string("synthetic config: ") + e.what());
    }
  }
  for (const auto& [key, value] : values) {
    if (key == "variable") continue;
    if (key == "days") c.days = to_uint(key, value);
    else if (key == "rooms") c.rooms = to_uint(key, value);
    else if (key == "seed") c.seed = to_uint(key, value);
    else if (key == "start_date") c.start_date = value;
    else if (key == "interval_s") c.interval_s = to_uint(key, value);
    else if (key == "base") c.base = to_double(key, value);
    else if (key == "diurnal_amplitude") c.diurnal_amplitude = to_double(key, value);
    else if (key == "diurnal_peak_hour") c.diurnal_peak_hour = to_double(key, value);
    else if (key == "occupancy_amplitude") c.occupancy_amplitude = to_double(key, value);
    else if (key == "occupancy_start_hour") c.occupancy_start_hour = to_double(key, value);
    else if (key == "occupancy_end_hour") c.occupancy_end_hour = to_double(key, value);
    else if (key == "weekend_factor") c.weekend_factor = to_double(key, value);
    else if (key == "peak_sigma") c.peak_sigma = to_double(key, value);
    else if (key == "noise_std") c.noise_std = to_double(key, value);
    else if (key == "level_std") c.level_std = to_double(key, value);
    else if (key == "level_ar") c.level_ar = to_double(key, value);
    else if (key == "room_spread") c.room_spread = to_double(key, value);
    else if (key == "outlier_rate") c.outlier_rate = to_double(key, value);
    else if (key == "missing_run_rate") c.missing_run_rate = to_double(key, value);
    else if (key == "missing_run_minutes") c.missing_run_minutes = to_uint(key, value);
    else throw ConfigError("synthetic config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

SynthConfig parse_synth_config(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text(trim(line));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("synthetic config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(std::string_view(text).substr(0, eq)));
    if (key.empty()) throw ConfigError("synthetic config line " + std::to_string(line_no) + ": empty key");
    if (!values.emplace(key, std::string(trim(std::string_view(text).substr(eq + 1)))).second) {
      throw ConfigError("synthetic config: duplicate key '" + key + "'");
    }
  }
  return synth_config_from_map(values);
}

std::map<std::string, std::string> synth_config_to_map(const SynthConfig& c) {
  return {{"variable", to_string(c.variable)},
          {"days", std::to_string(c.days)},
          {"rooms", std::to_string(c.rooms)},
          {"seed", std::to_string(c.seed)},
          {"start_date", c.start_date},
          {"interval_s", std::to_string(c.interval_s)},
          {"base", format_double(c.base)},
          {"diurnal_amplitude", format_double(c.diurnal_amplitude)},
          {"diurnal_peak_hour", format_double(c.diurnal_peak_hour)},
          {"occupancy_amplitude", format_double(c.occupancy_amplitude)},
          {"occupancy_start_hour", format_double(c.occupancy_start_hour)},
          {"occupancy_end_hour", format_double(c.occupancy_end_hour)},
          {"weekend_factor", format_double(c.weekend_factor)},
          {"peak_sigma", format_double(c.peak_sigma)},
          {"noise_std", format_double(c.noise_std)},
          {"level_std", format_double(c.level_std)},
          {"level_ar", format_double(c.level_ar)},
          {"room_spread", format_double(c.room_spread)},
          {"outlier_rate", format_double(c.outlier_rate)},
          {"missing_run_rate", format_double(c.missing_run_rate)},
          {"missing_run_minutes", std::to_string(c.missing_run_minutes)}};
}

}  // namespace gapfill
