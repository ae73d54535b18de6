#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/preprocess.hpp"

namespace gapfill {

/// Parameters of the synthetic indoor-climate generator.
///
/// value(t) = base + room offset + day level (AR(1) across days)
///          + diurnal_amplitude * cos(2 pi (hour - diurnal_peak_hour) / 24)
///          + occupancy_amplitude * day factor * bump(hour)
///          + N(0, noise_std)
/// bump(hour) ramps smoothly from 0 to 1 over the first and last hour of the
/// occupancy window. The day factor is lognormal with unit mean on weekdays
/// (spread peak_sigma) and weekend_factor on weekends. Values are clamped to
/// the variable's cleaning limits, except injected outliers which land
/// beyond them.
struct SynthConfig {
  Variable variable = Variable::temperature;
  std::size_t days = 100;
  std::size_t rooms = 4;
  std::uint64_t seed = 0;
  std::string start_date = "2016-01-01";
  std::size_t interval_s = 60;

  double base = 22.7;
  double diurnal_amplitude = 1.5;
  double diurnal_peak_hour = 15.0;
  double occupancy_amplitude = 0.6;
  double occupancy_start_hour = 8.0;
  double occupancy_end_hour = 18.0;
  double weekend_factor = 0.1;
  double peak_sigma = 0.2;
  double noise_std = 0.2;
  double level_std = 0.4;
  double level_ar = 0.8;
  double room_spread = 0.6;  // room offsets spread evenly over +-room_spread/2

  double outlier_rate = 0.0;      // per sample
  double missing_run_rate = 0.0;  // per room-day
  std::size_t missing_run_minutes = 90;

  // Defaults tuned per variable: T around 22.7 degC, RH around 39 %, CO2
  // around 500 ppm with heavy-tailed occupancy peaks.
  static SynthConfig defaults(Variable v);
  void validate() const;
};

// One series per room, room ids "room01", "room02", ...
std::vector<TimeSeries> generate(const SynthConfig& cfg);

// Flat `key = value` text; '#' starts a comment. `variable` selects the
// defaults, remaining keys override them. Unknown keys are config errors.
SynthConfig parse_synth_config(std::istream& in);
SynthConfig synth_config_from_map(const std::map<std::string, std::string>& values);
std::map<std::string, std::string> synth_config_to_map(const SynthConfig& cfg);

}  // namespace gapfill
