#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/civil_time.hpp"
#include "gapfill/corruption.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

enum class Variable { temperature, relative_humidity, co2 };

std::string to_string(Variable v);  // "T", "RH", "CO2"
std::string unit_of(Variable v);    // "degC", "%", "ppm"
Variable parse_variable(std::string_view text);

struct Sample {
  Timestamp time = 0;
  std::optional<double> value;  // empty = missing
};

// Observations of one variable in one room; timestamps strictly increasing.
struct TimeSeries {
  Variable variable = Variable::temperature;
  std::string room_id;
  std::vector<Sample> samples;
};

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const noexcept { return v >= lower && v <= upper; }
};

// Plausible physical ranges per variable.
struct CleaningLimits {
  Bounds temperature{-10.0, 40.0};
  Bounds relative_humidity{0.0, 100.0};
  Bounds co2{0.0, 2500.0};

  const Bounds& of(Variable v) const noexcept;
};

struct Quartiles {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const noexcept { return q3 - q1; }
};

// Linear-interpolation quantile (numpy's default). `values` need not be sorted.
double quantile(std::vector<double> values, double p);
Quartiles quartiles(std::span<const double> values);

struct CleanResult {
  TimeSeries series;
  std::size_t outliers = 0;
};

struct IqrCleanResult {
  TimeSeries series;
  Bounds bounds;
  std::size_t outliers = 0;
};

// Values outside the limits become missing.
CleanResult clean_theoretical(const TimeSeries& ts, const CleaningLimits& limits);

// Values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR] are clamped to the nearest bound.
IqrCleanResult clean_iqr(const TimeSeries& ts);

// Mean of the observed samples in each half-hour wall-clock slot; slots
// without observations are missing. Covers every slot from the first to the
// last sample.
TimeSeries resample_30min(const TimeSeries& ts);

struct DayKey {
  std::string room_id;
  std::int64_t day = 0;  // days since 1970-01-01

  // Chronological first, room second.
  std::strong_ordering operator<=>(const DayKey& other) const;
  bool operator==(const DayKey& other) const = default;
};

// Rows of 48 complete half-hourly values; one row per (room, date).
class DayMatrix {
 public:
  DayMatrix() : values_({0, kBinsPerDay}) {}

  std::size_t rows() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }
  const std::vector<DayKey>& keys() const noexcept { return keys_; }
  const Tensor& values() const noexcept { return values_; }
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  void append(DayKey key, std::span<const double> values);
  DayMatrix select(std::span<const std::size_t> indices) const;
  DayMatrix slice(std::size_t begin, std::size_t end) const;
  void sort_chronologically();

  static DayMatrix from_values(std::vector<DayKey> keys, Tensor values);

 private:
  std::vector<DayKey> keys_;
  Tensor values_;
};

struct DayMatrixResult {
  DayMatrix matrix;
  std::size_t discarded = 0;
  std::size_t candidates = 0;
};

// Complete-case filter: days with all 48 bins present become rows, the rest
// are counted as discarded. Requires a resampled series.
DayMatrixResult to_day_matrix(const TimeSeries& resampled);

// Concatenates and orders rows by (date, room).
DayMatrix merge(const std::vector<DayMatrix>& parts);

struct SplitFractions {
  double train = 0.30;
  double validation = 0.10;
  double evaluation = 0.60;
};

struct DataSplit {
  DayMatrix train;
  DayMatrix validation;
  DayMatrix evaluation;
};

// Chronological split: round-half-up counts for train and validation, the
// remainder goes to evaluation. Needs at least 10 rows.
DataSplit split(const DayMatrix& dm, SplitFractions fractions = {});

struct Normalizer {
  double mean = 0.0;
  double stddev = 1.0;

  double normalize(double x) const noexcept { return (x - mean) / stddev; }
  double denormalize(double z) const noexcept { return z * stddev + mean; }
  bool operator==(const Normalizer&) const = default;
};

// Mean and population standard deviation over every training cell.
Normalizer fit_normalizer(const DayMatrix& train);
DayMatrix normalize(const DayMatrix& dm, const Normalizer& nz);
DayMatrix denormalize(const DayMatrix& dm, const Normalizer& nz);

enum class CleaningMethod { theoretical, iqr, none };
std::string to_string(CleaningMethod m);
CleaningMethod parse_cleaning_method(std::string_view text);

struct RoomReport {
  std::string room_id;
  std::size_t samples = 0;
  std::size_t missing_samples = 0;
  std::size_t outliers = 0;
  std::size_t candidate_days = 0;
  std::size_t complete_days = 0;
  std::size_t discarded_days = 0;
  std::optional<Bounds> iqr_bounds;
};

struct CleaningReport {
  Variable variable = Variable::temperature;
  CleaningMethod method = CleaningMethod::theoretical;
  std::vector<RoomReport> rooms;

  RoomReport totals() const;
};

struct PreprocessResult {
  DayMatrix matrix;
  CleaningReport report;
};

// clean -> resample -> complete-day filter for every room, pooled into one
// day matrix ordered by (date, room). Series of other variables are ignored.
PreprocessResult preprocess(const std::vector<TimeSeries>& series, Variable variable,
                            CleaningMethod method, const CleaningLimits& limits = {});

}  // namespace gapfill
