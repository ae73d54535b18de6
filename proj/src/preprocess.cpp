#include "gapfill/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include "gapfill/errors.hpp"

namespace gapfill {

std::string to_string(Variable v) {
  switch (v) {
    case Variable::temperature: return "T";
    case Variable::relative_humidity: return "RH";
    case Variable::co2: return "CO2";
  }
  return "?";
}

std::string unit_of(Variable v) {
  switch (v) {
    case Variable::temperature: return "degC";
    case Variable::relative_humidity: return "%";
    case Variable::co2: return "ppm";
  }
  return "?";
}

Variable parse_variable(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "T" || s == "TEMPERATURE") return Variable::temperature;
  if (s == "RH" || s == "RELATIVE_HUMIDITY" || s == "HUMIDITY") return Variable::relative_humidity;
  if (s == "CO2") return Variable::co2;
  throw ConfigError("unknown variable '" + std::string(text) + "' (expected T, RH or CO2)");
}

const Bounds& CleaningLimits::of(Variable v) const noexcept {
  switch (v) {
    case Variable::temperature: return temperature;
    case Variable::relative_humidity: return relative_humidity;
    case Variable::co2: return co2;
  }
  return temperature;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InsufficientDataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Quartiles quartiles(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.25), quantile(v, 0.75)};
}

CleanResult clean_theoretical(const TimeSeries& ts, const CleaningLimits& limits) {
  CleanResult res{ts, 0};
  const Bounds& b = limits.of(ts.variable);
  for (auto& s : res.series.samples) {
    if (s.value && !b.contains(*s.value)) {
      s.value.reset();
      ++res.outliers;
    }
  }
  return res;
}

IqrCleanResult clean_iqr(const TimeSeries& ts) {
  std::vector<double> observed;
  for (const auto& s : ts.samples)
    if (s.value) observed.push_back(*s.value);
  if (observed.size() < 4) {
    throw InsufficientDataError("IQR cleaning needs at least 4 observed values, got " +
                                std::to_string(observed.size()));
  }
  const Quartiles q = quartiles(observed);
  IqrCleanResult res{ts, {q.q1 - 1.5 * q.iqr(), q.q3 + 1.5 * q.iqr()}, 0};
  for (auto& s : res.series.samples) {
    if (!s.value) continue;
    if (*s.value < res.bounds.lower) {
      s.value = res.bounds.lower;
      ++res.outliers;
    } else if (*s.value > res.bounds.upper) {
      s.value = res.bounds.upper;
      ++res.outliers;
    }
  }
  return res;
}

TimeSeries resample_30min(const TimeSeries& ts) {
  TimeSeries out{ts.variable, ts.room_id, {}};
  if (ts.samples.empty()) return out;
  const std::int64_t first = floor_div(ts.samples.front().time, kSecondsPerSlot);
  const std::int64_t last = floor_div(ts.samples.back().time, kSecondsPerSlot);
  const auto slots = static_cast<std::size_t>(last - first + 1);
  std::vector<double> total(slots, 0.0);
  std::vector<std::size_t> count(slots, 0);
  for (const auto& s : ts.samples) {
    if (!s.value) continue;
    const auto idx = static_cast<std::size_t>(floor_div(s.time, kSecondsPerSlot) - first);
    total[idx] += *s.value;
    ++count[idx];
  }
  out.samples.resize(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    out.samples[i].time = (first + static_cast<std::int64_t>(i)) * kSecondsPerSlot;
    if (count[i]) out.samples[i].value = total[i] / static_cast<double>(count[i]);
  }
  return out;
}

std::strong_ordering DayKey::operator<=>(const DayKey& other) const {
  if (auto c = day <=> other.day; c != 0) return c;
  const int r = room_id.compare(other.room_id);
  return r < 0 ? std::strong_ordering::less
               : (r > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
}

std::span<const double> DayMatrix::row(std::size_t i) const {
  if (i >= rows()) throw ShapeError("day matrix row out of range");
  return {values_.data() + i * kBinsPerDay, kBinsPerDay};
}

std::span<double> DayMatrix::row(std::size_t i) {
  if (i >= rows()) throw ShapeError("day matrix row out of range");
  return {values_.data() + i * kBinsPerDay, kBinsPerDay};
}

void DayMatrix::append(DayKey key, std::span<const double> values) {
  if (values.size() != kBinsPerDay) throw ShapeError("a day matrix row needs 48 values");
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractError("day matrix rows cannot hold missing values");
  }
  std::vector<double> data(values_.values().begin(), values_.values().end());
  data.insert(data.end(), values.begin(), values.end());
  keys_.push_back(std::move(key));
  values_ = Tensor({keys_.size(), kBinsPerDay}, std::move(data));
}

DayMatrix DayMatrix::select(std::span<const std::size_t> indices) const {
  std::vector<DayKey> keys;
  std::vector<double> data;
  keys.reserve(indices.size());
  data.reserve(indices.size() * kBinsPerDay);
  for (std::size_t i : indices) {
    const auto r = row(i);
    keys.push_back(keys_[i]);
    data.insert(data.end(), r.begin(), r.end());
  }
  const std::size_t n = keys.size();
  return from_values(std::move(keys), Tensor({n, kBinsPerDay}, std::move(data)));
}

DayMatrix DayMatrix::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return select(idx);
}

void DayMatrix::sort_chronologically() {
  std::vector<std::size_t> order(rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys_[a] < keys_[b]; });
  *this = select(order);
}

DayMatrix DayMatrix::from_values(std::vector<DayKey> keys, Tensor values) {
  if (values.rank() != 2 || values.dim(1) != kBinsPerDay || values.dim(0) != keys.size()) {
    throw ShapeError("day matrix values must be [rows x 48], got " + shape_string(values.shape()));
  }
  if (!values.all_finite()) throw ContractError("day matrix rows cannot hold missing values");
  DayMatrix dm;
  dm.keys_ = std::move(keys);
  dm.values_ = std::move(values);
  return dm;
}

DayMatrixResult to_day_matrix(const TimeSeries& resampled) {
  DayMatrixResult res;
  if (resampled.samples.empty()) return res;
  for (const auto& s : resampled.samples) {
    if (s.time % kSecondsPerSlot != 0) {
      throw ContractError("to_day_matrix expects a 30-minute resampled series");
    }
  }
  std::map<std::int64_t, std::array<std::optional<double>, kBinsPerDay>> days;
  for (const auto& s : resampled.samples) {
    const std::int64_t day = floor_div(s.time, kSecondsPerDay);
    const auto bin = static_cast<std::size_t>((s.time - day * kSecondsPerDay) / kSecondsPerSlot);
    days[day][bin] = s.value;
  }
  std::vector<DayKey> keys;
  std::vector<double> data;
  for (const auto& [day, bins] : days) {
    // Days with no observation at all are outside the record, not candidates.
    if (std::none_of(bins.begin(), bins.end(), [](const auto& b) { return b.has_value(); })) continue;
    ++res.candidates;
    const bool complete = std::all_of(bins.begin(), bins.end(), [](const auto& b) { return b.has_value(); });
    if (!complete) {
      ++res.discarded;
      continue;
    }
    keys.push_back({resampled.room_id, day});
    for (const auto& b : bins) data.push_back(*b);
  }
  const std::size_t n = keys.size();
  res.matrix = DayMatrix::from_values(std::move(keys), Tensor({n, kBinsPerDay}, std::move(data)));
  return res;
}

DayMatrix merge(const std::vector<DayMatrix>& parts) {
  std::vector<DayKey> keys;
  std::vector<double> data;
  for (const auto& p : parts) {
    keys.insert(keys.end(), p.keys().begin(), p.keys().end());
    data.insert(data.end(), p.values().values().begin(), p.values().values().end());
  }
  const std::size_t n = keys.size();
  DayMatrix dm = DayMatrix::from_values(std::move(keys), Tensor({n, kBinsPerDay}, std::move(data)));
  dm.sort_chronologically();
  return dm;
}

DataSplit split(const DayMatrix& dm, SplitFractions fractions) {
  const double total = fractions.train + fractions.validation + fractions.evaluation;
  if (std::abs(total - 1.0) > 1e-9 || fractions.train <= 0 || fractions.validation <= 0 ||
      fractions.evaluation <= 0) {
    throw ConfigError("split fractions must be positive and sum to 1");
  }
  const std::size_t n = dm.rows();
  if (n < 10) {
    throw InsufficientDataError("splitting needs at least 10 complete days, got " + std::to_string(n));
  }
  DayMatrix sorted = dm;
  sorted.sort_chronologically();
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n) + 0.5));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n) + 0.5));
  return {sorted.slice(0, n_train), sorted.slice(n_train, n_train + n_val),
          sorted.slice(n_train + n_val, n)};
}

Normalizer fit_normalizer(const DayMatrix& train) {
  if (train.empty()) throw InsufficientDataError("cannot fit a normalizer on an empty training set");
  const auto v = train.values().values();
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw ConfigError("training data is constant; standard deviation is zero");
  return {mu, sd};
}

namespace {

DayMatrix transform(const DayMatrix& dm, auto&& f) {
  Tensor values = dm.values();
  for (auto& x : values.values()) x = f(x);
  return DayMatrix::from_values(dm.keys(), std::move(values));
}

}  // namespace

DayMatrix normalize(const DayMatrix& dm, const Normalizer& nz) {
  return transform(dm, [&](double x) { return nz.normalize(x); });
}

DayMatrix denormalize(const DayMatrix& dm, const Normalizer& nz) {
  return transform(dm, [&](double z) { return nz.denormalize(z); });
}

std::string to_string(CleaningMethod m) {
  switch (m) {
    case CleaningMethod::theoretical: return "theoretical";
    case CleaningMethod::iqr: return "iqr";
    case CleaningMethod::none: return "none";
  }
  return "?";
}

CleaningMethod parse_cleaning_method(std::string_view text) {
  if (text == "theoretical") return CleaningMethod::theoretical;
  if (text == "iqr") return CleaningMethod::iqr;
  if (text == "none") return CleaningMethod::none;
  throw ConfigError("unknown cleaning method '" + std::string(text) + "'");
}

RoomReport CleaningReport::totals() const {
  RoomReport t;
  t.room_id = "total";
  for (const auto& r : rooms) {
    t.samples += r.samples;
    t.missing_samples += r.missing_samples;
    t.outliers += r.outliers;
    t.candidate_days += r.candidate_days;
    t.complete_days += r.complete_days;
    t.discarded_days += r.discarded_days;
  }
  return t;
}

PreprocessResult preprocess(const std::vector<TimeSeries>& series, Variable variable,
                            CleaningMethod method, const CleaningLimits& limits) {
  PreprocessResult res;
  res.report.variable = variable;
  res.report.method = method;
  std::vector<DayMatrix> parts;
  for (const auto& ts : series) {
    if (ts.variable != variable) continue;
    RoomReport room;
    room.room_id = ts.room_id;
    room.samples = ts.samples.size();
    room.missing_samples = static_cast<std::size_t>(std::count_if(
        ts.samples.begin(), ts.samples.end(), [](const Sample& s) { return !s.value; }));
    TimeSeries cleaned;
    switch (method) {
      case CleaningMethod::theoretical: {
        auto c = clean_theoretical(ts, limits);
        room.outliers = c.outliers;
        cleaned = std::move(c.series);
        break;
      }
      case CleaningMethod::iqr: {
        auto c = clean_iqr(ts);
        room.outliers = c.outliers;
        room.iqr_bounds = c.bounds;
        cleaned = std::move(c.series);
        break;
      }
      case CleaningMethod::none:
        cleaned = ts;
        break;
    }
    auto days = to_day_matrix(resample_30min(cleaned));
    room.candidate_days = days.candidates;
    room.discarded_days = days.discarded;
    room.complete_days = days.matrix.rows();
    parts.push_back(std::move(days.matrix));
    res.report.rooms.push_back(std::move(room));
  }
  res.matrix = merge(parts);
  return res;
}

}  // namespace gapfill
