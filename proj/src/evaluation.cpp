#include "gapfill/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "gapfill/csv_io.hpp"
#include "gapfill/errors.hpp"

namespace gapfill {

double rmse(std::span<const double> observed, std::span<const double> inserted) {
  if (observed.size() != inserted.size()) throw ShapeError("rmse: inputs differ in length");
  if (observed.empty()) throw InsufficientDataError("rmse of an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - inserted[i];
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(observed.size()));
}

double nrmse(double rmse_value, double data_iqr) {
  if (!(data_iqr > 0.0)) throw ConfigError("nrmse needs a positive interquartile range");
  return rmse_value / data_iqr;
}

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
  double skew = 0.0;
};

Moments moments(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m.stddev = std::sqrt(m2);
  m.skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return m;
}

}  // namespace

double sat(std::span<const double> reconstructions) {
  if (reconstructions.empty()) throw InsufficientDataError("sat of an empty set");
  return moments(reconstructions).stddev;
}

ResidualStats residual_stats(std::span<const double> observed, std::span<const double> inserted) {
  if (observed.size() != inserted.size()) throw ShapeError("residual_stats: inputs differ in length");
  if (observed.empty()) throw InsufficientDataError("residual_stats of an empty set");
  std::vector<double> r(observed.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = observed[i] - inserted[i];
  const auto m = moments(r);
  return {m.mean, m.stddev, m.skew, r.size()};
}

DescriptiveStats descriptive_stats(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("descriptive statistics of an empty set");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const auto m = moments(values);
  return {*lo, *hi, m.mean, m.stddev};
}

DescriptiveStats descriptive_stats(const DayMatrix& days) { return descriptive_stats(days.values().values()); }

DayVector poly_interpolate(const MaskedDay& masked, int degree) {
  if (degree < 1 || degree > 3) throw ConfigError("polynomial degree must be 1, 2 or 3");
  std::vector<std::size_t> observed;
  for (std::size_t t = 0; t < kBinsPerDay; ++t)
    if (!masked.mask[t]) observed.push_back(t);
  if (observed.size() < static_cast<std::size_t>(degree) + 1) {
    throw InsufficientDataError("polynomial of degree " + std::to_string(degree) + " needs " +
                                std::to_string(degree + 1) + " observed bins");
  }
  // Centered, scaled abscissa keeps the Vandermonde system well conditioned.
  const auto scaled = [](std::size_t t) { return (static_cast<double>(t) - 23.5) / 23.5; };
  const auto cols = static_cast<Eigen::Index>(degree + 1);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(observed.size()), cols);
  Eigen::VectorXd y(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double x = scaled(observed[static_cast<std::size_t>(r)]);
    double p = 1.0;
    for (Eigen::Index c = 0; c < cols; ++c, p *= x) a(r, c) = p;
    y(r) = masked.original[observed[static_cast<std::size_t>(r)]];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  DayVector out = masked.original;
  for (std::size_t t = 0; t < kBinsPerDay; ++t) {
    if (!masked.mask[t]) continue;
    const double x = scaled(t);
    double v = 0.0;
    for (Eigen::Index c = cols; c-- > 0;) v = v * x + coef(c);
    out[t] = v;
  }
  return out;
}

std::string baseline_name(int degree) {
  switch (degree) {
    case 1: return "LIN";
    case 2: return "QUAD";
    case 3: return "CUB";
    default: throw ConfigError("polynomial degree must be 1, 2 or 3");
  }
}

SequenceErrors per_sequence_rmse(const Autoencoder& model, const DayMatrix& normalized_days) {
  if (normalized_days.empty()) throw InsufficientDataError("no days to score");
  const Tensor rec = model.reconstruct_batch(normalized_days.values());
  SequenceErrors out;
  for (std::size_t i = 0; i < normalized_days.rows(); ++i) {
    const auto day = normalized_days.row(i);
    const std::span<const double> r(rec.data() + i * kBinsPerDay, kBinsPerDay);
    out.rmse.push_back(rmse(day, r) * model.normalizer.stddev);
  }
  if (out.rmse.size() >= 2) {
    const auto q = quartiles(out.rmse);
    out.threshold = q.q3 + 1.5 * q.iqr();
  } else {
    out.threshold = out.rmse.front();
  }
  for (double e : out.rmse) out.atypical.push_back(e > out.threshold);
  return out;
}

std::size_t ActivationHistogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

double ActivationHistogram::endpoint_fraction() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(counts.front() + counts.back()) / static_cast<double>(n);
}

std::array<std::size_t, kHistogramBins> histogram(std::span<const double> values, double low, double high) {
  if (!(high > low)) throw ConfigError("histogram range must be non-empty");
  std::array<std::size_t, kHistogramBins> counts{};
  const double width = (high - low) / static_cast<double>(kHistogramBins);
  for (double v : values) {
    const double pos = std::floor((v - low) / width);
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(kHistogramBins - 1)));
    ++counts[bin];
  }
  return counts;
}

std::vector<ActivationHistogram> activation_histograms(const Autoencoder& model,
                                                       const DayMatrix& normalized_days, double cr,
                                                       std::uint64_t mask_seed) {
  if (normalized_days.empty()) throw InsufficientDataError("no days for activation histograms");
  Tensor inputs({normalized_days.rows(), kBinsPerDay});
  for (std::size_t i = 0; i < normalized_days.rows(); ++i) {
    const auto masked = corrupt(normalized_days.row(i),
                                {CorruptionMode::reconstruction, cr, fixed_mask_seed(mask_seed, i, cr)});
    std::copy(masked.corrupted.begin(), masked.corrupted.end(), inputs.data() + i * kBinsPerDay);
  }
  const auto pass = model.infer(inputs);
  std::vector<ActivationHistogram> out;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const auto& spec = model.layers()[li].spec;
    std::string name;
    if (spec.kind == LayerKind::lstm) {
      name = "lstm";
    } else if (spec.kind == LayerKind::dense || spec.kind == LayerKind::conv1d ||
               spec.kind == LayerKind::activation) {
      if (spec.activation == Activation::linear) continue;
      name = to_string(spec.activation);
    } else {
      continue;
    }
    const Tensor& a = pass.records[li].output;
    const std::size_t units = a.last_dim(), rows = a.leading_size();
    ActivationHistogram h;
    h.layer_index = li;
    h.activation = name;
    h.unit_means.assign(units, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t u = 0; u < units; ++u) h.unit_means[u] += a[r * units + u];
    for (double& m : h.unit_means) m /= static_cast<double>(rows);
    if (name == "sigmoid") {
      h.low = 0.0, h.high = 1.0;
    } else if (name == "relu") {
      h.low = 0.0;
      const double mx = *std::max_element(h.unit_means.begin(), h.unit_means.end());
      h.high = mx > 0.0 ? mx : 1.0;
    } else {
      h.low = -1.0, h.high = 1.0;
    }
    h.counts = histogram(h.unit_means, h.low, h.high);
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<double> default_eval_crs() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

CrRun run_cr(const Autoencoder& model, const DayMatrix& eval_days, double cr, CorruptionMode mode,
             std::uint64_t mask_seed) {
  if (eval_days.empty()) throw InsufficientDataError("evaluation set is empty");
  const Normalizer& nz = model.normalizer;
  const std::size_t n = eval_days.rows();
  CrRun run;
  run.cr = cr;
  Tensor inputs({n, kBinsPerDay});
  std::vector<MaskedDay> normalized(n);
  for (std::size_t i = 0; i < n; ++i) {
    DayVector z{};
    const auto day = eval_days.row(i);
    for (std::size_t t = 0; t < kBinsPerDay; ++t) z[t] = nz.normalize(day[t]);
    normalized[i] = corrupt(z, {mode, cr, fixed_mask_seed(mask_seed, i, cr)});
    std::copy(normalized[i].corrupted.begin(), normalized[i].corrupted.end(), inputs.data() + i * kBinsPerDay);
  }
  const Tensor rec = model.reconstruct_batch(inputs);
  run.reconstructions.assign(rec.data(), rec.data() + rec.size());
  run.filled = eval_days;
  run.masked.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto day = eval_days.row(i);
    MaskedDay m = normalized[i];
    auto out = run.filled.row(i);
    for (std::size_t t = 0; t < kBinsPerDay; ++t) {
      m.original[t] = day[t];
      m.corrupted[t] = m.mask[t] ? 0.0 : day[t];
      if (m.mask[t]) {
        const double v = nz.denormalize(rec[i * kBinsPerDay + t]);
        out[t] = v;
        run.observed.push_back(day[t]);
        run.inserted.push_back(v);
      }
    }
    run.masked.push_back(m);
  }
  return run;
}

std::vector<EvaluationRow> EvaluationReport::method_rows(const std::string& method) const {
  std::vector<EvaluationRow> out;
  for (const auto& r : rows)
    if (r.method == method && !r.average) out.push_back(r);
  return out;
}

const EvaluationRow& EvaluationReport::average(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method && r.average) return r;
  throw ContractError("no average row for method '" + method + "'");
}

namespace {

EvaluationReport evaluate(const Autoencoder& model, const DayMatrix& eval_days,
                          const EvaluationOptions& options, CorruptionMode mode) {
  if (options.cr_grid.empty()) throw ConfigError("empty CR grid");
  if (eval_days.empty()) throw InsufficientDataError("evaluation set is empty");
  EvaluationReport report;
  report.variable = model.variable;
  report.mode = mode;
  report.iqr = quartiles(eval_days.values().values()).iqr();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::string> methods{options.model_name};
  for (int d : options.baseline_degrees) methods.push_back(baseline_name(d));
  std::vector<std::vector<EvaluationRow>> per_method(methods.size());

  for (double cr : options.cr_grid) {
    const auto run = run_cr(model, eval_days, cr, mode, options.mask_seed);
    const double h = horizon_hours(cr);
    const double e = rmse(run.observed, run.inserted);
    per_method[0].push_back({options.model_name, cr, h, e, nrmse(e, report.iqr), sat(run.reconstructions), false});
    for (std::size_t b = 0; b < options.baseline_degrees.size(); ++b) {
      const int degree = options.baseline_degrees[b];
      std::vector<double> inserted;
      inserted.reserve(run.observed.size());
      for (const auto& m : run.masked) {
        const auto fit = poly_interpolate(m, degree);
        for (std::size_t t = 0; t < kBinsPerDay; ++t)
          if (m.mask[t]) inserted.push_back(fit[t]);
      }
      const double be = rmse(run.observed, inserted);
      per_method[b + 1].push_back({methods[b + 1], cr, h, be, nrmse(be, report.iqr), nan, false});
    }
  }
  for (std::size_t k = 0; k < methods.size(); ++k) {
    EvaluationRow avg{methods[k], nan, nan, 0.0, 0.0, 0.0, true};
    const double n = static_cast<double>(per_method[k].size());
    double cr_sum = 0.0, h_sum = 0.0;
    for (const auto& r : per_method[k]) {
      avg.rmse += r.rmse;
      avg.nrmse += r.nrmse;
      avg.sat += r.sat;
      cr_sum += r.cr;
      h_sum += r.horizon_h;
      report.rows.push_back(r);
    }
    avg.rmse /= n;
    avg.nrmse /= n;
    avg.sat /= n;
    avg.cr = cr_sum / n;
    avg.horizon_h = h_sum / n;
    report.rows.push_back(avg);
  }
  return report;
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

EvaluationReport evaluate_reconstruction(const Autoencoder& model, const DayMatrix& eval_days,
                                         const EvaluationOptions& options) {
  return evaluate(model, eval_days, options, CorruptionMode::reconstruction);
}

EvaluationReport evaluate_forecast(const Autoencoder& model, const DayMatrix& eval_days,
                                   const EvaluationOptions& options) {
  return evaluate(model, eval_days, options, CorruptionMode::forecast);
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
  const std::string unit = unit_of(report.variable);
  out << "method,row," << (report.mode == CorruptionMode::forecast ? "cr,ph_h" : "cr,gap_h")
      << ",rmse_" << unit << ",nrmse,sat\n";
  for (const auto& r : report.rows) {
    out << r.method << ',' << (r.average ? "Avg" : "CR") << ',' << cell(r.cr) << ','
        << cell(r.horizon_h) << ',' << cell(r.rmse) << ',' << cell(r.nrmse) << ',' << cell(r.sat) << '\n';
  }
}

std::string report_to_json(const EvaluationReport& report) {
  using nlohmann::json;
  const auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"average", r.average},
                    {"cr", num(r.cr)},
                    {"horizon_h", num(r.horizon_h)},
                    {"rmse", num(r.rmse)},
                    {"nrmse", num(r.nrmse)},
                    {"sat", num(r.sat)}});
  }
  json doc{{"variable", to_string(report.variable)},
           {"mode", to_string(report.mode)},
           {"units", {{"rmse", unit_of(report.variable)}, {"nrmse", "1"}, {"sat", "1"}, {"horizon_h", "h"}}},
           {"iqr", report.iqr},
           {"rows", rows}};
  return doc.dump(2);
}

}  // namespace gapfill
