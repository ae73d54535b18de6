#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gapfill/corruption.hpp"
#include "gapfill/models.hpp"
#include "gapfill/preprocess.hpp"

namespace gapfill {

// sqrt(sum((observed - inserted)^2) / n). Throws on empty or unequal input.
double rmse(std::span<const double> observed, std::span<const double> inserted);

// rmse / iqr; iqr must be positive.
double nrmse(double rmse_value, double data_iqr);

// Saturation diagnostic: population standard deviation of normalized
// reconstructed values. Values below kSaturationThreshold mean the network
// produces (nearly) the same output for every input.
inline constexpr double kSaturationThreshold = 0.1;
double sat(std::span<const double> reconstructions);

struct ResidualStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double skew = 0.0;    // population skewness, 0 when stddev is 0
  std::size_t count = 0;
};

// Statistics of observed - inserted.
ResidualStats residual_stats(std::span<const double> observed, std::span<const double> inserted);

struct DescriptiveStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

DescriptiveStats descriptive_stats(std::span<const double> values);
DescriptiveStats descriptive_stats(const DayMatrix& days);

// Least-squares polynomial of `degree` (1..3) through every observed bin of
// the day, evaluated at the masked bins; observed bins pass through.
// Works in whatever units `masked.original` carries.
DayVector poly_interpolate(const MaskedDay& masked, int degree);

std::string baseline_name(int degree);  // LIN, QUAD, CUB

struct SequenceErrors {
  std::vector<double> rmse;    // per day, original units
  std::vector<bool> atypical;  // rmse > Q3 + 1.5 IQR of the list
  double threshold = 0.0;
};

// Reconstructs every uncorrupted (normalized) day and reports its RMSE in
// original units using the model's normalizer.
SequenceErrors per_sequence_rmse(const Autoencoder& model, const DayMatrix& normalized_days);

inline constexpr std::size_t kHistogramBins = 20;

struct ActivationHistogram {
  std::size_t layer_index = 0;
  std::string activation;  // sigmoid, tanh, relu, lstm
  double low = 0.0;
  double high = 1.0;
  std::array<std::size_t, kHistogramBins> counts{};
  std::vector<double> unit_means;

  std::size_t total() const;
  // Share of units whose average activation falls into the first or last bin.
  double endpoint_fraction() const;
};

// Per nonlinear layer, the average activation of every unit over the
// corrupted days (fixed masks at `cr`) binned over the activation's range:
// [0,1] sigmoid, [-1,1] tanh and lstm hidden states, [0, max] relu.
std::vector<ActivationHistogram> activation_histograms(const Autoencoder& model,
                                                       const DayMatrix& normalized_days, double cr,
                                                       std::uint64_t mask_seed);

// Bins `values` into kHistogramBins uniform bins over [low, high]; values
// outside are clamped into the edge bins.
std::array<std::size_t, kHistogramBins> histogram(std::span<const double> values, double low,
                                                  double high);

inline constexpr std::uint64_t kEvaluationMaskSeed = 0x6576616c75617465ULL;

std::vector<double> default_eval_crs();  // 0.1 .. 0.9

// Everything produced by corrupting the evaluation days at one CR and
// reconstructing them with the model.
struct CrRun {
  double cr = 0.0;
  std::vector<double> observed;            // masked cells, original units
  std::vector<double> inserted;            // model values at masked cells
  std::vector<double> reconstructions;     // every reconstructed value, normalized
  DayMatrix filled;                        // original units
  std::vector<MaskedDay> masked;           // original units
};

// `eval_days` are in original units; the model normalizer maps them.
CrRun run_cr(const Autoencoder& model, const DayMatrix& eval_days, double cr, CorruptionMode mode,
             std::uint64_t mask_seed = kEvaluationMaskSeed);

struct EvaluationRow {
  std::string method;
  double cr = 0.0;
  double horizon_h = 0.0;
  double rmse = 0.0;
  double nrmse = 0.0;
  double sat = 0.0;     // NaN for polynomial baselines
  bool average = false;
};

struct EvaluationReport {
  Variable variable = Variable::temperature;
  CorruptionMode mode = CorruptionMode::reconstruction;
  double iqr = 0.0;  // of the observed evaluation set
  std::vector<EvaluationRow> rows;

  std::vector<EvaluationRow> method_rows(const std::string& method) const;
  const EvaluationRow& average(const std::string& method) const;
};

struct EvaluationOptions {
  std::vector<double> cr_grid = default_eval_crs();
  std::vector<int> baseline_degrees{1, 2, 3};
  std::string model_name = "DAE";
  std::uint64_t mask_seed = kEvaluationMaskSeed;
};

// Masks every evaluation day per CR, reconstructs with the model and with
// each polynomial baseline on the same masks, and reports pooled RMSE,
// NRMSE and SAT per CR plus an average row per method.
EvaluationReport evaluate_reconstruction(const Autoencoder& model, const DayMatrix& eval_days,
                                         const EvaluationOptions& options = {});

// Trailing masks; the horizon column is mask_length(cr) / 2 hours.
// Polynomial baselines extrapolate for the degrees listed in `options`.
EvaluationReport evaluate_forecast(const Autoencoder& model, const DayMatrix& eval_days,
                                   const EvaluationOptions& options);

void write_report_csv(std::ostream& out, const EvaluationReport& report);
std::string report_to_json(const EvaluationReport& report);

}  // namespace gapfill
