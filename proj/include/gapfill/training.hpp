#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/models.hpp"
#include "gapfill/preprocess.hpp"

namespace gapfill {

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double train_cr = 0.5;
  std::uint64_t seed = 0;
  // Each training sample gets a gap of random length whose mean is
  // mask_length(train_cr) (see random_mask_length); false fixes every
  // gap at exactly mask_length(train_cr).
  bool random_gap_length = true;
  // Re-estimate batchnorm running statistics over the whole training set at
  // the end of every epoch (see recalibrate_batchnorm).
  bool recalibrate_batchnorm = true;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t stopped_epoch = 0;  // epochs actually run
  std::size_t best_epoch = 0;     // 1-based; 0 when no epoch ran

  bool operator==(const TrainHistory&) const = default;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

// Mean over every element of (reconstruction - target)^2 with its gradient.
LossResult mse_loss(const Tensor& reconstruction, const Tensor& target);

inline constexpr double kSgdMomentum = 0.9;

// v <- momentum * v - lr * g;  w <- w + v
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum = kSgdMomentum);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, std::uint64_t step, const AdamHyper& hyper = {});

// Holds per-tensor optimizer state for one model.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  void step(Autoencoder& model, const ModelGradients& grads);
  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<std::vector<double>>> first_;
  std::vector<std::vector<std::vector<double>>> second_;
};

// Parameter snapshot used to restore the best epoch.
std::vector<std::vector<Tensor>> snapshot_parameters(const Autoencoder& model);
void restore_parameters(Autoencoder& model, const std::vector<std::vector<Tensor>>& snapshot);

// Seed for fixed validation masks; independent of the training seed so that
// different configurations are scored on identical corruptions.
inline constexpr std::uint64_t kValidationMaskSeed = 0x76616c6964617465ULL;

// MSE of full reconstructions of fixed-mask corrupted days against the clean
// days, all in normalized space.
double corrupted_mse(const Autoencoder& model, const DayMatrix& days, double cr,
                     std::uint64_t mask_seed = kValidationMaskSeed);

// Sets every batchnorm layer's running mean/variance to the population
// statistics of its input over `days` corrupted with fixed masks at `cr`,
// propagating layer by layer in infer mode. With few batches per epoch the
// exponential running average lags far behind the weights; this makes
// infer-mode outputs match the trained network. No-op without batchnorm.
void recalibrate_batchnorm(Autoencoder& model, const DayMatrix& days, double cr, std::uint64_t mask_seed,
                           bool random_length = false);

struct EpochEvent {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool improved = false;
  const Autoencoder* model = nullptr;
};

using EpochCallback = std::function<void(const EpochEvent&)>;

/// Minibatch training of a denoising autoencoder.
///
/// Every epoch shuffles the training days, corrupts each sample with a fresh
/// contiguous gap (random length with mean mask_length(cfg.train_cr) unless
/// cfg.random_gap_length is off), and minimizes the MSE against the clean
/// day. Validation uses fixed per-day masks. Training stops once the
/// validation loss has not improved for `patience` epochs; the parameters of
/// the best epoch are restored before returning. Throws DivergenceError on a
/// non-finite loss.
TrainHistory train(Autoencoder& model, const DayMatrix& train_days, const DayMatrix& val_days,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Greedy layerwise pretraining of a feed-forward autoencoder: encoder level
// k is trained as a one-layer denoising autoencoder on the (corrupted)
// output of the already trained levels, and its temporary decoder becomes
// the mirrored decoder layer. Returns the final training loss per level.
std::vector<double> pretrain_layerwise(Autoencoder& model, const DayMatrix& train_days,
                                       const TrainConfig& cfg);

// Mean MSE over a set of training-style corrupted batches; used to compare
// starting points.
double training_loss(const Autoencoder& model, const DayMatrix& days, double cr, std::uint64_t seed);

// ---- grid search -----------------------------------------------------------

struct GridMenus {
  std::vector<std::size_t> layers{1, 2, 3};
  std::vector<std::size_t> units{8, 16, 32, 64, 128};
  std::vector<std::size_t> kernels{2, 3, 5, 7, 11};
  std::vector<double> learning_rates{0.001, 0.01, 0.1};
  std::vector<OptimizerKind> optimizers{OptimizerKind::sgd_momentum, OptimizerKind::adam};
  std::size_t batch_size = 128;
};

struct GridConfig {
  Architecture arch = Architecture::feed_forward;
  std::size_t layers = 1;
  std::size_t units = 8;
  std::size_t kernel = 0;  // 0 for non-conv architectures
  double learning_rate = 0.001;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  std::size_t batch_size = 128;

  AutoencoderSpec to_spec() const;
  TrainConfig to_train_config(const TrainConfig& base) const;
  std::string label() const;

  auto operator<=>(const GridConfig&) const = default;
};

std::vector<GridConfig> expand_grid(const GridMenus& menus, Architecture arch);

struct GridResult {
  GridConfig config;
  double score = 0.0;  // mean validation MSE over the CR grid; +inf on failure
  std::size_t rank = 0;
  std::size_t epochs = 0;
};

std::vector<double> default_score_crs();  // 0.2 .. 0.8 step 0.1

struct GridSearchOptions {
  TrainConfig base;  // epochs, patience, train_cr, seed
  std::vector<double> cr_grid = default_score_crs();
  std::size_t reruns = 0;
  std::size_t workers = 1;
};

struct GridSearchOutcome {
  std::vector<GridResult> ranked;
  std::optional<Autoencoder> best_model;
  double best_model_score = 0.0;
};

double validation_score(const Autoencoder& model, const DayMatrix& val_days,
                        std::span<const double> cr_grid);

/// Trains every configuration (in parallel across `workers`), scores it on
/// the validation CR grid and ranks by (score, configuration order). Each
/// configuration derives its seed from its own content, so results do not
/// depend on worker count or grid composition. With reruns > 0 the winner is
/// retrained with fresh seeds and the lowest-scoring instance is kept.
GridSearchOutcome grid_search(const std::vector<GridConfig>& grid, const DayMatrix& train_days,
                              const DayMatrix& val_days, const GridSearchOptions& options);

void write_grid_csv(std::ostream& out, const std::vector<GridResult>& results);

}  // namespace gapfill
