#include "gapfill/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "gapfill/csv_io.hpp"
#include "gapfill/errors.hpp"

namespace gapfill {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "sgd_momentum" || text == "sgd") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (patience < 1) throw ConfigError("patience must be at least 1");
  mask_length(train_cr);
}

LossResult mse_loss(const Tensor& reconstruction, const Tensor& target) {
  if (reconstruction.shape() != target.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + shape_string(reconstruction.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  if (target.empty()) throw ShapeError("mse_loss of empty tensors");
  const double m = static_cast<double>(target.size());
  LossResult res{0.0, Tensor(target.shape())};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = reconstruction[i] - target[i];
    res.loss += d * d;
    res.grad[i] = 2.0 * d / m;
  }
  res.loss /= m;
  return res;
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_momentum_step: mismatched sizes");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, std::uint64_t step, const AdamHyper& hyper) {
  if (step < 1) throw ContractError("adam_step: step counter starts at 1");
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw ShapeError("adam_step: mismatched sizes");
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grads[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(Autoencoder& model, const ModelGradients& grads) {
  auto& layers = model.layers();
  if (grads.size() != layers.size()) throw ContractError("gradients do not match the model");
  if (first_.empty()) {
    first_.resize(layers.size());
    second_.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (const auto& t : layers[i].params.tensors) {
        first_[i].emplace_back(t.size(), 0.0);
        if (kind_ == OptimizerKind::adam) second_[i].emplace_back(t.size(), 0.0);
      }
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& p = layers[i].params;
    if (p.size() == 0) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!p.trainable[j]) continue;
      auto values = p.tensors[j].values();
      const auto g = grads[i][j].values();
      if (kind_ == OptimizerKind::adam) {
        adam_step(values, g, first_[i][j], second_[i][j], lr_, steps_);
      } else {
        sgd_momentum_step(values, g, first_[i][j], lr_);
      }
    }
    ++p.version;
  }
}

std::vector<std::vector<Tensor>> snapshot_parameters(const Autoencoder& model) {
  std::vector<std::vector<Tensor>> snap;
  for (const auto& l : model.layers()) snap.push_back(l.params.tensors);
  return snap;
}

void restore_parameters(Autoencoder& model, const std::vector<std::vector<Tensor>>& snapshot) {
  auto& layers = model.layers();
  if (snapshot.size() != layers.size()) throw ContractError("snapshot does not match the model");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].params.tensors = snapshot[i];
    ++layers[i].params.version;
  }
}

namespace {

struct CorruptedSet {
  Tensor inputs;
  Tensor targets;
};

CorruptedSet corrupt_fixed(const DayMatrix& days, double cr, std::uint64_t mask_seed,
                           bool random_length = false) {
  const std::size_t n = days.rows();
  CorruptedSet set{Tensor({n, kBinsPerDay}), days.values()};
  for (std::size_t i = 0; i < n; ++i) {
    const auto masked = corrupt(days.row(i), {CorruptionMode::reconstruction, cr,
                                               fixed_mask_seed(mask_seed, i, cr), random_length});
    std::copy(masked.corrupted.begin(), masked.corrupted.end(), set.inputs.data() + i * kBinsPerDay);
  }
  return set;
}

// Batch boundaries; a trailing single sample joins the previous batch so
// that batchnorm never sees a batch of one.
std::vector<std::size_t> batch_bounds(std::size_t n, std::size_t batch) {
  std::vector<std::size_t> bounds{0};
  for (std::size_t s = batch; s < n; s += batch) bounds.push_back(s);
  bounds.push_back(n);
  if (bounds.size() > 2 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] < 2) {
    bounds.erase(bounds.end() - 2);
  }
  return bounds;
}

void check_finite(double loss, std::size_t epoch, const char* where) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string("non-finite ") + where + " loss at epoch " +
                          std::to_string(epoch) + "; lower the learning rate");
  }
}

}  // namespace

double corrupted_mse(const Autoencoder& model, const DayMatrix& days, double cr, std::uint64_t mask_seed) {
  if (days.empty()) throw InsufficientDataError("no days to score");
  const auto set = corrupt_fixed(days, cr, mask_seed);
  return mse_loss(model.reconstruct_batch(set.inputs), set.targets).loss;
}

void recalibrate_batchnorm(Autoencoder& model, const DayMatrix& days, double cr, std::uint64_t mask_seed,
                           bool random_length) {
  auto& layers = model.layers();
  const bool has_bn = std::any_of(layers.begin(), layers.end(),
                                  [](const ModelLayer& l) { return l.spec.kind == LayerKind::batchnorm; });
  if (!has_bn || days.empty()) return;
  // Same input layout as Autoencoder::forward: [N, 48] or [N, 48, 1].
  Tensor x = corrupt_fixed(days, cr, mask_seed, random_length).inputs;
  if (model.spec().arch != Architecture::feed_forward) x.reshape({days.rows(), kBinsPerDay, 1});
  for (auto& layer : layers) {
    if (layer.spec.kind == LayerKind::batchnorm) {
      const std::size_t f = x.last_dim(), rows = x.leading_size();
      Tensor& mean = layer.params.get("running_mean");
      Tensor& var = layer.params.get("running_var");
      mean.fill(0.0);
      var.fill(0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < f; ++j) mean[j] += x[r * f + j];
      for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < f; ++j) {
          const double d = x[r * f + j] - mean[j];
          var[j] += d * d;
        }
      for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(rows);
    }
    x = forward(layer.spec, layer.params, x, Mode::infer).output;
  }
}

double training_loss(const Autoencoder& model, const DayMatrix& days, double cr, std::uint64_t seed) {
  return corrupted_mse(model, days, cr, seed);
}

TrainHistory train(Autoencoder& model, const DayMatrix& train_days, const DayMatrix& val_days,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainHistory history;
  if (cfg.max_epochs == 0) return history;
  if (train_days.empty()) throw InsufficientDataError("training set is empty");
  if (val_days.empty()) throw InsufficientDataError("validation set is empty");
  const std::size_t n = train_days.rows();
  if (cfg.batch_size > n) {
    throw InsufficientDataError("batch size " + std::to_string(cfg.batch_size) + " exceeds the " +
                                std::to_string(n) + " training days");
  }
  if (n < 2) throw InsufficientDataError("training needs at least 2 days");

  Rng rng(mix_seed(cfg.seed, 0x747261696eULL));
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  const auto val_set = corrupt_fixed(val_days, cfg.train_cr, kValidationMaskSeed);
  const auto bounds = batch_bounds(n, cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  auto best_params = snapshot_parameters(model);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const std::size_t len = bounds[b + 1] - bounds[b];
      Tensor inputs({len, kBinsPerDay}), targets({len, kBinsPerDay});
      for (std::size_t k = 0; k < len; ++k) {
        const auto day = train_days.row(order[bounds[b] + k]);
        const auto masked = corrupt(day, {CorruptionMode::reconstruction, cfg.train_cr, rng.next_u64(),
                                            cfg.random_gap_length});
        std::copy(masked.corrupted.begin(), masked.corrupted.end(), inputs.data() + k * kBinsPerDay);
        std::copy(day.begin(), day.end(), targets.data() + k * kBinsPerDay);
      }
      const auto pass = model.forward(inputs, Mode::train);
      const auto loss = mse_loss(pass.output, targets);
      check_finite(loss.loss, epoch, "training");
      optimizer.step(model, model.backward(pass, loss.grad));
      epoch_loss += loss.loss * static_cast<double>(len);
    }
    epoch_loss /= static_cast<double>(n);
    if (cfg.recalibrate_batchnorm) {
      recalibrate_batchnorm(model, train_days, cfg.train_cr, mix_seed(cfg.seed, 0x626eULL, epoch),
                            cfg.random_gap_length);
    }
    const double val = mse_loss(model.reconstruct_batch(val_set.inputs), val_set.targets).loss;
    check_finite(val, epoch, "validation");

    history.train_loss.push_back(epoch_loss);
    history.val_loss.push_back(val);
    history.stopped_epoch = epoch;
    const bool improved = val < best;
    if (improved) {
      best = val;
      history.best_epoch = epoch;
      best_params = snapshot_parameters(model);
    }
    if (on_epoch) on_epoch({epoch, epoch_loss, val, improved, &model});
    if (epoch - history.best_epoch >= cfg.patience) break;
  }
  restore_parameters(model, best_params);
  return history;
}

// ---- layerwise pretraining ---------------------------------------------------

namespace {

// Runs a plain layer stack; the stack is trained with its own optimizer state.
struct Stack {
  std::vector<ModelLayer> layers;
  std::vector<std::vector<std::vector<double>>> m, v;
  std::uint64_t steps = 0;

  Tensor run(Tensor x, Mode mode, std::vector<ActivationRecord>* records) {
    for (auto& l : layers) {
      auto res = forward(l.spec, l.params, x, mode);
      x = std::move(res.output);
      if (records) records->push_back(std::move(res.record));
    }
    return x;
  }

  double train_batch(const Tensor& input, const Tensor& target, OptimizerKind kind, double lr) {
    std::vector<ActivationRecord> records;
    const Tensor out = run(input, Mode::train, &records);
    const auto loss = mse_loss(out, target);
    if (m.empty()) {
      m.resize(layers.size());
      v.resize(layers.size());
      for (std::size_t i = 0; i < layers.size(); ++i)
        for (const auto& t : layers[i].params.tensors) {
          m[i].emplace_back(t.size(), 0.0);
          v[i].emplace_back(t.size(), 0.0);
        }
    }
    ++steps;
    Tensor g = loss.grad;
    for (std::size_t i = layers.size(); i-- > 0;) {
      auto res = backward(layers[i].spec, layers[i].params, records[i], g);
      g = std::move(res.grad_input);
      auto& p = layers[i].params;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (!p.trainable[j]) continue;
        if (kind == OptimizerKind::adam) {
          adam_step(p.tensors[j].values(), res.grad_params[j].values(), m[i][j], v[i][j], lr, steps);
        } else {
          sgd_momentum_step(p.tensors[j].values(), res.grad_params[j].values(), m[i][j], lr);
        }
      }
      ++p.version;
    }
    return loss.loss;
  }
};

// Splits a feed-forward model into blocks that start at each dense layer.
std::vector<std::pair<std::size_t, std::size_t>> dense_blocks(const Autoencoder& model) {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.kind == LayerKind::dense) blocks.emplace_back(i, i + 1);
    else if (!blocks.empty()) blocks.back().second = i + 1;
  }
  return blocks;
}

}  // namespace

std::vector<double> pretrain_layerwise(Autoencoder& model, const DayMatrix& train_days,
                                       const TrainConfig& cfg) {
  cfg.validate();
  if (model.spec().arch != Architecture::feed_forward) {
    throw ConfigError("layerwise pretraining is implemented for feed-forward autoencoders");
  }
  if (train_days.rows() < 2) throw InsufficientDataError("pretraining needs at least 2 days");
  const auto blocks = dense_blocks(model);
  const std::size_t levels = model.spec().units.size();
  // blocks: encoder 0..n-1, decoder n..2n-2 (mirrored), head 2n-1.
  auto& layers = model.layers();
  Rng rng(mix_seed(cfg.seed, 0x7072657472ULL));
  std::vector<double> final_losses;
  Tensor clean_rep = train_days.values();  // representation fed to level k

  for (std::size_t k = 0; k < levels; ++k) {
    const auto enc = blocks[k];
    const auto dec = blocks[2 * levels - 1 - k];
    Stack stack;
    for (std::size_t i = enc.first; i < enc.second; ++i) stack.layers.push_back(layers[i]);
    for (std::size_t i = dec.first; i < dec.second; ++i) stack.layers.push_back(layers[i]);

    const std::size_t n = clean_rep.dim(0), width = clean_rep.dim(1);
    const auto bounds = batch_bounds(n, std::min(cfg.batch_size, n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    double last = 0.0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
        const std::size_t len = bounds[b + 1] - bounds[b];
        Tensor in({len, width}), target({len, width});
        for (std::size_t r = 0; r < len; ++r) {
          const double* src = clean_rep.data() + order[bounds[b] + r] * width;
          std::copy_n(src, width, target.data() + r * width);
          std::copy_n(src, width, in.data() + r * width);
          if (k == 0) {
            const auto masked = corrupt({src, width}, {CorruptionMode::reconstruction, cfg.train_cr,
                                                         rng.next_u64(), cfg.random_gap_length});
            std::copy(masked.corrupted.begin(), masked.corrupted.end(), in.data() + r * width);
          } else {
            // Masking noise on the learned representation.
            for (std::size_t j = 0; j < width; ++j)
              if (rng.next_double() < cfg.train_cr) in[r * width + j] = 0.0;
          }
        }
        const double loss = stack.train_batch(in, target, cfg.optimizer, cfg.learning_rate);
        check_finite(loss, epoch, "pretraining");
        total += loss * static_cast<double>(len);
      }
      last = total / static_cast<double>(n);
    }
    final_losses.push_back(last);

    std::size_t s = 0;
    for (std::size_t i = enc.first; i < enc.second; ++i) layers[i] = stack.layers[s++];
    for (std::size_t i = dec.first; i < dec.second; ++i) layers[i] = stack.layers[s++];
    for (std::size_t i = 0; i < layers.size(); ++i) ++layers[i].params.version;

    Stack encoder;
    for (std::size_t i = enc.first; i < enc.second; ++i) encoder.layers.push_back(layers[i]);
    clean_rep = encoder.run(clean_rep, Mode::infer, nullptr);
  }
  return final_losses;
}

// ---- grid search -------------------------------------------------------------

AutoencoderSpec GridConfig::to_spec() const {
  return AutoencoderSpec::make(arch, layers, units, arch == Architecture::conv ? kernel : 3);
}

TrainConfig GridConfig::to_train_config(const TrainConfig& base) const {
  TrainConfig cfg = base;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.optimizer = optimizer;
  return cfg;
}

std::string GridConfig::label() const {
  std::string s = to_string(arch) + "/L" + std::to_string(layers) + "/U" + std::to_string(units);
  if (arch == Architecture::conv) s += "/K" + std::to_string(kernel);
  s += "/lr" + format_double(learning_rate) + "/" + to_string(optimizer) + "/B" + std::to_string(batch_size);
  return s;
}

std::vector<GridConfig> expand_grid(const GridMenus& menus, Architecture arch) {
  std::vector<GridConfig> grid;
  const std::vector<std::size_t> kernels =
      arch == Architecture::conv ? menus.kernels : std::vector<std::size_t>{0};
  for (std::size_t layers : menus.layers)
    for (std::size_t units : menus.units)
      for (std::size_t kernel : kernels)
        for (double lr : menus.learning_rates)
          for (OptimizerKind opt : menus.optimizers)
            grid.push_back({arch, layers, units, kernel, lr, opt, menus.batch_size});
  return grid;
}

std::vector<double> default_score_crs() { return {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}; }

double validation_score(const Autoencoder& model, const DayMatrix& val_days,
                        std::span<const double> cr_grid) {
  if (cr_grid.empty()) throw ConfigError("empty CR grid");
  double total = 0.0;
  for (double cr : cr_grid) total += corrupted_mse(model, val_days, cr);
  return total / static_cast<double>(cr_grid.size());
}

namespace {

std::uint64_t config_seed(std::uint64_t base, const GridConfig& c) {
  const std::string label = c.label();
  return mix_seed(base, fnv1a64({reinterpret_cast<const unsigned char*>(label.data()), label.size()}));
}

struct Trial {
  double score = std::numeric_limits<double>::infinity();
  std::size_t epochs = 0;
  std::optional<Autoencoder> model;
};

Trial run_trial(const GridConfig& c, std::uint64_t seed, const DayMatrix& train_days,
                const DayMatrix& val_days, const GridSearchOptions& options, bool keep_model) {
  Trial t;
  try {
    Rng rng(mix_seed(seed, 0x6275696c64ULL));
    Autoencoder model = Autoencoder::build(c.to_spec(), rng);
    TrainConfig cfg = c.to_train_config(options.base);
    cfg.seed = seed;
    const auto hist = train(model, train_days, val_days, cfg);
    t.epochs = hist.stopped_epoch;
    const double score = validation_score(model, val_days, options.cr_grid);
    t.score = std::isfinite(score) ? score : std::numeric_limits<double>::infinity();
    if (keep_model) t.model = std::move(model);
  } catch (const DivergenceError&) {
    t.score = std::numeric_limits<double>::infinity();
  }
  return t;
}

}  // namespace

GridSearchOutcome grid_search(const std::vector<GridConfig>& grid, const DayMatrix& train_days,
                              const DayMatrix& val_days, const GridSearchOptions& options) {
  if (grid.empty()) throw ConfigError("grid search needs at least one configuration");
  std::vector<GridResult> results(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      try {
        const auto trial = run_trial(grid[i], config_seed(options.base.seed, grid[i]), train_days,
                                     val_days, options, false);
        results[i] = {grid[i], trial.score, 0, trial.epochs};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, grid.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.config < b.config;
  });
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = i + 1;

  GridSearchOutcome outcome;
  outcome.ranked = results;
  const GridConfig& top = results.front().config;
  if (!std::isfinite(results.front().score)) return outcome;
  const std::uint64_t top_seed = config_seed(options.base.seed, top);
  auto best = run_trial(top, top_seed, train_days, val_days, options, true);
  for (std::size_t r = 0; r < options.reruns; ++r) {
    auto trial = run_trial(top, mix_seed(top_seed, r + 1), train_days, val_days, options, true);
    if (trial.score < best.score) best = std::move(trial);
  }
  outcome.best_model = std::move(best.model);
  outcome.best_model_score = best.score;
  return outcome;
}

void write_grid_csv(std::ostream& out, const std::vector<GridResult>& results) {
  out << "rank,arch,layers,units,kernel,learning_rate,optimizer,batch_size,epochs,score\n";
  for (const auto& r : results) {
    const auto& c = r.config;
    out << r.rank << ',' << to_string(c.arch) << ',' << c.layers << ',' << c.units << ','
        << c.kernel << ',' << format_double(c.learning_rate) << ',' << to_string(c.optimizer) << ','
        << c.batch_size << ',' << r.epochs << ','
        << (std::isfinite(r.score) ? format_double(r.score) : std::string("inf")) << '\n';
  }
}

}  // namespace gapfill
