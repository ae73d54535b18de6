#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "gapfill/errors.hpp"
#include "gapfill/training.hpp"

using namespace gapfill;

namespace {

// Smooth daily curves with random phase and amplitude, roughly standardized.
DayMatrix sinusoid_days(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DayMatrix dm;
  for (std::size_t d = 0; d < n; ++d) {
    const double amp = rng.uniform(0.8, 1.4), phase = rng.uniform(-0.5, 0.5), level = rng.normal(0, 0.2);
    std::vector<double> v(kBinsPerDay);
    for (std::size_t i = 0; i < kBinsPerDay; ++i)
      v[i] = level + amp * std::sin(2 * std::numbers::pi * static_cast<double>(i) / 48.0 + phase);
    dm.append({"r", static_cast<std::int64_t>(d)}, v);
  }
  return dm;
}

Autoencoder small_model(Architecture arch, std::size_t layers, std::size_t units, std::uint64_t seed,
                        BatchNormPlacement bn = BatchNormPlacement::decoder_only) {
  auto spec = AutoencoderSpec::make(arch, layers, units, 3);
  spec.batchnorm = bn;
  Rng rng(seed);
  return Autoencoder::build(spec, rng);
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = epochs;
  cfg.patience = std::max<std::size_t>(epochs, 1);
  cfg.seed = 11;
  return cfg;
}

Tensor probe_inputs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, kBinsPerDay});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

}  // namespace

TEST(MseLoss, HandExample) {
  const auto r = mse_loss(Tensor({1, 2}, {1.0, 2.0}), Tensor({1, 2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(r.loss, 2.5);
  EXPECT_DOUBLE_EQ(r.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(r.grad[1], 2.0);
}

TEST(MseLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Tensor a({3, 5}), b({3, 5});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  const auto r = mse_loss(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    Tensor p = a, m = a;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    const double fd = (mse_loss(p, b).loss - mse_loss(m, b).loss) / 2e-5;
    EXPECT_NEAR(r.grad[i], fd, 1e-8);
  }
}

TEST(MseLoss, ShapeErrors) {
  EXPECT_THROW(mse_loss(Tensor({2}), Tensor({3})), ShapeError);
}

TEST(SgdMomentum, TwoStepsByHand) {
  std::vector<double> w{1.0}, g{1.0}, v{0.0};
  sgd_momentum_step(w, g, v, 0.1);
  EXPECT_DOUBLE_EQ(w[0], 0.9);
  sgd_momentum_step(w, g, v, 0.1);
  EXPECT_NEAR(w[0], 1.0 - 0.29, 1e-15);
  EXPECT_NEAR(v[0], -0.19, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g0 : {1e-3, 0.5, -40.0}) {
    std::vector<double> w{2.0}, g{g0}, m{0.0}, v{0.0};
    adam_step(w, g, m, v, 0.001, 1);
    EXPECT_NEAR(w[0] - 2.0, -0.001 * (g0 > 0 ? 1 : -1), 1e-7) << g0;
  }
  std::vector<double> w{0.0}, g{1.0}, m{0.0}, v{0.0};
  EXPECT_THROW(adam_step(w, g, m, v, 0.001, 0), ContractError);
}

TEST(Adam, MinimizesConvexQuadratic) {
  std::vector<double> w{5.0, -3.0, 0.5}, m(3, 0.0), v(3, 0.0);
  const std::vector<double> target{1.0, 2.0, -1.0};
  for (std::uint64_t t = 1; t <= 3000; ++t) {
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * (w[i] - target[i]);
    adam_step(w, g, m, v, 0.05, t);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w[i], target[i], 1e-3);
}

TEST(SgdMomentum, MinimizesConvexQuadratic) {
  std::vector<double> w{5.0, -3.0}, v(2, 0.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> g{2 * (w[0] - 1.0), 2 * (w[1] + 2.0)};
    sgd_momentum_step(w, g, v, 0.01);
  }
  EXPECT_NEAR(w[0], 1.0, 1e-6);
  EXPECT_NEAR(w[1], -2.0, 1e-6);
}

TEST(ParseOptimizer, Names) {
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::adam);
  EXPECT_EQ(parse_optimizer("sgd_momentum"), OptimizerKind::sgd_momentum);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(TrainConfigValidate, RejectsBadValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.train_cr = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroEpochsLeavesModelUntouched) {
  auto model = small_model(Architecture::feed_forward, 2, 16, 1);
  const auto before = model;
  const auto days = sinusoid_days(20, 1);
  const auto hist = train(model, days, days, quick_config(0));
  EXPECT_TRUE(hist.train_loss.empty());
  EXPECT_EQ(hist.stopped_epoch, 0u);
  EXPECT_TRUE(same_parameters(model, before));
}

TEST(Train, DataSizeErrors) {
  auto model = small_model(Architecture::feed_forward, 1, 8, 1);
  const auto days = sinusoid_days(10, 1);
  EXPECT_THROW(train(model, days, days, quick_config(2)), InsufficientDataError);  // batch 16 > 10
  EXPECT_THROW(train(model, DayMatrix{}, days, quick_config(2)), InsufficientDataError);
}

TEST(Train, LearnsSinusoidsForEveryArchitecture) {
  const auto train_days = sinusoid_days(64, 2), val_days = sinusoid_days(16, 3);
  for (auto arch : {Architecture::feed_forward, Architecture::conv, Architecture::lstm}) {
    auto model = small_model(arch, 1, 16, 5, arch == Architecture::lstm ? BatchNormPlacement::none
                                                                        : BatchNormPlacement::decoder_only);
    const double before = corrupted_mse(model, val_days, 0.5);
    auto cfg = quick_config(arch == Architecture::lstm ? 15 : 40);
    const auto hist = train(model, train_days, val_days, cfg);
    const double after = corrupted_mse(model, val_days, 0.5);
    EXPECT_LT(after, 0.5 * before) << to_string(arch);
    EXPECT_DOUBLE_EQ(after, hist.val_loss[hist.best_epoch - 1]) << to_string(arch);
  }
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto days = sinusoid_days(40, 4);
  auto a = small_model(Architecture::feed_forward, 2, 16, 9);
  auto b = small_model(Architecture::feed_forward, 2, 16, 9);
  const auto ha = train(a, days, days, quick_config(5));
  const auto hb = train(b, days, days, quick_config(5));
  EXPECT_EQ(ha, hb);
  EXPECT_TRUE(same_parameters(a, b));
  auto c = small_model(Architecture::feed_forward, 2, 16, 9);
  auto other = quick_config(5);
  other.seed = 12;
  train(c, days, days, other);
  EXPECT_FALSE(same_parameters(a, c));
}

TEST(Train, TrailingSingleSampleJoinsPreviousBatch) {
  // 17 days with batch 16 would leave a batch of one, which batchnorm rejects.
  auto model = small_model(Architecture::feed_forward, 2, 8, 3);
  const auto days = sinusoid_days(17, 5);
  EXPECT_NO_THROW(train(model, days, days, quick_config(2)));
}

TEST(EarlyStopping, FlatValidationStopsAtBestPlusPatience) {
  // Learning rate 0 without batchnorm keeps the validation loss constant,
  // so only the first epoch counts as an improvement.
  auto model = small_model(Architecture::feed_forward, 2, 16, 7, BatchNormPlacement::none);
  const auto before = model;
  const auto days = sinusoid_days(32, 6);
  auto cfg = quick_config(50);
  cfg.learning_rate = 0.0;
  cfg.patience = 2;
  const auto hist = train(model, days, days, cfg);
  EXPECT_EQ(hist.best_epoch, 1u);
  EXPECT_EQ(hist.stopped_epoch, 3u);
  EXPECT_EQ(hist.val_loss.size(), 3u);
  EXPECT_TRUE(same_parameters(model, before));
}

TEST(EarlyStopping, RestoresBestEpochWeightsBitExactly) {
  const auto train_days = sinusoid_days(48, 7), val_days = sinusoid_days(8, 8);
  auto model = small_model(Architecture::feed_forward, 2, 32, 8);
  auto cfg = quick_config(60);
  cfg.learning_rate = 0.05;  // noisy enough that the last epoch is rarely the best
  cfg.patience = 4;
  const Tensor probe = probe_inputs(10, 1);
  Tensor best_output;
  const auto hist = train(model, train_days, val_days, cfg, [&](const EpochEvent& e) {
    if (e.improved) best_output = e.model->reconstruct_batch(probe);
  });
  ASSERT_GE(hist.best_epoch, 1u);
  EXPECT_LE(hist.stopped_epoch, hist.best_epoch + cfg.patience);
  if (hist.stopped_epoch < cfg.max_epochs) EXPECT_EQ(hist.stopped_epoch, hist.best_epoch + cfg.patience);
  const Tensor restored = model.reconstruct_batch(probe);
  EXPECT_EQ(restored, best_output);
  for (std::size_t e = hist.best_epoch; e < hist.val_loss.size(); ++e)
    EXPECT_GE(hist.val_loss[e], hist.val_loss[hist.best_epoch - 1]);
}

TEST(Train, DivergenceIsReported) {
  auto model = small_model(Architecture::feed_forward, 1, 8, 1, BatchNormPlacement::none);
  const auto days = sinusoid_days(32, 9);
  auto cfg = quick_config(50);
  cfg.optimizer = OptimizerKind::sgd_momentum;
  cfg.learning_rate = 1e150;
  EXPECT_THROW(train(model, days, days, cfg), DivergenceError);
}

TEST(RecalibrateBatchnorm, InferenceMatchesFullBatchTraining) {
  const auto days = sinusoid_days(30, 10);
  for (auto arch : {Architecture::feed_forward, Architecture::conv}) {
    auto model = small_model(arch, 2, 8, 4, BatchNormPlacement::every_layer);
    train(model, days, days, quick_config(2));
    recalibrate_batchnorm(model, days, 0.5, 77);
    // Corrupted inputs with the same fixed masks used for recalibration.
    Tensor inputs({days.rows(), kBinsPerDay});
    for (std::size_t i = 0; i < days.rows(); ++i) {
      const auto m = corrupt(days.row(i), {CorruptionMode::reconstruction, 0.5, fixed_mask_seed(77, i, 0.5)});
      std::copy(m.corrupted.begin(), m.corrupted.end(), inputs.data() + i * kBinsPerDay);
    }
    auto scratch = model;
    const Tensor batch_stats = scratch.forward(inputs, Mode::train).output;
    const Tensor running = model.infer(inputs).output;
    for (std::size_t i = 0; i < running.size(); ++i) EXPECT_NEAR(running[i], batch_stats[i], 1e-9);
  }
}

TEST(Pretraining, LowersLossOfFreshModel) {
  const auto days = sinusoid_days(64, 11);
  auto fresh = small_model(Architecture::feed_forward, 2, 32, 12);
  auto model = fresh;
  auto cfg = quick_config(20);
  const auto losses = pretrain_layerwise(model, days, cfg);
  ASSERT_EQ(losses.size(), 2u);
  for (double l : losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(training_loss(model, days, 0.5, 3), training_loss(fresh, days, 0.5, 3));
  auto conv = small_model(Architecture::conv, 1, 8, 1);
  EXPECT_THROW(pretrain_layerwise(conv, days, cfg), ConfigError);
}

TEST(GridExpansion, MenuCounts) {
  const GridMenus menus;
  const auto ff = expand_grid(menus, Architecture::feed_forward);
  const auto conv = expand_grid(menus, Architecture::conv);
  const auto lstm = expand_grid(menus, Architecture::lstm);
  EXPECT_EQ(ff.size(), 90u);
  EXPECT_EQ(conv.size(), 450u);
  EXPECT_EQ(lstm.size(), 90u);
  EXPECT_EQ(3 * (ff.size() + conv.size() + lstm.size()), 1890u);
  std::set<GridConfig> unique(conv.begin(), conv.end());
  EXPECT_EQ(unique.size(), conv.size());
  for (const auto& c : ff) EXPECT_NO_THROW(c.to_spec().validate());
}

TEST(GridSearch, SingleConfigMatchesDirectScore) {
  const auto train_days = sinusoid_days(32, 13), val_days = sinusoid_days(8, 14);
  GridSearchOptions opt;
  opt.base = quick_config(3);
  const GridConfig c{Architecture::feed_forward, 1, 8, 0, 0.01, OptimizerKind::adam, 16};
  const auto out = grid_search({c}, train_days, val_days, opt);
  ASSERT_EQ(out.ranked.size(), 1u);
  EXPECT_EQ(out.ranked[0].rank, 1u);
  ASSERT_TRUE(out.best_model.has_value());
  EXPECT_DOUBLE_EQ(out.best_model_score, out.ranked[0].score);
  EXPECT_DOUBLE_EQ(validation_score(*out.best_model, val_days, opt.cr_grid), out.ranked[0].score);
}

TEST(GridSearch, DeterministicAndWorkerIndependent) {
  const auto train_days = sinusoid_days(32, 15), val_days = sinusoid_days(8, 16);
  GridMenus menus;
  menus.layers = {1};
  menus.units = {8, 16};
  menus.learning_rates = {0.0, 0.01};
  menus.batch_size = 16;
  const auto grid = expand_grid(menus, Architecture::feed_forward);
  ASSERT_EQ(grid.size(), 8u);
  GridSearchOptions opt;
  opt.base = quick_config(3);
  opt.reruns = 1;
  const auto one = grid_search(grid, train_days, val_days, opt);
  opt.workers = 3;
  const auto three = grid_search(grid, train_days, val_days, opt);
  ASSERT_EQ(one.ranked.size(), three.ranked.size());
  for (std::size_t i = 0; i < one.ranked.size(); ++i) {
    EXPECT_EQ(one.ranked[i].config, three.ranked[i].config);
    EXPECT_EQ(one.ranked[i].score, three.ranked[i].score);
    EXPECT_EQ(one.ranked[i].rank, i + 1);
    if (i > 0) EXPECT_LE(one.ranked[i - 1].score, one.ranked[i].score);
  }
  ASSERT_TRUE(one.best_model && three.best_model);
  EXPECT_TRUE(same_parameters(*one.best_model, *three.best_model));
  // Untrained (learning rate 0) configurations never beat trained ones.
  EXPECT_GT(one.ranked.front().config.learning_rate, 0.0);
  // A configuration's score does not depend on the rest of the grid.
  const auto alone = grid_search({one.ranked[3].config}, train_days, val_days, opt);
  EXPECT_EQ(alone.ranked[0].score, one.ranked[3].score);
  std::ostringstream a, b;
  write_grid_csv(a, one.ranked);
  write_grid_csv(b, three.ranked);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "rank,arch,layers,units,kernel,learning_rate,optimizer,batch_size,epochs,score");
}

TEST(GridSearch, DivergentConfigScoresInfinity) {
  const auto train_days = sinusoid_days(32, 17), val_days = sinusoid_days(8, 18);
  GridSearchOptions opt;
  opt.base = quick_config(3);
  const GridConfig ok{Architecture::feed_forward, 1, 8, 0, 0.01, OptimizerKind::adam, 16};
  GridConfig bad = ok;
  bad.optimizer = OptimizerKind::sgd_momentum;
  bad.learning_rate = 1e150;
  const auto out = grid_search({bad, ok}, train_days, val_days, opt);
  EXPECT_EQ(out.ranked[0].config, ok);
  EXPECT_TRUE(std::isinf(out.ranked[1].score));
  std::ostringstream csv;
  write_grid_csv(csv, out.ranked);
  EXPECT_NE(csv.str().find(",inf\n"), std::string::npos);
}

TEST(Train, CleanDayErrorBelowGapError) {
  const auto train_days = sinusoid_days(64, 19), val_days = sinusoid_days(16, 20);
  auto model = small_model(Architecture::feed_forward, 2, 32, 21);
  // Low training CR, as for per-sequence scoring: a model that only ever saw
  // half-masked days treats a clean day as out of distribution.
  auto cfg = quick_config(200);
  cfg.train_cr = 0.1;
  train(model, train_days, val_days, cfg);
  // Mean per-day RMSE on uncorrupted days against the pooled RMSE on the
  // masked bins of the same days.
  double per_day = 0, gap_se = 0;
  std::size_t gap_n = 0;
  for (std::size_t i = 0; i < val_days.rows(); ++i) {
    const auto day = val_days.row(i);
    const auto clean = model.reconstruct(day);
    double se = 0;
    for (std::size_t t = 0; t < kBinsPerDay; ++t) se += (clean[t] - day[t]) * (clean[t] - day[t]);
    per_day += std::sqrt(se / kBinsPerDay);
    const auto masked = corrupt(day, {CorruptionMode::reconstruction, 0.1, fixed_mask_seed(1, i, 0.1)});
    const auto rec = model.reconstruct(masked.corrupted);
    for (std::size_t t = 0; t < kBinsPerDay; ++t)
      if (masked.mask[t]) {
        gap_se += (rec[t] - day[t]) * (rec[t] - day[t]);
        ++gap_n;
      }
  }
  EXPECT_LT(per_day / static_cast<double>(val_days.rows()), std::sqrt(gap_se / static_cast<double>(gap_n)));
}

TEST(Train, UntrainedModelsGiveFiniteOutputOnZeroInput) {
  for (auto arch : {Architecture::feed_forward, Architecture::conv, Architecture::lstm}) {
    const auto model = small_model(arch, 3, 128, 22);
    const auto out = model.reconstruct(std::vector<double>(kBinsPerDay, 0.0));
    for (double v : out) EXPECT_TRUE(std::isfinite(v)) << to_string(arch);
  }
}
