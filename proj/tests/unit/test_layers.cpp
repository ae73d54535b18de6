#include <gtest/gtest.h>

#include <cmath>

#include "gapfill/errors.hpp"
#include "gapfill/layers.hpp"
#include "gradcheck.hpp"

using namespace gapfill;
using gapfill::testing::layer_gradient_error;
using gapfill::testing::random_params;

namespace {

constexpr double kGradTolerance = 1e-4;

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST(Init, GlorotBoundThreeByThreeIsOne) {
  EXPECT_DOUBLE_EQ(glorot_bound(3, 3), 1.0);
  Rng rng(1);
  const auto p = init_params(LayerSpec::dense(3, Activation::linear), 3, InitScheme::glorot_uniform, rng);
  EXPECT_LE(max_abs(p.get("weight")), 1.0);
}

TEST(Init, GlorotBoundEightByFour) {
  Rng rng(2);
  const auto p = init_params(LayerSpec::dense(4, Activation::linear), 8, InitScheme::glorot_uniform, rng);
  EXPECT_LE(max_abs(p.get("weight")), std::sqrt(6.0 / 12.0));
  EXPECT_NEAR(glorot_bound(8, 4), 0.7071, 1e-4);
}

TEST(Init, BiasesStartAtZeroForEveryKindAndScheme) {
  Rng rng(3);
  for (auto scheme : {InitScheme::glorot_uniform, InitScheme::classical_uniform}) {
    for (const auto& [spec, in] : std::vector<std::pair<LayerSpec, std::size_t>>{
             {LayerSpec::dense(5, Activation::relu), 4},
             {LayerSpec::conv(3, 5, 1, Activation::tanh), 2},
             {LayerSpec::lstm(4), 3}}) {
      const auto p = init_params(spec, in, scheme, rng);
      const auto& b = p.get("bias");
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (spec.kind == LayerKind::lstm && i >= 4 && i < 8) {
          EXPECT_EQ(b[i], kLstmForgetBias);  // forget gate block
        } else {
          EXPECT_EQ(b[i], 0.0);
        }
      }
    }
  }
}

TEST(Init, ClassicalUniformStaysInsideFixedBound) {
  Rng rng(4);
  const auto p = init_params(LayerSpec::dense(64, Activation::sigmoid), 48, InitScheme::classical_uniform, rng);
  EXPECT_LE(max_abs(p.get("weight")), kClassicalUniformBound);
}

TEST(Init, GlorotVarianceMatchesUniformTheory) {
  Rng rng(5);
  // 100 x 100 weights: bound sqrt(6/200), variance bound^2 / 3.
  const auto p = init_params(LayerSpec::dense(100, Activation::linear), 100, InitScheme::glorot_uniform, rng);
  const auto& w = p.get("weight");
  const double bound = std::sqrt(6.0 / 200.0);
  double s = 0, s2 = 0;
  for (double v : w.values()) {
    ASSERT_LE(std::abs(v), bound);
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var, bound * bound / 3.0, 0.2 * bound * bound / 3.0);
}

TEST(Init, BatchnormStartsAsIdentity) {
  Rng rng(6);
  const auto p = init_params(LayerSpec::batchnorm(), 3, InitScheme::glorot_uniform, rng);
  EXPECT_EQ(p.get("gamma"), Tensor::vector({1, 1, 1}));
  EXPECT_EQ(p.get("beta"), Tensor::vector({0, 0, 0}));
  EXPECT_EQ(p.get("running_mean"), Tensor::vector({0, 0, 0}));
  EXPECT_EQ(p.get("running_var"), Tensor::vector({1, 1, 1}));
}

TEST(Forward, DenseIdentityIsIdentity) {
  const auto spec = LayerSpec::dense(2, Activation::linear);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  p.get("weight") = Tensor::matrix({{1, 0}, {0, 1}});
  const auto x = Tensor::matrix({{0.3, -2}, {5, 7}});
  EXPECT_EQ(forward(spec, p, x, Mode::infer).output, x);
}

TEST(Forward, LstmWithZeroWeightsStaysAtZero) {
  const auto spec = LayerSpec::lstm(3);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  for (auto& t : p.tensors) t.fill(0.0);
  const auto res = forward(spec, p, uniform(rng, -5, 5, {2, 4, 2}), Mode::train);
  for (double v : res.output.values()) EXPECT_EQ(v, 0.0);
  for (double v : res.record.cell.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, BatchnormTrainNormalizesEachFeature) {
  const auto spec = LayerSpec::batchnorm();
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  const auto out = forward(spec, p, Tensor::matrix({{1, 10}, {2, 20}, {3, 30}}), Mode::train).output;
  for (std::size_t f = 0; f < 2; ++f) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 3; ++r) m += out.at(r, f) / 3;
    for (std::size_t r = 0; r < 3; ++r) v += (out.at(r, f) - m) * (out.at(r, f) - m) / 3;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-4);  // epsilon 1e-5 against variance 2/3 or 200/3
  }
}

TEST(Forward, BatchnormPropertyOnRandomBatches) {
  const auto spec = LayerSpec::batchnorm();
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 2 + rng.below(30), features = 1 + rng.below(5);
    auto p = init_params(spec, features, InitScheme::glorot_uniform, rng);
    const auto x = uniform(rng, -50, 50, {batch, features});
    const auto res = forward(spec, p, x, Mode::train);
    // x_hat is the normalized value before gamma/beta.
    const auto& xh = res.record.pre_activation;
    for (std::size_t f = 0; f < features; ++f) {
      double m = 0, v = 0, raw_m = 0, raw_v = 0;
      for (std::size_t r = 0; r < batch; ++r) raw_m += x.at(r, f) / batch;
      for (std::size_t r = 0; r < batch; ++r) raw_v += (x.at(r, f) - raw_m) * (x.at(r, f) - raw_m) / batch;
      for (std::size_t r = 0; r < batch; ++r) m += xh.at(r, f) / batch;
      for (std::size_t r = 0; r < batch; ++r) v += (xh.at(r, f) - m) * (xh.at(r, f) - m) / batch;
      EXPECT_LT(std::abs(m), 1e-9);
      // Exact variance after the epsilon: raw_v / (raw_v + eps).
      EXPECT_NEAR(v, raw_v / (raw_v + kBatchNormEpsilon), 1e-9);
      EXPECT_NEAR(v, 1.0, 1e-6 + kBatchNormEpsilon / raw_v);
    }
  }
}

TEST(Forward, BatchnormRunningStatisticsUpdate) {
  const auto spec = LayerSpec::batchnorm();
  Rng rng(1);
  auto p = init_params(spec, 1, InitScheme::glorot_uniform, rng);
  forward(spec, p, Tensor::matrix({{1}, {3}}), Mode::train);
  // batch mean 2, population variance 1
  EXPECT_NEAR(p.get("running_mean")[0], 0.99 * 0 + 0.01 * 2, 1e-15);
  EXPECT_NEAR(p.get("running_var")[0], 0.99 * 1 + 0.01 * 1, 1e-15);
  const auto inferred = forward(spec, p, Tensor::matrix({{2}}), Mode::infer).output;
  EXPECT_NEAR(inferred[0], (2 - 0.02) / std::sqrt(1.0 + kBatchNormEpsilon), 1e-12);
}

TEST(Forward, BatchnormTrainWithSingleSampleThrows) {
  const auto spec = LayerSpec::batchnorm();
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  EXPECT_THROW(forward(spec, p, Tensor::matrix({{1, 2}}), Mode::train), ShapeError);
  EXPECT_NO_THROW(forward(spec, p, Tensor::matrix({{1, 2}}), Mode::infer));
}

TEST(Forward, ShapeMismatchThrows) {
  const auto spec = LayerSpec::dense(2, Activation::linear);
  Rng rng(1);
  auto p = init_params(spec, 3, InitScheme::glorot_uniform, rng);
  EXPECT_THROW(forward(spec, p, Tensor({2, 4}), Mode::infer), ShapeError);
}

TEST(Forward, LstmSequenceEqualsRepeatedSteps) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t batch = 1 + rng.below(3), steps = 1 + rng.below(8), in = 1 + rng.below(3),
                      hidden = 1 + rng.below(4);
    const auto spec = LayerSpec::lstm(hidden);
    auto p = random_params(spec, in, rng);
    const auto x = uniform(rng, -2, 2, {batch, steps, in});
    const auto seq = forward(spec, p, x, Mode::infer).output;
    LstmState state{Tensor({batch, hidden}), Tensor({batch, hidden})};
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor xt({batch, in});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < in; ++i) xt[b * in + i] = x[(b * steps + t) * in + i];
      state = lstm_step(p, xt, state);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < hidden; ++h)
          EXPECT_NEAR(seq[(b * steps + t) * hidden + h], state.hidden[b * hidden + h], 1e-14);
    }
  }
}

TEST(Activation, Examples) {
  EXPECT_DOUBLE_EQ(activation_apply(Activation::sigmoid, Tensor::vector({0}))[0], 0.5);
  EXPECT_EQ(activation_apply(Activation::relu, Tensor::vector({-2, 3})), Tensor::vector({0, 3}));
  EXPECT_NEAR(activation_apply(Activation::tanh, Tensor::vector({0.5}))[0], 0.46212, 5e-6);
  EXPECT_EQ(activation_apply(Activation::linear, Tensor::vector({-4, 2})), Tensor::vector({-4, 2}));
}

TEST(Activation, SigmoidIsStableForLargeInputs) {
  const auto out = activation_apply(Activation::sigmoid, Tensor::vector({-1000, 1000}));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 1.0);
}

TEST(Backward, DenseIdentityPassesGradientThrough) {
  const auto spec = LayerSpec::dense(2, Activation::linear);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  p.get("weight") = Tensor::matrix({{1, 0}, {0, 1}});
  const auto res = forward(spec, p, Tensor::matrix({{1, 2}}), Mode::train);
  const auto g = Tensor::matrix({{0.5, -3}});
  EXPECT_EQ(backward(spec, p, res.record, g).grad_input, g);
}

TEST(Backward, DeadReluUnitGetsNoParameterGradient) {
  const auto spec = LayerSpec::dense(1, Activation::relu);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  p.get("weight") = Tensor::matrix({{1}, {1}});
  p.get("bias") = Tensor::vector({-10});
  const auto res = forward(spec, p, Tensor::matrix({{1, 2}}), Mode::train);
  const auto g = backward(spec, p, res.record, Tensor::matrix({{1}}));
  for (const auto& t : g.grad_params)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleRecordIsRejected) {
  const auto spec = LayerSpec::dense(2, Activation::tanh);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  const auto res = forward(spec, p, Tensor::matrix({{1, 2}}), Mode::train);
  ++p.version;
  EXPECT_THROW(backward(spec, p, res.record, Tensor::matrix({{1, 1}})), ContractError);
}

TEST(Backward, InferRecordAndKindMismatchAreRejected) {
  const auto spec = LayerSpec::dense(2, Activation::tanh);
  Rng rng(1);
  auto p = init_params(spec, 2, InitScheme::glorot_uniform, rng);
  const auto inferred = forward(spec, p, Tensor::matrix({{1, 2}}), Mode::infer);
  EXPECT_THROW(backward(spec, p, inferred.record, Tensor::matrix({{1, 1}})), ContractError);
  const auto trained = forward(spec, p, Tensor::matrix({{1, 2}}), Mode::train);
  EXPECT_THROW(backward(LayerSpec::activation_only(Activation::tanh), p, trained.record, Tensor::matrix({{1, 1}})),
               ContractError);
  EXPECT_THROW(backward(spec, p, trained.record, Tensor::matrix({{1, 1, 1}})), ShapeError);
}

// ---- finite-difference gradient checks --------------------------------------

TEST(GradientCheck, Dense) {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.below(4), in = 1 + rng.below(6), units = 1 + rng.below(6);
    const Activation act = std::array{Activation::sigmoid, Activation::tanh, Activation::relu,
                                      Activation::linear}[rng.below(4)];
    const auto spec = LayerSpec::dense(units, act);
    const auto p = random_params(spec, in, rng);
    EXPECT_LT(layer_gradient_error(spec, p, uniform(rng, -1, 1, {batch, in}), rng), kGradTolerance)
        << "trial " << trial;
  }
}

TEST(GradientCheck, Conv1d) {
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.below(3), len = 4 + rng.below(10), cin = 1 + rng.below(3),
                      filters = 1 + rng.below(3), kernel = std::array<std::size_t, 5>{2, 3, 5, 7, 11}[rng.below(5)],
                      stride = 1 + rng.below(2);
    const Activation act = std::array{Activation::tanh, Activation::relu, Activation::linear}[rng.below(3)];
    const auto spec = LayerSpec::conv(filters, kernel, stride, act);
    const auto p = random_params(spec, cin, rng);
    EXPECT_LT(layer_gradient_error(spec, p, uniform(rng, -1, 1, {batch, len, cin}), rng), kGradTolerance)
        << "trial " << trial << " len " << len << " kernel " << kernel << " stride " << stride;
  }
}

TEST(GradientCheck, Lstm) {
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.below(3), steps = 1 + rng.below(6), in = 1 + rng.below(3),
                      hidden = 1 + rng.below(4);
    const auto spec = LayerSpec::lstm(hidden);
    const auto p = random_params(spec, in, rng);
    EXPECT_LT(layer_gradient_error(spec, p, uniform(rng, -1, 1, {batch, steps, in}), rng), kGradTolerance)
        << "trial " << trial;
  }
}

TEST(GradientCheck, Batchnorm) {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 2 + rng.below(6), features = 1 + rng.below(4);
    const auto spec = LayerSpec::batchnorm();
    const auto p = random_params(spec, features, rng);
    const auto x = rng.below(2) == 0 ? uniform(rng, -2, 2, {batch, features})
                                     : uniform(rng, -2, 2, {batch, 3, features});
    EXPECT_LT(layer_gradient_error(spec, p, x, rng), kGradTolerance) << "trial " << trial;
  }
}

TEST(GradientCheck, ShapeLayers) {
  Rng rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.below(3), steps = 1 + rng.below(5), ch = 1 + rng.below(3);
    const Activation act = std::array{Activation::sigmoid, Activation::tanh, Activation::relu}[rng.below(3)];
    for (const auto& [spec, shape] : std::vector<std::pair<LayerSpec, std::vector<std::size_t>>>{
             {LayerSpec::activation_only(act), {batch, steps, ch}},
             {LayerSpec::upsample(2), {batch, steps, ch}},
             {LayerSpec::last_step(), {batch, steps, ch}},
             {LayerSpec::repeat(4), {batch, ch}}}) {
      const auto p = random_params(spec, ch, rng);
      EXPECT_LT(layer_gradient_error(spec, p, uniform(rng, -1, 1, shape), rng), kGradTolerance)
          << to_string(spec.kind) << " trial " << trial;
    }
  }
}
