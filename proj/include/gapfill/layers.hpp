#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/rng.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

enum class LayerKind { dense, conv1d, lstm, batchnorm, activation, upsample, last_step, repeat };
enum class Activation { sigmoid, tanh, relu, linear };
enum class InitScheme { glorot_uniform, classical_uniform };
enum class Mode { train, infer };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
std::string to_string(InitScheme scheme);
LayerKind parse_layer_kind(std::string_view text);
Activation parse_activation(std::string_view text);
InitScheme parse_init_scheme(std::string_view text);

inline constexpr double kClassicalUniformBound = 0.05;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kLstmForgetBias = 1.0;

// Tensor layouts: dense/batchnorm/activation act on the last axis of any
// rank >= 2 input; conv1d, lstm and upsample take [batch, steps, channels].
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  // Units (dense), filters (conv1d), hidden size (lstm), factor (upsample),
  // steps (repeat). Unused otherwise.
  std::size_t units = 0;
  std::size_t kernel_size = 0;  // conv1d only
  std::size_t stride = 1;       // conv1d only
  Activation activation = Activation::linear;

  static LayerSpec dense(std::size_t units, Activation act);
  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride, Activation act);
  static LayerSpec lstm(std::size_t hidden);
  static LayerSpec batchnorm();
  static LayerSpec activation_only(Activation act);
  static LayerSpec upsample(std::size_t factor);
  static LayerSpec last_step();
  static LayerSpec repeat(std::size_t steps);

  bool operator==(const LayerSpec&) const = default;
};

// Named parameter tensors of one layer. Non-trainable entries (batchnorm
// running statistics) are carried along for serialization and restore.
struct LayerParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::vector<bool> trainable;
  // Bumped whenever trainable values change; records remember it.
  std::uint64_t version = 0;

  void add(std::string name, Tensor value, bool is_trainable = true);
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  std::size_t size() const noexcept { return tensors.size(); }
};

// Everything a backward pass needs from the matching forward pass.
struct ActivationRecord {
  LayerKind kind = LayerKind::dense;
  Mode mode = Mode::infer;
  std::uint64_t params_version = 0;
  Tensor input;
  // dense/conv1d/activation: z before the nonlinearity. lstm: gate
  // pre-activations [B, T, 4H]. batchnorm: normalized input x_hat.
  Tensor pre_activation;
  Tensor output;
  Tensor gates;    // lstm: gate values after their nonlinearities (i, f, g, o)
  Tensor cell;     // lstm: cell state per step [B, T, H]
  Tensor inv_std;  // batchnorm: per-feature 1/sqrt(var + eps)
};

struct ForwardResult {
  Tensor output;
  ActivationRecord record;
};

struct BackwardResult {
  Tensor grad_input;
  // Aligned with LayerParams::tensors; non-trainable entries are zero.
  std::vector<Tensor> grad_params;
};

double glorot_bound(std::size_t fan_in, std::size_t fan_out);

// Feature count produced by the layer for a given incoming feature count.
std::size_t output_features(const LayerSpec& spec, std::size_t in_features);

LayerParams init_params(const LayerSpec& spec, std::size_t in_features, InitScheme scheme, Rng& rng);

// Train mode updates batchnorm running statistics in `params`.
ForwardResult forward(const LayerSpec& spec, LayerParams& params, const Tensor& input, Mode mode);

BackwardResult backward(const LayerSpec& spec, const LayerParams& params,
                        const ActivationRecord& record, const Tensor& grad_output);

Tensor activation_apply(Activation kind, const Tensor& z);
// Elementwise derivative of the activation, from pre-activation z and a = phi(z).
Tensor activation_derivative(Activation kind, const Tensor& z, const Tensor& a);

struct LstmState {
  Tensor hidden;  // [B, H]
  Tensor cell;    // [B, H]
};

// One recurrence step of an lstm layer on x_t [B, I].
LstmState lstm_step(const LayerParams& params, const Tensor& x_t, const LstmState& state);

}  // namespace gapfill
