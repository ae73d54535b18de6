#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapfill/corruption.hpp"
#include "gapfill/layers.hpp"
#include "gapfill/preprocess.hpp"

namespace gapfill {

enum class Architecture { feed_forward, conv, lstm };
enum class BatchNormPlacement { decoder_only, every_layer, none };

std::string to_string(Architecture a);
std::string to_string(BatchNormPlacement p);
Architecture parse_architecture(std::string_view text);
BatchNormPlacement parse_batchnorm_placement(std::string_view text);

inline constexpr std::size_t kUnitMenu[] = {8, 16, 32, 64, 128};
inline constexpr std::size_t kKernelMenu[] = {2, 3, 5, 7, 11};

struct AutoencoderSpec {
  Architecture arch = Architecture::feed_forward;
  // Width of each encoder layer (1 to 3 entries); the decoder mirrors them.
  // The last encoder width is the code size.
  std::vector<std::size_t> units{32};
  std::size_t kernel_size = 3;  // conv only
  Activation encoder_activation = Activation::relu;
  Activation decoder_activation = Activation::tanh;
  BatchNormPlacement batchnorm = BatchNormPlacement::decoder_only;
  InitScheme init = InitScheme::glorot_uniform;

  // Defaults per architecture: decoder-only batchnorm for feed-forward and
  // conv, none for lstm.
  static AutoencoderSpec make(Architecture arch, std::size_t layers_per_side, std::size_t units,
                              std::size_t kernel_size = 3);

  std::size_t layers_per_side() const noexcept { return units.size(); }
  // Throws ConfigError for values outside the hyperparameter menus.
  void validate() const;
  bool operator==(const AutoencoderSpec&) const = default;
};

struct ModelLayer {
  LayerSpec spec;
  LayerParams params;
  std::size_t in_features = 0;
  bool in_decoder = false;
};

struct ModelPass {
  Tensor output;  // [B, 48]
  std::vector<ActivationRecord> records;
};

// Gradients aligned with Autoencoder::layers()[i].params.tensors.
using ModelGradients = std::vector<std::vector<Tensor>>;

/// Denoising autoencoder over one day of 48 normalized values.
///
/// feed_forward: dense encoder stack on the unrolled day, mirrored dense
/// decoder, linear 48-unit output.
/// conv: stride-2 `same` convolutions halve the sequence per level; the
/// decoder upsamples x2 (nearest neighbour) and convolves, then a linear
/// single-filter convolution produces the output sequence.
/// lstm: encoder lstm stack whose final hidden state is the code; the code
/// is repeated for 48 steps into a decoder lstm stack with a per-step linear
/// head.
/// Batchnorm is inserted between a layer's affine map and its activation.
class Autoencoder {
 public:
  Autoencoder() = default;

  static Autoencoder build(const AutoencoderSpec& spec, Rng& rng);

  const AutoencoderSpec& spec() const noexcept { return spec_; }
  std::vector<ModelLayer>& layers() noexcept { return layers_; }
  const std::vector<ModelLayer>& layers() const noexcept { return layers_; }

  // Train mode updates batchnorm running statistics.
  ModelPass forward(const Tensor& batch, Mode mode);
  // Infer mode only; never mutates the model.
  ModelPass infer(const Tensor& batch) const;
  ModelGradients backward(const ModelPass& pass, const Tensor& grad_output) const;

  // Full 48-value reconstruction of one corrupted day (normalized space).
  DayVector reconstruct(std::span<const double> corrupted) const;
  // Batched inference on [N, 48]; processed in chunks.
  Tensor reconstruct_batch(const Tensor& corrupted) const;

  std::size_t parameter_count() const;

  // Normalizer and variable travel with the model file.
  Normalizer normalizer;
  Variable variable = Variable::temperature;

 private:
  AutoencoderSpec spec_;
  std::vector<ModelLayer> layers_;
};

// Bit-exact parameter equality (including batchnorm running statistics).
bool same_parameters(const Autoencoder& a, const Autoencoder& b);

// Model file layout (all integers little-endian):
//   8 bytes  magic "GAPFILL\0"
//   u32      format version
//   u64      header length, then the JSON header (spec, variable,
//            normalizer, manifest of {name, shape, offset} per tensor)
//   u64      payload length, then the parameters as float64 little-endian
//   u64      FNV-1a 64 checksum of every preceding byte
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const Autoencoder& model, const std::string& path);
std::vector<unsigned char> serialize_model(const Autoencoder& model);
// Throws ChecksumError, FormatError (version, truncation) or MismatchError
// when `expected` is given and the stored architecture differs.
Autoencoder load_model(const std::string& path, std::optional<Architecture> expected = std::nullopt);
Autoencoder deserialize_model(std::span<const unsigned char> bytes,
                              std::optional<Architecture> expected = std::nullopt);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;

}  // namespace gapfill
