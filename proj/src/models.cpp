#include "gapfill/models.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "gapfill/errors.hpp"

namespace gapfill {

using json = nlohmann::json;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::feed_forward: return "feed_forward";
    case Architecture::conv: return "conv";
    case Architecture::lstm: return "lstm";
  }
  return "?";
}

std::string to_string(BatchNormPlacement p) {
  switch (p) {
    case BatchNormPlacement::decoder_only: return "decoder_only";
    case BatchNormPlacement::every_layer: return "every_layer";
    case BatchNormPlacement::none: return "none";
  }
  return "?";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "feed_forward" || text == "feed" || text == "ff") return Architecture::feed_forward;
  if (text == "conv") return Architecture::conv;
  if (text == "lstm") return Architecture::lstm;
  throw ConfigError("unknown architecture '" + std::string(text) + "'");
}

BatchNormPlacement parse_batchnorm_placement(std::string_view text) {
  if (text == "decoder_only") return BatchNormPlacement::decoder_only;
  if (text == "every_layer") return BatchNormPlacement::every_layer;
  if (text == "none") return BatchNormPlacement::none;
  throw ConfigError("unknown batchnorm placement '" + std::string(text) + "'");
}

AutoencoderSpec AutoencoderSpec::make(Architecture arch, std::size_t layers_per_side,
                                      std::size_t units, std::size_t kernel_size) {
  AutoencoderSpec s;
  s.arch = arch;
  s.units.assign(layers_per_side, units);
  s.kernel_size = kernel_size;
  s.batchnorm = arch == Architecture::lstm ? BatchNormPlacement::none : BatchNormPlacement::decoder_only;
  return s;
}

void AutoencoderSpec::validate() const {
  if (units.empty() || units.size() > 3) {
    throw ConfigError("layers per side must be 1 to 3, got " + std::to_string(units.size()));
  }
  for (std::size_t u : units) {
    if (std::find(std::begin(kUnitMenu), std::end(kUnitMenu), u) == std::end(kUnitMenu)) {
      throw ConfigError("hidden units/filters must be one of 8, 16, 32, 64, 128; got " +
                        std::to_string(u));
    }
  }
  if (arch == Architecture::conv &&
      std::find(std::begin(kKernelMenu), std::end(kKernelMenu), kernel_size) == std::end(kKernelMenu)) {
    throw ConfigError("kernel size must be one of 2, 3, 5, 7, 11; got " + std::to_string(kernel_size));
  }
}

namespace {

struct Builder {
  std::vector<ModelLayer>& layers;
  InitScheme init;
  Rng& rng;
  std::size_t features;

  void add(const LayerSpec& spec, bool decoder) {
    ModelLayer layer{spec, init_params(spec, features, init, rng), features, decoder};
    features = output_features(spec, features);
    layers.push_back(std::move(layer));
  }

  // Affine map, optional batchnorm, then the activation.
  void add_block(LayerSpec affine, bool with_bn, bool decoder) {
    if (!with_bn) {
      add(affine, decoder);
      return;
    }
    const Activation act = affine.activation;
    affine.activation = Activation::linear;
    add(affine, decoder);
    add(LayerSpec::batchnorm(), decoder);
    if (act != Activation::linear) add(LayerSpec::activation_only(act), decoder);
  }
};

}  // namespace

Autoencoder Autoencoder::build(const AutoencoderSpec& spec, Rng& rng) {
  spec.validate();
  Autoencoder model;
  model.spec_ = spec;
  const bool bn_enc = spec.batchnorm == BatchNormPlacement::every_layer;
  const bool bn_dec = spec.batchnorm != BatchNormPlacement::none;
  const std::size_t n = spec.units.size();
  Builder b{model.layers_, spec.init, rng, 0};

  switch (spec.arch) {
    case Architecture::feed_forward: {
      b.features = kBinsPerDay;
      for (std::size_t i = 0; i < n; ++i)
        b.add_block(LayerSpec::dense(spec.units[i], spec.encoder_activation), bn_enc, false);
      for (std::size_t i = n - 1; i-- > 0;)
        b.add_block(LayerSpec::dense(spec.units[i], spec.decoder_activation), bn_dec, true);
      b.add(LayerSpec::dense(kBinsPerDay, Activation::linear), true);
      break;
    }
    case Architecture::conv: {
      b.features = 1;
      for (std::size_t i = 0; i < n; ++i)
        b.add_block(LayerSpec::conv(spec.units[i], spec.kernel_size, 2, spec.encoder_activation),
                    bn_enc, false);
      for (std::size_t i = n; i-- > 0;) {
        b.add(LayerSpec::upsample(2), true);
        b.add_block(LayerSpec::conv(spec.units[i], spec.kernel_size, 1, spec.decoder_activation),
                    bn_dec, true);
      }
      b.add(LayerSpec::conv(1, spec.kernel_size, 1, Activation::linear), true);
      break;
    }
    case Architecture::lstm: {
      b.features = 1;
      for (std::size_t i = 0; i < n; ++i) {
        b.add(LayerSpec::lstm(spec.units[i]), false);
        if (bn_enc) b.add(LayerSpec::batchnorm(), false);
      }
      b.add(LayerSpec::last_step(), false);
      b.add(LayerSpec::repeat(kBinsPerDay), true);
      for (std::size_t i = n; i-- > 0;) {
        b.add(LayerSpec::lstm(spec.units[i]), true);
        if (bn_dec) b.add(LayerSpec::batchnorm(), true);
      }
      b.add(LayerSpec::dense(1, Activation::linear), true);
      break;
    }
  }
  return model;
}

namespace {

Tensor to_model_input(const Tensor& batch, Architecture arch) {
  if (batch.rank() != 2 || batch.dim(1) != kBinsPerDay) {
    throw ShapeError("autoencoder input must be [batch x 48], got " + shape_string(batch.shape()));
  }
  if (arch == Architecture::feed_forward) return batch;
  return batch.reshaped({batch.dim(0), kBinsPerDay, 1});
}

}  // namespace

ModelPass Autoencoder::forward(const Tensor& batch, Mode mode) {
  ModelPass pass;
  Tensor x = to_model_input(batch, spec_.arch);
  pass.records.reserve(layers_.size());
  for (auto& layer : layers_) {
    auto res = gapfill::forward(layer.spec, layer.params, x, mode);
    x = std::move(res.output);
    pass.records.push_back(std::move(res.record));
  }
  x.reshape({batch.dim(0), kBinsPerDay});
  pass.output = std::move(x);
  return pass;
}

ModelPass Autoencoder::infer(const Tensor& batch) const {
  // Infer-mode forward passes only read parameters.
  return const_cast<Autoencoder*>(this)->forward(batch, Mode::infer);
}

ModelGradients Autoencoder::backward(const ModelPass& pass, const Tensor& grad_output) const {
  if (pass.records.size() != layers_.size()) throw ContractError("pass does not belong to this model");
  ModelGradients grads(layers_.size());
  Tensor g = grad_output.reshaped(pass.records.back().output.shape());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto res = gapfill::backward(layers_[i].spec, layers_[i].params, pass.records[i], g);
    g = std::move(res.grad_input);
    grads[i] = std::move(res.grad_params);
  }
  return grads;
}

Tensor Autoencoder::reconstruct_batch(const Tensor& corrupted) const {
  if (corrupted.rank() != 2 || corrupted.dim(1) != kBinsPerDay) {
    throw ShapeError("reconstruct expects [N x 48], got " + shape_string(corrupted.shape()));
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t n = corrupted.dim(0);
  Tensor out({n, kBinsPerDay});
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(kChunk, n - start);
    std::vector<double> chunk(corrupted.data() + start * kBinsPerDay,
                              corrupted.data() + (start + len) * kBinsPerDay);
    const auto pass = infer(Tensor({len, kBinsPerDay}, std::move(chunk)));
    std::copy(pass.output.values().begin(), pass.output.values().end(),
              out.data() + start * kBinsPerDay);
  }
  return out;
}

DayVector Autoencoder::reconstruct(std::span<const double> corrupted) const {
  if (corrupted.size() != kBinsPerDay) {
    throw ShapeError("reconstruct expects 48 values, got " + std::to_string(corrupted.size()));
  }
  const auto pass = infer(Tensor({1, kBinsPerDay}, std::vector<double>(corrupted.begin(), corrupted.end())));
  DayVector out{};
  std::copy(pass.output.values().begin(), pass.output.values().end(), out.begin());
  return out;
}

std::size_t Autoencoder::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_)
    for (std::size_t i = 0; i < l.params.size(); ++i)
      if (l.params.trainable[i]) total += l.params.tensors[i].size();
  return total;
}

bool same_parameters(const Autoencoder& a, const Autoencoder& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    const auto& pa = a.layers()[i].params;
    const auto& pb = b.layers()[i].params;
    if (pa.tensors.size() != pb.tensors.size()) return false;
    for (std::size_t j = 0; j < pa.tensors.size(); ++j) {
      if (pa.tensors[j].shape() != pb.tensors[j].shape()) return false;
      if (std::memcmp(pa.tensors[j].data(), pb.tensors[j].data(), pa.tensors[j].size() * sizeof(double)) != 0)
        return false;
    }
  }
  return true;
}

// ---- serialization -------------------------------------------------------

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr unsigned char kMagic[8] = {'G', 'A', 'P', 'F', 'I', 'L', 'L', '\0'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::span<const unsigned char> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("model file is truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

json spec_to_json(const AutoencoderSpec& s) {
  return {{"arch", to_string(s.arch)},
          {"units", s.units},
          {"kernel_size", s.kernel_size},
          {"encoder_activation", to_string(s.encoder_activation)},
          {"decoder_activation", to_string(s.decoder_activation)},
          {"batchnorm", to_string(s.batchnorm)},
          {"init", to_string(s.init)}};
}

AutoencoderSpec spec_from_json(const json& j) {
  AutoencoderSpec s;
  s.arch = parse_architecture(j.at("arch").get<std::string>());
  s.units = j.at("units").get<std::vector<std::size_t>>();
  s.kernel_size = j.at("kernel_size").get<std::size_t>();
  s.encoder_activation = parse_activation(j.at("encoder_activation").get<std::string>());
  s.decoder_activation = parse_activation(j.at("decoder_activation").get<std::string>());
  s.batchnorm = parse_batchnorm_placement(j.at("batchnorm").get<std::string>());
  s.init = parse_init_scheme(j.at("init").get<std::string>());
  return s;
}

}  // namespace

std::vector<unsigned char> serialize_model(const Autoencoder& model) {
  json manifest = json::array();
  std::vector<unsigned char> payload;
  std::size_t offset = 0;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const auto& p = model.layers()[li].params;
    for (std::size_t ti = 0; ti < p.size(); ++ti) {
      const Tensor& t = p.tensors[ti];
      manifest.push_back({{"name", "layer" + std::to_string(li) + "." + p.names[ti]},
                          {"shape", t.shape()},
                          {"offset", offset}});
      for (double v : t.values()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
      offset += t.size() * sizeof(double);
    }
  }
  const json header = {{"spec", spec_to_json(model.spec())},
                       {"variable", to_string(model.variable)},
                       {"normalizer",
                        {{"mean_bits", std::bit_cast<std::uint64_t>(model.normalizer.mean)},
                         {"stddev_bits", std::bit_cast<std::uint64_t>(model.normalizer.stddev)},
                         {"mean", model.normalizer.mean},
                         {"stddev", model.normalizer.stddev}}},
                       {"tensors", manifest}};
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put_u64(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  put_u64(out, fnv1a64(out));
  return out;
}

void save_model(const Autoencoder& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing model file '" + path + "'");
}

Autoencoder deserialize_model(std::span<const unsigned char> bytes, std::optional<Architecture> expected) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 + 8) throw FormatError("model file is truncated");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("not a gapfill model file (bad magic)");
  }
  Reader r(bytes);
  r.take(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const auto header_len = r.u64();
  const auto header_bytes = r.take(header_len);
  const auto payload_len = r.u64();
  const auto payload = r.take(payload_len);
  const std::size_t body_end = r.position();
  const std::uint64_t stored = r.u64();
  if (r.position() != bytes.size()) throw FormatError("trailing bytes after model checksum");
  if (fnv1a64(bytes.first(body_end)) != stored) throw ChecksumError("model file checksum mismatch");

  json header;
  try {
    header = json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  try {
    const AutoencoderSpec spec = spec_from_json(header.at("spec"));
    if (expected && *expected != spec.arch) {
      throw MismatchError("model file holds a " + to_string(spec.arch) + " autoencoder, expected " +
                          to_string(*expected));
    }
    Rng rng(0);
    Autoencoder model = Autoencoder::build(spec, rng);
    model.variable = parse_variable(header.at("variable").get<std::string>());
    const auto& nz = header.at("normalizer");
    model.normalizer.mean = std::bit_cast<double>(nz.at("mean_bits").get<std::uint64_t>());
    model.normalizer.stddev = std::bit_cast<double>(nz.at("stddev_bits").get<std::uint64_t>());

    const auto& manifest = header.at("tensors");
    std::size_t idx = 0;
    for (std::size_t li = 0; li < model.layers().size(); ++li) {
      auto& p = model.layers()[li].params;
      for (std::size_t ti = 0; ti < p.size(); ++ti, ++idx) {
        if (idx >= manifest.size()) throw FormatError("model manifest is missing tensors");
        const auto& entry = manifest[idx];
        const std::string name = "layer" + std::to_string(li) + "." + p.names[ti];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("shape").get<std::vector<std::size_t>>() != p.tensors[ti].shape()) {
          throw FormatError("model manifest entry " + std::to_string(idx) + " does not match " + name);
        }
        const auto offset = entry.at("offset").get<std::size_t>();
        Tensor& t = p.tensors[ti];
        if (offset + t.size() * sizeof(double) > payload.size()) throw FormatError("tensor outside payload");
        for (std::size_t k = 0; k < t.size(); ++k) {
          std::uint64_t bits = 0;
          for (int b = 7; b >= 0; --b) bits = (bits << 8) | payload[offset + k * 8 + static_cast<std::size_t>(b)];
          t[k] = std::bit_cast<double>(bits);
        }
      }
    }
    if (idx != manifest.size()) throw FormatError("model manifest has extra tensors");
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
}

Autoencoder load_model(const std::string& path, std::optional<Architecture> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes, expected);
}

}  // namespace gapfill
