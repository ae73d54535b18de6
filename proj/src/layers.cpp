#include "gapfill/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gapfill/errors.hpp"

namespace gapfill {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::lstm: return "lstm";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::activation: return "activation";
    case LayerKind::upsample: return "upsample";
    case LayerKind::last_step: return "last_step";
    case LayerKind::repeat: return "repeat";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
  }
  return "?";
}

std::string to_string(InitScheme scheme) {
  return scheme == InitScheme::glorot_uniform ? "glorot_uniform" : "classical_uniform";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::dense, LayerKind::conv1d, LayerKind::lstm, LayerKind::batchnorm,
                 LayerKind::activation, LayerKind::upsample, LayerKind::last_step,
                 LayerKind::repeat}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

Activation parse_activation(std::string_view text) {
  for (auto a : {Activation::sigmoid, Activation::tanh, Activation::relu, Activation::linear}) {
    if (to_string(a) == text) return a;
  }
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

InitScheme parse_init_scheme(std::string_view text) {
  if (text == "glorot_uniform" || text == "glorot") return InitScheme::glorot_uniform;
  if (text == "classical_uniform" || text == "classical") return InitScheme::classical_uniform;
  throw ConfigError("unknown init scheme '" + std::string(text) + "'");
}

LayerSpec LayerSpec::dense(std::size_t units, Activation act) {
  return {LayerKind::dense, units, 0, 1, act};
}
LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, std::size_t stride,
                          Activation act) {
  return {LayerKind::conv1d, filters, kernel, stride, act};
}
LayerSpec LayerSpec::lstm(std::size_t hidden) { return {LayerKind::lstm, hidden, 0, 1, Activation::tanh}; }
LayerSpec LayerSpec::batchnorm() { return {LayerKind::batchnorm, 0, 0, 1, Activation::linear}; }
LayerSpec LayerSpec::activation_only(Activation act) { return {LayerKind::activation, 0, 0, 1, act}; }
LayerSpec LayerSpec::upsample(std::size_t factor) { return {LayerKind::upsample, factor, 0, 1, Activation::linear}; }
LayerSpec LayerSpec::last_step() { return {LayerKind::last_step, 0, 0, 1, Activation::linear}; }
LayerSpec LayerSpec::repeat(std::size_t steps) { return {LayerKind::repeat, steps, 0, 1, Activation::linear}; }

void LayerParams::add(std::string name, Tensor value, bool is_trainable) {
  names.push_back(std::move(name));
  tensors.push_back(std::move(value));
  trainable.push_back(is_trainable);
}

Tensor& LayerParams::get(std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ContractError("layer has no parameter '" + std::string(name) + "'");
}

const Tensor& LayerParams::get(std::string_view name) const {
  return const_cast<LayerParams*>(this)->get(name);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in + fan_out == 0) throw ConfigError("glorot bound needs a positive fan");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t output_features(const LayerSpec& spec, std::size_t in_features) {
  switch (spec.kind) {
    case LayerKind::dense:
    case LayerKind::conv1d:
    case LayerKind::lstm:
      return spec.units;
    default:
      return in_features;
  }
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double apply_one(Activation kind, double z) {
  switch (kind) {
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::linear: return z;
  }
  return z;
}

double derivative_one(Activation kind, double z, double a) {
  switch (kind) {
    case Activation::sigmoid: return a * (1.0 - a);
    case Activation::tanh: return 1.0 - a * a;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::linear: return 1.0;
  }
  return 1.0;
}

Tensor sample_weights(std::vector<std::size_t> shape, double bound, Rng& rng) {
  return uniform(rng, -bound, bound, std::move(shape));
}

double weight_bound(InitScheme scheme, std::size_t fan_in, std::size_t fan_out) {
  return scheme == InitScheme::glorot_uniform ? glorot_bound(fan_in, fan_out)
                                              : kClassicalUniformBound;
}

void require_rank(const Tensor& t, std::size_t rank, const LayerSpec& spec) {
  if (t.rank() != rank) {
    throw ShapeError(to_string(spec.kind) + " expects a rank-" + std::to_string(rank) +
                     " input, got " + shape_string(t.shape()));
  }
}

void require_features(const Tensor& t, std::size_t features, const LayerSpec& spec) {
  if (t.rank() < 2 || t.last_dim() != features) {
    throw ShapeError(to_string(spec.kind) + " expects " + std::to_string(features) +
                     " input features, got " + shape_string(t.shape()));
  }
}

std::vector<std::size_t> with_last(std::vector<std::size_t> shape, std::size_t last) {
  shape.back() = last;
  return shape;
}

// Conv1d with `same` zero padding: output length ceil(L / stride).
struct ConvGeometry {
  std::size_t in_len, out_len, pad_left;
};

ConvGeometry conv_geometry(std::size_t len, std::size_t kernel, std::size_t stride) {
  const std::size_t out_len = (len + stride - 1) / stride;
  const std::size_t needed = out_len ? (out_len - 1) * stride + kernel : 0;
  const std::size_t pad_total = needed > len ? needed - len : 0;
  return {len, out_len, pad_total / 2};
}

// ---- dense ---------------------------------------------------------------

ForwardResult dense_forward(const LayerSpec& spec, const LayerParams& p, const Tensor& x) {
  const Tensor& w = p.get("weight");
  const Tensor& b = p.get("bias");
  require_features(x, w.dim(0), spec);
  const std::size_t n = x.leading_size(), in = w.dim(0), out = w.dim(1);
  Tensor z(with_last(x.shape(), out));
  for (std::size_t r = 0; r < n; ++r) std::copy_n(b.data(), out, z.data() + r * out);
  kernels::gemm_acc(x.data(), w.data(), z.data(), n, in, out);
  ForwardResult res;
  res.output = activation_apply(spec.activation, z);
  res.record.input = x;
  res.record.pre_activation = std::move(z);
  res.record.output = res.output;
  return res;
}

BackwardResult dense_backward(const LayerSpec& spec, const LayerParams& p,
                              const ActivationRecord& rec, const Tensor& g) {
  const Tensor& w = p.get("weight");
  const std::size_t n = rec.input.leading_size(), in = w.dim(0), out = w.dim(1);
  Tensor dz = hadamard(g, activation_derivative(spec.activation, rec.pre_activation, rec.output));
  Tensor dw(w.shape()), db({out}), dx(rec.input.shape());
  kernels::gemm_at_b_acc(rec.input.data(), dz.data(), dw.data(), n, in, out);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < out; ++j) db[j] += dz[r * out + j];
  kernels::gemm_a_bt_acc(dz.data(), w.data(), dx.data(), n, out, in);
  return {std::move(dx), {std::move(dw), std::move(db)}};
}

// ---- conv1d --------------------------------------------------------------

ForwardResult conv_forward(const LayerSpec& spec, const LayerParams& p, const Tensor& x) {
  require_rank(x, 3, spec);
  const Tensor& w = p.get("kernel");
  const Tensor& b = p.get("bias");
  const std::size_t k = w.dim(0), cin = w.dim(1), cout = w.dim(2);
  require_features(x, cin, spec);
  const std::size_t batch = x.dim(0);
  const auto geo = conv_geometry(x.dim(1), k, spec.stride);
  Tensor z({batch, geo.out_len, cout});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t t = 0; t < geo.out_len; ++t) {
      double* zrow = z.data() + (bi * geo.out_len + t) * cout;
      std::copy_n(b.data(), cout, zrow);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const auto pos = static_cast<std::ptrdiff_t>(t * spec.stride + kk) -
                         static_cast<std::ptrdiff_t>(geo.pad_left);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(geo.in_len)) continue;
        const double* xrow = x.data() + (bi * geo.in_len + static_cast<std::size_t>(pos)) * cin;
        const double* wk = w.data() + kk * cin * cout;
        kernels::gemm_acc(xrow, wk, zrow, 1, cin, cout);
      }
    }
  }
  ForwardResult res;
  res.output = activation_apply(spec.activation, z);
  res.record.input = x;
  res.record.pre_activation = std::move(z);
  res.record.output = res.output;
  return res;
}

BackwardResult conv_backward(const LayerSpec& spec, const LayerParams& p,
                             const ActivationRecord& rec, const Tensor& g) {
  const Tensor& w = p.get("kernel");
  const std::size_t k = w.dim(0), cin = w.dim(1), cout = w.dim(2);
  const Tensor& x = rec.input;
  const std::size_t batch = x.dim(0);
  const auto geo = conv_geometry(x.dim(1), k, spec.stride);
  Tensor dz = hadamard(g, activation_derivative(spec.activation, rec.pre_activation, rec.output));
  Tensor dw(w.shape()), db({cout}), dx(x.shape());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t t = 0; t < geo.out_len; ++t) {
      const double* dzrow = dz.data() + (bi * geo.out_len + t) * cout;
      for (std::size_t co = 0; co < cout; ++co) db[co] += dzrow[co];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const auto pos = static_cast<std::ptrdiff_t>(t * spec.stride + kk) -
                         static_cast<std::ptrdiff_t>(geo.pad_left);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(geo.in_len)) continue;
        const std::size_t off = (bi * geo.in_len + static_cast<std::size_t>(pos)) * cin;
        const double* wk = w.data() + kk * cin * cout;
        kernels::gemm_at_b_acc(x.data() + off, dzrow, dw.data() + kk * cin * cout, 1, cin, cout);
        kernels::gemm_a_bt_acc(dzrow, wk, dx.data() + off, 1, cout, cin);
      }
    }
  }
  return {std::move(dx), {std::move(dw), std::move(db)}};
}

// ---- lstm ----------------------------------------------------------------
// Gate blocks along the 4H axis are ordered input, forget, cell, output.

void lstm_gates(const double* z, double* gates, std::size_t hidden) {
  for (std::size_t j = 0; j < hidden; ++j) {
    gates[j] = sigmoid(z[j]);
    gates[hidden + j] = sigmoid(z[hidden + j]);
    gates[2 * hidden + j] = std::tanh(z[2 * hidden + j]);
    gates[3 * hidden + j] = sigmoid(z[3 * hidden + j]);
  }
}

ForwardResult lstm_forward(const LayerSpec& spec, const LayerParams& p, const Tensor& x) {
  require_rank(x, 3, spec);
  const Tensor& wx = p.get("input_weight");
  const Tensor& wh = p.get("recurrent_weight");
  const Tensor& b = p.get("bias");
  const std::size_t in = wx.dim(0), h = wh.dim(0), h4 = 4 * h;
  require_features(x, in, spec);
  const std::size_t batch = x.dim(0), steps = x.dim(1);

  Tensor z({batch, steps, h4});
  for (std::size_t r = 0; r < batch * steps; ++r) std::copy_n(b.data(), h4, z.data() + r * h4);
  kernels::gemm_acc(x.data(), wx.data(), z.data(), batch * steps, in, h4);

  Tensor gates({batch, steps, h4}), cell({batch, steps, h}), out({batch, steps, h});
  std::vector<double> h_prev(batch * h, 0.0), c_prev(batch * h, 0.0), zt(batch * h4);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t bi = 0; bi < batch; ++bi)
      std::copy_n(z.data() + (bi * steps + t) * h4, h4, zt.data() + bi * h4);
    kernels::gemm_acc(h_prev.data(), wh.data(), zt.data(), batch, h, h4);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t row = bi * steps + t;
      std::copy_n(zt.data() + bi * h4, h4, z.data() + row * h4);
      double* gt = gates.data() + row * h4;
      lstm_gates(zt.data() + bi * h4, gt, h);
      for (std::size_t j = 0; j < h; ++j) {
        const double c = gt[h + j] * c_prev[bi * h + j] + gt[j] * gt[2 * h + j];
        const double hv = gt[3 * h + j] * std::tanh(c);
        cell[row * h + j] = c;
        out[row * h + j] = hv;
        c_prev[bi * h + j] = c;
        h_prev[bi * h + j] = hv;
      }
    }
  }
  ForwardResult res;
  res.output = out;
  res.record.input = x;
  res.record.pre_activation = std::move(z);
  res.record.gates = std::move(gates);
  res.record.cell = std::move(cell);
  res.record.output = std::move(out);
  return res;
}

BackwardResult lstm_backward(const LayerParams& p, const ActivationRecord& rec, const Tensor& g) {
  const Tensor& wx = p.get("input_weight");
  const Tensor& wh = p.get("recurrent_weight");
  const std::size_t in = wx.dim(0), h = wh.dim(0), h4 = 4 * h;
  const Tensor& x = rec.input;
  const std::size_t batch = x.dim(0), steps = x.dim(1);

  Tensor dwx(wx.shape()), dwh(wh.shape()), db({h4}), dx(x.shape());
  Tensor dz({batch, steps, h4});
  std::vector<double> dh_next(batch * h, 0.0), dc_next(batch * h, 0.0);
  std::vector<double> dzt(batch * h4), h_prev(batch * h);

  for (std::size_t tt = steps; tt-- > 0;) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t row = bi * steps + tt;
      const double* gt = rec.gates.data() + row * h4;
      for (std::size_t j = 0; j < h; ++j) {
        const double c = rec.cell[row * h + j];
        const double c_prev = tt > 0 ? rec.cell[(row - 1) * h + j] : 0.0;
        const double tc = std::tanh(c);
        const double ig = gt[j], fg = gt[h + j], cg = gt[2 * h + j], og = gt[3 * h + j];
        const double dh = g[row * h + j] + dh_next[bi * h + j];
        const double dc = dh * og * (1.0 - tc * tc) + dc_next[bi * h + j];
        double* dzr = dzt.data() + bi * h4;
        dzr[j] = dc * cg * ig * (1.0 - ig);
        dzr[h + j] = dc * c_prev * fg * (1.0 - fg);
        dzr[2 * h + j] = dc * ig * (1.0 - cg * cg);
        dzr[3 * h + j] = dh * tc * og * (1.0 - og);
        dc_next[bi * h + j] = dc * fg;
        h_prev[bi * h + j] = tt > 0 ? rec.output[(row - 1) * h + j] : 0.0;
      }
      std::copy_n(dzt.data() + bi * h4, h4, dz.data() + row * h4);
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    kernels::gemm_a_bt_acc(dzt.data(), wh.data(), dh_next.data(), batch, h4, h);
    kernels::gemm_at_b_acc(h_prev.data(), dzt.data(), dwh.data(), batch, h, h4);
  }
  kernels::gemm_at_b_acc(x.data(), dz.data(), dwx.data(), batch * steps, in, h4);
  for (std::size_t r = 0; r < batch * steps; ++r)
    for (std::size_t j = 0; j < h4; ++j) db[j] += dz[r * h4 + j];
  kernels::gemm_a_bt_acc(dz.data(), wx.data(), dx.data(), batch * steps, h4, in);
  return {std::move(dx), {std::move(dwx), std::move(dwh), std::move(db)}};
}

// ---- batchnorm -----------------------------------------------------------

ForwardResult batchnorm_forward(const LayerSpec& spec, LayerParams& p, const Tensor& x, Mode mode) {
  Tensor& gamma = p.get("gamma");
  const Tensor& beta = p.get("beta");
  Tensor& run_mean = p.get("running_mean");
  Tensor& run_var = p.get("running_var");
  const std::size_t f = gamma.size();
  require_features(x, f, spec);
  const std::size_t n = x.leading_size();

  Tensor mu({f}), var({f});
  if (mode == Mode::train) {
    if (x.dim(0) < 2) {
      throw ShapeError("batchnorm in train mode needs a batch of at least 2 samples");
    }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < f; ++j) mu[j] += x[r * f + j];
    for (auto& v : mu.values()) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x[r * f + j] - mu[j];
        var[j] += d * d;
      }
    for (auto& v : var.values()) v /= static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
      run_mean[j] = kBatchNormMomentum * run_mean[j] + (1.0 - kBatchNormMomentum) * mu[j];
      run_var[j] = kBatchNormMomentum * run_var[j] + (1.0 - kBatchNormMomentum) * var[j];
    }
  } else {
    mu = run_mean;
    var = run_var;
  }
  Tensor inv_std({f});
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEpsilon);

  Tensor xhat(x.shape()), y(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t i = r * f + j;
      xhat[i] = (x[i] - mu[j]) * inv_std[j];
      y[i] = gamma[j] * xhat[i] + beta[j];
    }
  ForwardResult res;
  res.output = y;
  res.record.input = x;
  res.record.pre_activation = std::move(xhat);
  res.record.inv_std = std::move(inv_std);
  res.record.output = std::move(y);
  return res;
}

BackwardResult batchnorm_backward(const LayerParams& p, const ActivationRecord& rec, const Tensor& g) {
  const Tensor& gamma = p.get("gamma");
  const std::size_t f = gamma.size();
  const std::size_t n = rec.input.leading_size();
  const Tensor& xhat = rec.pre_activation;
  Tensor dgamma({f}), dbeta({f}), sum_dxhat({f}), sum_dxhat_xhat({f});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t i = r * f + j;
      dgamma[j] += g[i] * xhat[i];
      dbeta[j] += g[i];
      const double dxh = g[i] * gamma[j];
      sum_dxhat[j] += dxh;
      sum_dxhat_xhat[j] += dxh * xhat[i];
    }
  Tensor dx(rec.input.shape());
  const double nn = static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t i = r * f + j;
      const double dxh = g[i] * gamma[j];
      dx[i] = rec.inv_std[j] / nn * (nn * dxh - sum_dxhat[j] - xhat[i] * sum_dxhat_xhat[j]);
    }
  const std::size_t f_shape = f;
  return {std::move(dx), {std::move(dgamma), std::move(dbeta), Tensor({f_shape}), Tensor({f_shape})}};
}

// ---- shape-only layers ---------------------------------------------------

ForwardResult upsample_forward(const LayerSpec& spec, const Tensor& x) {
  require_rank(x, 3, spec);
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2), f = spec.units;
  Tensor y({batch, len * f, ch});
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t t = 0; t < len * f; ++t)
      std::copy_n(x.data() + (bi * len + t / f) * ch, ch, y.data() + (bi * len * f + t) * ch);
  ForwardResult res;
  res.output = y;
  res.record.input = x;
  res.record.output = std::move(y);
  return res;
}

Tensor upsample_backward(const LayerSpec& spec, const ActivationRecord& rec, const Tensor& g) {
  const std::size_t batch = rec.input.dim(0), len = rec.input.dim(1), ch = rec.input.dim(2);
  const std::size_t f = spec.units;
  Tensor dx(rec.input.shape());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t t = 0; t < len * f; ++t)
      for (std::size_t c = 0; c < ch; ++c)
        dx[(bi * len + t / f) * ch + c] += g[(bi * len * f + t) * ch + c];
  return dx;
}

ForwardResult last_step_forward(const LayerSpec& spec, const Tensor& x) {
  require_rank(x, 3, spec);
  const std::size_t batch = x.dim(0), steps = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch});
  for (std::size_t bi = 0; bi < batch; ++bi)
    std::copy_n(x.data() + (bi * steps + steps - 1) * ch, ch, y.data() + bi * ch);
  ForwardResult res;
  res.output = y;
  res.record.input = x;
  res.record.output = std::move(y);
  return res;
}

Tensor last_step_backward(const ActivationRecord& rec, const Tensor& g) {
  const std::size_t batch = rec.input.dim(0), steps = rec.input.dim(1), ch = rec.input.dim(2);
  Tensor dx(rec.input.shape());
  for (std::size_t bi = 0; bi < batch; ++bi)
    std::copy_n(g.data() + bi * ch, ch, dx.data() + (bi * steps + steps - 1) * ch);
  return dx;
}

ForwardResult repeat_forward(const LayerSpec& spec, const Tensor& x) {
  require_rank(x, 2, spec);
  const std::size_t batch = x.dim(0), ch = x.dim(1), steps = spec.units;
  Tensor y({batch, steps, ch});
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t t = 0; t < steps; ++t)
      std::copy_n(x.data() + bi * ch, ch, y.data() + (bi * steps + t) * ch);
  ForwardResult res;
  res.output = y;
  res.record.input = x;
  res.record.output = std::move(y);
  return res;
}

Tensor repeat_backward(const LayerSpec& spec, const ActivationRecord& rec, const Tensor& g) {
  const std::size_t batch = rec.input.dim(0), ch = rec.input.dim(1), steps = spec.units;
  Tensor dx(rec.input.shape());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t c = 0; c < ch; ++c) dx[bi * ch + c] += g[(bi * steps + t) * ch + c];
  return dx;
}

}  // namespace

Tensor activation_apply(Activation kind, const Tensor& z) {
  if (kind == Activation::linear) return z;
  return map(z, [kind](double v) { return apply_one(kind, v); });
}

Tensor activation_derivative(Activation kind, const Tensor& z, const Tensor& a) {
  Tensor d(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) d[i] = derivative_one(kind, z[i], a[i]);
  return d;
}

LayerParams init_params(const LayerSpec& spec, std::size_t in_features, InitScheme scheme, Rng& rng) {
  LayerParams p;
  const auto need_positive = [&](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(to_string(spec.kind) + ": " + what + " must be positive");
  };
  switch (spec.kind) {
    case LayerKind::dense: {
      need_positive(spec.units, "units");
      need_positive(in_features, "fan-in");
      const double bound = weight_bound(scheme, in_features, spec.units);
      p.add("weight", sample_weights({in_features, spec.units}, bound, rng));
      p.add("bias", Tensor({spec.units}));
      break;
    }
    case LayerKind::conv1d: {
      need_positive(spec.units, "filters");
      need_positive(spec.kernel_size, "kernel size");
      need_positive(spec.stride, "stride");
      need_positive(in_features, "input channels");
      const double bound = weight_bound(scheme, spec.kernel_size * in_features,
                                        spec.kernel_size * spec.units);
      p.add("kernel", sample_weights({spec.kernel_size, in_features, spec.units}, bound, rng));
      p.add("bias", Tensor({spec.units}));
      break;
    }
    case LayerKind::lstm: {
      need_positive(spec.units, "hidden size");
      need_positive(in_features, "input features");
      const std::size_t h = spec.units;
      p.add("input_weight",
            sample_weights({in_features, 4 * h}, weight_bound(scheme, in_features, 4 * h), rng));
      p.add("recurrent_weight", sample_weights({h, 4 * h}, weight_bound(scheme, h, 4 * h), rng));
      Tensor bias({4 * h});
      for (std::size_t j = h; j < 2 * h; ++j) bias[j] = kLstmForgetBias;
      p.add("bias", std::move(bias));
      break;
    }
    case LayerKind::batchnorm: {
      need_positive(in_features, "features");
      p.add("gamma", Tensor({in_features}, 1.0));
      p.add("beta", Tensor({in_features}));
      p.add("running_mean", Tensor({in_features}), false);
      p.add("running_var", Tensor({in_features}, 1.0), false);
      break;
    }
    case LayerKind::upsample:
    case LayerKind::repeat:
      need_positive(spec.units, "factor");
      break;
    case LayerKind::activation:
    case LayerKind::last_step:
      break;
  }
  return p;
}

ForwardResult forward(const LayerSpec& spec, LayerParams& params, const Tensor& input, Mode mode) {
  if (input.rank() < 2) {
    throw ShapeError(to_string(spec.kind) + " expects a batched input, got " +
                     shape_string(input.shape()));
  }
  ForwardResult res;
  switch (spec.kind) {
    case LayerKind::dense: res = dense_forward(spec, params, input); break;
    case LayerKind::conv1d: res = conv_forward(spec, params, input); break;
    case LayerKind::lstm: res = lstm_forward(spec, params, input); break;
    case LayerKind::batchnorm: res = batchnorm_forward(spec, params, input, mode); break;
    case LayerKind::activation: {
      res.output = activation_apply(spec.activation, input);
      res.record.input = input;
      res.record.pre_activation = input;
      res.record.output = res.output;
      break;
    }
    case LayerKind::upsample: res = upsample_forward(spec, input); break;
    case LayerKind::last_step: res = last_step_forward(spec, input); break;
    case LayerKind::repeat: res = repeat_forward(spec, input); break;
  }
  res.record.kind = spec.kind;
  res.record.mode = mode;
  res.record.params_version = params.version;
  return res;
}

BackwardResult backward(const LayerSpec& spec, const LayerParams& params,
                        const ActivationRecord& record, const Tensor& grad_output) {
  if (record.kind != spec.kind) {
    throw ContractError("activation record belongs to a " + to_string(record.kind) +
                        " layer, not " + to_string(spec.kind));
  }
  if (record.mode != Mode::train) {
    throw ContractError("backward needs a record from a train-mode forward pass");
  }
  if (record.params_version != params.version) {
    throw ContractError("stale activation record: parameters changed since the forward pass");
  }
  if (grad_output.shape() != record.output.shape()) {
    throw ShapeError("grad_output " + shape_string(grad_output.shape()) + " does not match output " +
                     shape_string(record.output.shape()));
  }
  switch (spec.kind) {
    case LayerKind::dense: return dense_backward(spec, params, record, grad_output);
    case LayerKind::conv1d: return conv_backward(spec, params, record, grad_output);
    case LayerKind::lstm: return lstm_backward(params, record, grad_output);
    case LayerKind::batchnorm: return batchnorm_backward(params, record, grad_output);
    case LayerKind::activation: {
      Tensor d = activation_derivative(spec.activation, record.pre_activation, record.output);
      return {hadamard(grad_output, d), {}};
    }
    case LayerKind::upsample: return {upsample_backward(spec, record, grad_output), {}};
    case LayerKind::last_step: return {last_step_backward(record, grad_output), {}};
    case LayerKind::repeat: return {repeat_backward(spec, record, grad_output), {}};
  }
  return {};
}

LstmState lstm_step(const LayerParams& params, const Tensor& x_t, const LstmState& state) {
  const Tensor& wx = params.get("input_weight");
  const Tensor& wh = params.get("recurrent_weight");
  const Tensor& b = params.get("bias");
  const std::size_t in = wx.dim(0), h = wh.dim(0), h4 = 4 * h;
  if (x_t.rank() != 2 || x_t.dim(1) != in) throw ShapeError("lstm_step: bad input shape");
  const std::size_t batch = x_t.dim(0);
  if (state.hidden.shape() != std::vector<std::size_t>{batch, h} ||
      state.cell.shape() != state.hidden.shape()) {
    throw ShapeError("lstm_step: bad state shape");
  }
  Tensor z({batch, h4});
  for (std::size_t bi = 0; bi < batch; ++bi) std::copy_n(b.data(), h4, z.data() + bi * h4);
  kernels::gemm_acc(x_t.data(), wx.data(), z.data(), batch, in, h4);
  kernels::gemm_acc(state.hidden.data(), wh.data(), z.data(), batch, h, h4);
  LstmState next{Tensor({batch, h}), Tensor({batch, h})};
  std::vector<double> gates(h4);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    lstm_gates(z.data() + bi * h4, gates.data(), h);
    for (std::size_t j = 0; j < h; ++j) {
      const double c = gates[h + j] * state.cell[bi * h + j] + gates[j] * gates[2 * h + j];
      next.cell[bi * h + j] = c;
      next.hidden[bi * h + j] = gates[3 * h + j] * std::tanh(c);
    }
  }
  return next;
}

}  // namespace gapfill
