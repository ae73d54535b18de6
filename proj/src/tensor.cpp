#include "gapfill/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gapfill/errors.hpp"

namespace gapfill {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& row : rows) {
    if (row.size() != m) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({n, m}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t row, std::size_t col) {
  if (rank() != 2 || row >= shape_[0] || col >= shape_[1]) throw ShapeError("bad 2-D index");
  return data_[row * shape_[1] + col];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= shape_[0] || col >= shape_[1]) throw ShapeError("bad 2-D index");
  return data_[row * shape_[1] + col];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::reshape(std::vector<std::size_t> shape) {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

std::size_t Tensor::leading_size() const {
  if (shape_.empty()) throw ShapeError("scalar tensor has no leading dimensions");
  return data_.size() / std::max<std::size_t>(shape_.back(), 1);
}

std::size_t Tensor::last_dim() const {
  if (shape_.empty()) throw ShapeError("scalar tensor has no last dimension");
  return shape_.back();
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

namespace kernels {

void gemm_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_at_b_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_a_bt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                   std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * m;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  kernels::gemm_acc(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, std::size_t stride, Padding padding) {
  if (input.rank() != 1 || kernel.rank() != 1) throw ShapeError("conv1d expects 1-D tensors");
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t len = input.size();
  const std::size_t k = kernel.size();
  if (k == 0) throw ShapeError("conv1d: empty kernel");

  std::size_t pad_left = 0;
  std::size_t padded = len;
  std::size_t out_len = 0;
  if (padding == Padding::same) {
    out_len = (len + stride - 1) / stride;
    const std::size_t needed = out_len ? (out_len - 1) * stride + k : 0;
    const std::size_t pad_total = needed > len ? needed - len : 0;
    pad_left = pad_total / 2;
    padded = len + pad_total;
  }
  if (k > padded) {
    throw ShapeError("conv1d: kernel of length " + std::to_string(k) +
                     " is longer than padded input " + std::to_string(padded));
  }
  if (padding == Padding::valid) out_len = (padded - k) / stride + 1;

  Tensor out({out_len});
  for (std::size_t i = 0; i < out_len; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto pos = static_cast<std::ptrdiff_t>(i * stride + j) -
                       static_cast<std::ptrdiff_t>(pad_left);
      if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
      acc += input[static_cast<std::size_t>(pos)] * kernel[j];
    }
    out[i] = acc;
  }
  return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.values()) v *= factor;
  return out;
}

double sum(const Tensor& a) {
  return std::accumulate(a.values().begin(), a.values().end(), 0.0);
}

double mean(const Tensor& a) {
  if (a.empty()) throw ShapeError("mean of empty tensor");
  return sum(a) / static_cast<double>(a.size());
}

}  // namespace gapfill
