#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gapfill {

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  // 2-D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t row, std::size_t col);
  double at(std::size_t row, std::size_t col) const;

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;
  void reshape(std::vector<std::size_t> shape);

  // Product of all dimensions except the last one.
  std::size_t leading_size() const;
  std::size_t last_dim() const;

  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);
std::size_t shape_product(const std::vector<std::size_t>& shape);

enum class Padding { valid, same };

Tensor matmul(const Tensor& a, const Tensor& b);

// 1-D cross-correlation (no kernel flip). `same` pads with zeros so that
// the output length is ceil(len / stride); extra padding goes to the right.
Tensor conv1d(const Tensor& input, const Tensor& kernel, std::size_t stride, Padding padding);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
double sum(const Tensor& a);
double mean(const Tensor& a);

template <typename F>
Tensor map(const Tensor& a, F&& f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

namespace kernels {

// c[n x m] += a[n x k] * b[k x m]
void gemm_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
              std::size_t m);
// c[k x m] += a[n x k]^T * b[n x m]
void gemm_at_b_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m);
// c[n x k] += a[n x m] * b[k x m]^T
void gemm_a_bt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                   std::size_t k);

}  // namespace kernels

}  // namespace gapfill
