#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iat/errors.hpp"

namespace iat {

// Dense row-major float32 tensor. Values are immutable once constructed;
// copies share storage. Every construction path that takes raw values checks
// finiteness, so a tensor never holds NaN or Inf.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, float v);
  // Validates data.size() against the shape and rejects non-finite entries.
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<float> data);
  static Tensor scalar(float v);
  static Tensor zeros_like(const Tensor& t) { return zeros(t.shape()); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool empty() const { return !data_; }

  const float* data() const { return data_->data(); }
  float operator[](std::size_t i) const { return (*data_)[i]; }
  // Value of a one-element tensor (loss scalars).
  float value() const;

  std::size_t dim(std::size_t i) const { return shape_[i]; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  Tensor(std::vector<std::size_t> shape, std::shared_ptr<const std::vector<float>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<float>> data_;

  friend Tensor reshape(const Tensor&, std::vector<std::size_t>);
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Zero-copy reshape; the element count must match.
Tensor reshape(const Tensor& t, std::vector<std::size_t> shape);

bool bitwise_equal(const Tensor& a, const Tensor& b);

// Untraced elementwise helpers used by attacks, optimizers and tests.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, float c);
// sign with sign(0) = 0, the convention used by every signed-gradient step.
Tensor sign(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);
// Clamps a into the L-inf box of radius eps around ref, then into the value
// domain if one is given.
Tensor clamp_box(const Tensor& a, const Tensor& ref, float eps,
                 std::optional<std::pair<float, float>> domain);
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace iat
