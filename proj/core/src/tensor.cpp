#include "iat/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace iat {

namespace {

void check_finite(const std::vector<float>& data, const char* what) {
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw ValueError(std::string(what) + ": non-finite value");
    }
  }
}

std::string shape_to_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

}  // namespace

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  auto data = std::make_shared<std::vector<float>>(shape_numel(shape), 0.0f);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, float v) {
  if (!std::isfinite(v)) throw ValueError("Tensor::full: non-finite fill value");
  auto data = std::make_shared<std::vector<float>>(shape_numel(shape), v);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<float> data) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("Tensor::from_data: " + std::to_string(data.size()) +
                     " values for shape " + shape_to_str(shape));
  }
  check_finite(data, "Tensor::from_data");
  auto p = std::make_shared<std::vector<float>>(std::move(data));
  return Tensor(std::move(shape), std::move(p));
}

Tensor Tensor::scalar(float v) { return from_data({}, {v}); }

float Tensor::value() const {
  if (numel() != 1) {
    throw ShapeError("Tensor::value: tensor with " + std::to_string(numel()) +
                     " elements is not a scalar");
  }
  return (*data_)[0];
}

std::string Tensor::shape_str() const { return shape_to_str(shape_); }

Tensor reshape(const Tensor& t, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("reshape: cannot view " + t.shape_str() + " as " +
                     shape_to_str(shape));
  }
  return Tensor(std::move(shape), t.data_);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor mul_scalar(const Tensor& a, float c) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor sign(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = a[i];
    out[i] = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
  }
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] < lo ? lo : (a[i] > hi ? hi : a[i]);
  }
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor clamp_box(const Tensor& a, const Tensor& ref, float eps,
                 std::optional<std::pair<float, float>> domain) {
  check_same_shape(a, ref, "clamp_box");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float lo = ref[i] - eps;
    const float hi = ref[i] + eps;
    float v = a[i] < lo ? lo : (a[i] > hi ? hi : a[i]);
    if (domain) {
      v = v < domain->first ? domain->first : (v > domain->second ? domain->second : v);
    }
    out[i] = v;
  }
  return Tensor::from_data(a.shape(), std::move(out));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const float d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace iat
