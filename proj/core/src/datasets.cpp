#include "iat/datasets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "iat/rng.hpp"

namespace iat {

std::vector<std::size_t> Dataset::example_shape() const {
  auto s = examples.shape();
  s.erase(s.begin());
  return s;
}

Tensor Dataset::gather(const std::vector<std::size_t>& idx) const {
  const std::size_t n = size();
  const std::size_t per = examples.numel() / n;
  std::vector<float> out(idx.size() * per);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= n) throw ValueError("Dataset::gather: index out of range");
    std::memcpy(out.data() + j * per, examples.data() + idx[j] * per,
                per * sizeof(float));
  }
  auto shape = examples.shape();
  shape[0] = idx.size();
  return Tensor::from_data(std::move(shape), std::move(out));
}

std::vector<int> Dataset::gather_labels(const std::vector<std::size_t>& idx) const {
  std::vector<int> out(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = labels.at(idx[j]);
  return out;
}

Dataset two_moons(std::size_t n, float noise_sd, std::uint64_t seed) {
  if (noise_sd < 0.0f) throw ValueError("two_moons: negative noise sd");
  Rng rng(seed);
  const std::size_t n0 = (n + 1) / 2;
  std::vector<float> pts(2 * n);
  std::vector<int> labels(n);
  constexpr float kPi = 3.14159265358979323846f;
  for (std::size_t i = 0; i < n; ++i) {
    const float t = rng.uniform(0.0f, kPi);
    float x, y;
    if (i < n0) {
      x = std::cos(t);
      y = std::sin(t);
      labels[i] = 0;
    } else {
      x = 1.0f - std::cos(t);
      y = 0.5f - std::sin(t);
      labels[i] = 1;
    }
    if (noise_sd > 0.0f) {
      x += noise_sd * rng.normal();
      y += noise_sd * rng.normal();
    }
    pts[2 * i] = x;
    pts[2 * i + 1] = y;
  }
  Dataset d;
  d.examples = Tensor::from_data({n, 2}, std::move(pts));
  d.labels = std::move(labels);
  d.classes = 2;
  d.domain = std::nullopt;
  return d;
}

Dataset gaussian_blobs(std::size_t n, const std::vector<std::array<float, 2>>& centers,
                       float sd, std::uint64_t seed) {
  if (centers.size() < 2) throw ValueError("gaussian_blobs: need at least 2 centers");
  if (sd < 0.0f) throw ValueError("gaussian_blobs: negative sd");
  Rng rng(seed);
  const std::size_t k = centers.size();
  std::vector<float> pts(2 * n);
  std::vector<int> labels(n);
  std::size_t i = 0;
  for (std::size_t c = 0; c < k; ++c) {
    // Earlier classes absorb the remainder, sizes balanced within one.
    const std::size_t count = n / k + (c < n % k ? 1 : 0);
    for (std::size_t j = 0; j < count; ++j, ++i) {
      pts[2 * i] = centers[c][0] + sd * rng.normal();
      pts[2 * i + 1] = centers[c][1] + sd * rng.normal();
      labels[i] = static_cast<int>(c);
    }
  }
  Dataset d;
  d.examples = Tensor::from_data({n, 2}, std::move(pts));
  d.labels = std::move(labels);
  d.classes = k;
  d.domain = std::nullopt;
  return d;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct BeReader {
  std::ifstream in;
  std::string path;

  void read(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw IoError(IoError::Kind::kTruncated, path + ": truncated IDX file");
    }
  }

  std::uint32_t u32_be() {
    unsigned char b[4];
    read(b, 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
  }
};

void put_u32_be(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  BeReader img;
  img.path = images_path;
  img.in.open(images_path, std::ios::binary);
  if (!img.in) throw IoError(IoError::Kind::kUnreadable, images_path + ": cannot open");
  if (img.u32_be() != kImagesMagic) {
    throw IoError(IoError::Kind::kBadMagic, images_path + ": not an IDX image file");
  }
  const std::uint32_t n = img.u32_be();
  const std::uint32_t rows = img.u32_be();
  const std::uint32_t cols = img.u32_be();
  if (n == 0 || rows == 0 || cols == 0) {
    throw IoError(IoError::Kind::kCountMismatch, images_path + ": empty IDX image file");
  }

  BeReader lab;
  lab.path = labels_path;
  lab.in.open(labels_path, std::ios::binary);
  if (!lab.in) throw IoError(IoError::Kind::kUnreadable, labels_path + ": cannot open");
  if (lab.u32_be() != kLabelsMagic) {
    throw IoError(IoError::Kind::kBadMagic, labels_path + ": not an IDX label file");
  }
  const std::uint32_t n_labels = lab.u32_be();
  if (n_labels != n) {
    throw IoError(IoError::Kind::kCountMismatch,
                  images_path + ": " + std::to_string(n) + " images but " +
                      std::to_string(n_labels) + " labels");
  }

  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(n) * per);
  img.read(raw.data(), raw.size());
  std::vector<float> pixels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  }

  std::vector<std::uint8_t> raw_labels(n);
  lab.read(raw_labels.data(), raw_labels.size());
  std::vector<int> labels(n);
  int max_label = 0;
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    labels[i] = raw_labels[i];
    max_label = std::max(max_label, labels[i]);
  }

  Dataset d;
  d.examples = Tensor::from_data({n, 1, rows, cols}, std::move(pixels));
  d.labels = std::move(labels);
  d.classes = static_cast<std::size_t>(max_label) + 1;
  if (d.classes < 2) d.classes = 2;
  d.domain = std::make_pair(0.0f, 1.0f);
  return d;
}

void save_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                     std::size_t n, std::size_t rows, std::size_t cols) {
  if (pixels.size() != n * rows * cols) {
    throw ValueError("save_idx_images: pixel count does not match dims");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  put_u32_be(out, kImagesMagic);
  put_u32_be(out, static_cast<std::uint32_t>(n));
  put_u32_be(out, static_cast<std::uint32_t>(rows));
  put_u32_be(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  put_u32_be(out, kLabelsMagic);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

}  // namespace iat
