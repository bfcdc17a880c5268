#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iat/tensor.hpp"

namespace iat {

// Labeled examples with stable indices (position == index for the lifetime
// of the object). domain is the valid value range of example entries, or
// nullopt for unbounded synthetic data.
struct Dataset {
  Tensor examples;  // [N] + example shape
  std::vector<int> labels;
  std::size_t classes = 0;
  std::optional<std::pair<float, float>> domain;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> example_shape() const;
  // Rows at the given indices as a batch tensor, in the given order.
  Tensor gather(const std::vector<std::size_t>& idx) const;
  std::vector<int> gather_labels(const std::vector<std::size_t>& idx) const;
};

// n points on two interleaved half-circle arcs with i.i.d. Gaussian noise of
// the given sd per coordinate. Class counts differ by at most one (class 0
// gets the extra point for odd n). Pure function of (n, noise_sd, seed).
Dataset two_moons(std::size_t n, float noise_sd, std::uint64_t seed);

// Isotropic Gaussian clusters, one class per center, sizes balanced within
// one (earlier classes get the remainder).
Dataset gaussian_blobs(std::size_t n, const std::vector<std::array<float, 2>>& centers,
                       float sd, std::uint64_t seed);

// IDX image/label pair (big-endian headers, one unsigned byte per pixel or
// label). Pixels are scaled to [0,1]; examples come out as [N,1,rows,cols].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writers for round-trip tests and dataset preparation.
void save_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                     std::size_t n, std::size_t rows, std::size_t cols);
void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

}  // namespace iat
