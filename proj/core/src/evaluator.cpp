#include "iat/evaluator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "iat/rng.hpp"
#include "iat/trace.hpp"

namespace iat {

namespace {

constexpr std::size_t kEvalChunk = 512;

std::uint64_t float_bits(float v) {
  return static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(v));
}

std::size_t argmax_row(const float* row, std::size_t c) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < c; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

void mark_correct(const Tensor& logits, const std::vector<int>& y,
                  const std::vector<std::size_t>& idx, std::vector<std::uint8_t>& out) {
  const std::size_t c = logits.dim(1);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out[idx[j]] =
        argmax_row(logits.data() + j * c, c) == static_cast<std::size_t>(y[j]) ? 1 : 0;
  }
}

std::vector<std::size_t> chunk_indices(std::size_t start, std::size_t stop) {
  std::vector<std::size_t> idx(stop - start);
  std::iota(idx.begin(), idx.end(), start);
  return idx;
}

double subset_accuracy(const std::vector<std::uint8_t>& correct,
                       const std::vector<std::size_t>& subset) {
  if (subset.empty()) return 0.0;
  std::size_t n = 0;
  for (std::size_t i : subset) n += correct[i];
  return static_cast<double>(n) / static_cast<double>(subset.size());
}

double total_accuracy(const std::vector<std::uint8_t>& correct) {
  std::size_t n = 0;
  for (std::uint8_t v : correct) n += v;
  return correct.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(correct.size());
}

// Per-example correctness at one grid point, dispatching on the sign of eps.
std::vector<std::uint8_t> correct_at(const NetworkState& state, const Dataset& data,
                                     const CurveSpec& spec, float eps) {
  if (eps == 0.0f) return correct_natural(state, data);
  if (eps > 0.0f) {
    AttackConfig cfg = spec.attack_template;
    cfg.epsilon = eps;
    if (cfg.step_size < 0.0f) cfg.step_size = eps / 4.0f;
    return correct_under_attack(state, data, cfg, spec.seed);
  }
  InverseConfig cfg = spec.inverse_template;
  cfg.epsilon = -eps;
  cfg.beta = 0.0f;  // helpful perturbations from plain CE descent
  if (cfg.step_size < 0.0f) cfg.step_size = -eps / 2.0f;
  return correct_under_inverse(state, data, cfg, spec.seed);
}

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> correct_natural(const NetworkState& state, const Dataset& data) {
  const std::size_t n = data.size();
  std::vector<std::uint8_t> out(n, 0);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    const std::vector<std::size_t> idx = chunk_indices(start, stop);
    const Tensor x = data.gather(idx);
    const std::vector<int> y = data.gather_labels(idx);
    mark_correct(forward(state, x).logits, y, idx, out);
  }
  return out;
}

std::vector<std::uint8_t> correct_under_attack(const NetworkState& state,
                                               const Dataset& data,
                                               const AttackConfig& cfg,
                                               std::uint64_t seed) {
  cfg.validate();
  if (cfg.epsilon == 0.0f) return correct_natural(state, data);
  const std::size_t n = data.size();
  std::vector<std::uint8_t> out(n, 0);
  std::size_t chunk = 0;
  for (std::size_t start = 0; start < n; start += kEvalChunk, ++chunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    const std::vector<std::size_t> idx = chunk_indices(start, stop);
    const Tensor x = data.gather(idx);
    const std::vector<int> y = data.gather_labels(idx);
    Rng rng(mix_seed(seed, streams::kEval, float_bits(cfg.epsilon), chunk));
    const Tensor x_hat = pgd_attack(state, x, y, cfg, rng);
    mark_correct(forward(state, x_hat).logits, y, idx, out);
  }
  return out;
}

std::vector<std::uint8_t> correct_under_inverse(const NetworkState& state,
                                                const Dataset& data,
                                                const InverseConfig& cfg,
                                                std::uint64_t seed) {
  cfg.validate();
  if (cfg.beta != 0.0f) {
    throw ValueError("correct_under_inverse: evaluation uses CE-only generation (beta 0)");
  }
  if (cfg.epsilon == 0.0f) return correct_natural(state, data);
  const std::size_t n = data.size();
  std::vector<std::uint8_t> out(n, 0);
  std::size_t chunk = 0;
  for (std::size_t start = 0; start < n; start += kEvalChunk, ++chunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    const std::vector<std::size_t> idx = chunk_indices(start, stop);
    const Tensor x = data.gather(idx);
    const std::vector<int> y = data.gather_labels(idx);
    Rng rng(mix_seed(seed, streams::kEval, float_bits(cfg.epsilon), chunk));
    const Tensor x_check = instance_inverse(state, x, y, nullptr, cfg, rng);
    mark_correct(forward(state, x_check).logits, y, idx, out);
  }
  return out;
}

double natural_accuracy(const NetworkState& state, const Dataset& data) {
  return total_accuracy(correct_natural(state, data));
}

double robust_accuracy(const NetworkState& state, const Dataset& data,
                       const AttackConfig& cfg, std::uint64_t seed) {
  return total_accuracy(correct_under_attack(state, data, cfg, seed));
}

void CurveSpec::validate() const {
  if (grid.empty()) throw ValueError("CurveSpec: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] < grid[i - 1]) throw ValueError("CurveSpec: grid must be ascending");
  }
  for (float e : grid) {
    if (!std::isfinite(e)) throw ValueError("CurveSpec: non-finite grid entry");
  }
}

Curve accuracy_curve(const NetworkState& state, const Dataset& data,
                     const CurveSpec& spec) {
  spec.validate();
  Curve curve;
  curve.points.reserve(spec.grid.size());
  for (float eps : spec.grid) {
    const std::vector<std::uint8_t> correct = correct_at(state, data, spec, eps);
    curve.points.push_back(CurvePoint{eps, total_accuracy(correct)});
  }
  return curve;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> group_split(
    const NetworkState& state, const Dataset& data) {
  const std::size_t n = data.size();
  if (n < 2) throw ValueError("group_split: need at least 2 examples");
  std::vector<float> losses(n);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    const std::vector<std::size_t> idx = chunk_indices(start, stop);
    const Tensor x = data.gather(idx);
    const std::vector<int> y = data.gather_labels(idx);
    const std::vector<float> ce =
        ops::per_example_cross_entropy(forward(state, x).logits, y);
    for (std::size_t j = 0; j < idx.size(); ++j) losses[idx[j]] = ce[j];
  }
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&losses](std::size_t a, std::size_t b) {
    return losses[a] < losses[b];
  });
  const std::size_t half = (n + 1) / 2;
  std::vector<std::size_t> top(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::size_t> bottom(rank.begin() + static_cast<std::ptrdiff_t>(half), rank.end());
  return {std::move(top), std::move(bottom)};
}

GroupCurves accuracy_curve_grouped(const NetworkState& state, const Dataset& data,
                                   const CurveSpec& spec) {
  spec.validate();
  const auto [top, bottom] = group_split(state, data);
  GroupCurves out;
  for (float eps : spec.grid) {
    const std::vector<std::uint8_t> correct = correct_at(state, data, spec, eps);
    out.all.points.push_back(CurvePoint{eps, total_accuracy(correct)});
    out.top.points.push_back(CurvePoint{eps, subset_accuracy(correct, top)});
    out.bottom.points.push_back(CurvePoint{eps, subset_accuracy(correct, bottom)});
  }
  return out;
}

Curve curve_difference(const Curve& a, const Curve& b) {
  if (a.points.size() != b.points.size()) {
    throw ValueError("curve_difference: grids have different lengths");
  }
  Curve out;
  out.points.reserve(a.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i].epsilon != b.points[i].epsilon) {
      throw ValueError("curve_difference: grids differ at entry " + std::to_string(i));
    }
    out.points.push_back(
        CurvePoint{a.points[i].epsilon, a.points[i].accuracy - b.points[i].accuracy});
  }
  return out;
}

void write_curve_csv(const Curve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out << "epsilon,accuracy\n";
  for (const CurvePoint& p : curve.points) {
    out << fmt_g(p.epsilon) << ',' << fmt_g(p.accuracy) << '\n';
  }
}

void write_group_curves_csv(const GroupCurves& curves, const std::string& path) {
  if (curves.top.points.size() != curves.all.points.size() ||
      curves.bottom.points.size() != curves.all.points.size()) {
    throw ValueError("write_group_curves_csv: group curves disagree in length");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out << "epsilon,accuracy,group\n";
  for (std::size_t i = 0; i < curves.all.points.size(); ++i) {
    out << fmt_g(curves.all.points[i].epsilon) << ',' << fmt_g(curves.all.points[i].accuracy)
        << ",all\n";
    out << fmt_g(curves.top.points[i].epsilon) << ',' << fmt_g(curves.top.points[i].accuracy)
        << ",top\n";
    out << fmt_g(curves.bottom.points[i].epsilon) << ','
        << fmt_g(curves.bottom.points[i].accuracy) << ",bottom\n";
  }
}

void write_difference_csv(const Curve& diff, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out << "epsilon,delta\n";
  for (const CurvePoint& p : diff.points) {
    out << fmt_g(p.epsilon) << ',' << fmt_g(p.accuracy) << '\n';
  }
}

}  // namespace iat
