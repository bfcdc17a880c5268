#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iat/attacks.hpp"
#include "iat/datasets.hpp"
#include "iat/inverse.hpp"
#include "iat/model.hpp"

namespace iat {

// Per-example correctness (1 = argmax matches the label) over the whole
// dataset. Attacked variants run in fixed-size chunks, each with its own
// noise stream keyed by (seed, epsilon bits, chunk index), so results do not
// depend on how the work is scheduled.
std::vector<std::uint8_t> correct_natural(const NetworkState& state, const Dataset& data);
std::vector<std::uint8_t> correct_under_attack(const NetworkState& state,
                                               const Dataset& data,
                                               const AttackConfig& cfg,
                                               std::uint64_t seed);
std::vector<std::uint8_t> correct_under_inverse(const NetworkState& state,
                                                const Dataset& data,
                                                const InverseConfig& cfg,
                                                std::uint64_t seed);

double natural_accuracy(const NetworkState& state, const Dataset& data);
double robust_accuracy(const NetworkState& state, const Dataset& data,
                       const AttackConfig& cfg, std::uint64_t seed);

// Accuracy as a function of perturbation radius. Positive grid entries run
// the attack template at that radius; zero measures natural accuracy;
// negative entries run the CE-only (beta = 0) inverse generator at |epsilon|
// and measure accuracy on the resulting helpful perturbations.
struct CurveSpec {
  std::vector<float> grid;  // ascending; may contain negative radii
  AttackConfig attack_template;    // epsilon replaced per point; step_size < 0
                                   // resolves to |epsilon| / 4
  InverseConfig inverse_template;  // used for negative entries; beta forced to
                                   // 0; step_size < 0 resolves to |epsilon| / 2
  std::uint64_t seed = 0;

  void validate() const;
};

struct CurvePoint {
  float epsilon = 0.0f;
  double accuracy = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
};

Curve accuracy_curve(const NetworkState& state, const Dataset& data,
                     const CurveSpec& spec);

// Rank examples by natural cross-entropy ascending (ties by index); the
// first ceil(N/2) are the top (well-classified) half. Returns (top, bottom),
// each in rank order; together they partition 0..N-1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> group_split(
    const NetworkState& state, const Dataset& data);

// One attacked correctness pass per grid point over the whole set, then the
// same vectors re-read per half.
struct GroupCurves {
  Curve all;
  Curve top;
  Curve bottom;
};

GroupCurves accuracy_curve_grouped(const NetworkState& state, const Dataset& data,
                                   const CurveSpec& spec);

// Pointwise accuracy difference a - b; the grids must match exactly.
Curve curve_difference(const Curve& a, const Curve& b);

// "epsilon,accuracy" rows in grid order.
void write_curve_csv(const Curve& curve, const std::string& path);
// "epsilon,accuracy,group" rows; per grid point one row each for
// all/top/bottom.
void write_group_curves_csv(const GroupCurves& curves, const std::string& path);
// "epsilon,delta" rows.
void write_difference_csv(const Curve& diff, const std::string& path);

}  // namespace iat
