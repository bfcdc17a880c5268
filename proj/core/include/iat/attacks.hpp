#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "iat/model.hpp"
#include "iat/rng.hpp"
#include "iat/tensor.hpp"

namespace iat {

enum class AttackLoss { kCrossEntropy, kCwMargin };

struct AttackConfig {
  float epsilon = 8.0f / 255.0f;
  float step_size = 2.0f / 255.0f;
  int steps = 10;
  bool rand_init = true;
  // Single-step family: initial noise is uniform on
  // [-init_radius_factor * epsilon, +init_radius_factor * epsilon].
  float init_radius_factor = 1.0f;
  // Single-step family: whether the step result is projected back into the
  // epsilon ball before the domain clamp.
  bool project_after_step = true;
  AttackLoss loss = AttackLoss::kCrossEntropy;
  std::optional<std::pair<float, float>> clamp_domain;

  void validate() const;
};

// Presets with the usual doubled-noise convention:
//   rs_fgsm: noise radius eps, step 1.25*eps, projected back to the ball.
//   n_fgsm:  noise radius 2*eps, step eps, no projection (output within 3*eps).
AttackConfig rs_fgsm_preset(float eps, std::optional<std::pair<float, float>> domain);
AttackConfig n_fgsm_preset(float eps, std::optional<std::pair<float, float>> domain);

// Projection onto the L-inf ball of radius eps around ref, then into the
// value domain if one is given. Idempotent.
Tensor linf_project(const Tensor& cand, const Tensor& ref, float eps,
                    std::optional<std::pair<float, float>> domain);

// Projected gradient ascent on the configured loss:
//   x <- project(x + step_size * sign(grad_x L(f(x), y)))
// for cfg.steps iterations, starting from x plus uniform noise in
// [-eps, eps] if rand_init. Output stays within eps of x and in the domain.
Tensor pgd_attack(const NetworkState& state, const Tensor& x, const std::vector<int>& y,
                  const AttackConfig& cfg, Rng& rng);

// Inner maximization used by TRADES-style training: same iteration as
// pgd_attack but ascending KL(f(x) || f(x + delta)) with the natural
// prediction held fixed.
Tensor trades_attack(const NetworkState& state, const Tensor& x, const AttackConfig& cfg,
                     Rng& rng);

// One-step family: delta = psi(eta + step_size * sign(grad_x CE(f(x+eta), y)))
// with eta uniform on [-r, r], r = init_radius_factor * epsilon, and psi the
// ball projection when project_after_step is set (identity otherwise).
// Returns x + delta, domain-clamped.
Tensor single_step_attack(const NetworkState& state, const Tensor& x,
                          const std::vector<int>& y, const AttackConfig& cfg, Rng& rng);

// Convenience value of the margin loss, mean over the batch.
float cw_margin_loss(const Tensor& logits, const std::vector<int>& labels);

}  // namespace iat
