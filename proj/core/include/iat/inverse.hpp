#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "iat/model.hpp"
#include "iat/rng.hpp"
#include "iat/tensor.hpp"

namespace iat {

struct InverseConfig {
  float epsilon = 4.0f / 255.0f;  // radius of the inverse ball (eps')
  float step_size = 2.0f / 255.0f;
  int steps = 5;  // instance-wise descent steps
  float beta = 1.0f;
  std::optional<std::pair<float, float>> clamp_domain;
  // When set, UIAT training recomputes the inverse forward with the freshly
  // updated bank before taking the prediction targets; default keeps the
  // pre-update forward that the bank step already produced.
  bool post_update_targets = false;

  void validate() const;
};

// One perturbation per class, all within ||z||_inf <= epsilon at all times.
class UniversalBank {
 public:
  // z_c starts at 0.001 * N(0,1), projected into the ball.
  UniversalBank(std::size_t classes, const std::vector<std::size_t>& input_shape,
                float epsilon, std::uint64_t seed);
  // For deserialization.
  UniversalBank(std::vector<Tensor> zs, float epsilon, std::uint64_t seed);

  std::size_t classes() const { return zs_.size(); }
  float epsilon() const { return epsilon_; }
  std::uint64_t init_seed() const { return init_seed_; }
  const Tensor& z(std::size_t c) const { return zs_.at(c); }
  // Replaces z_c; rejects values outside the ball.
  void set_z(std::size_t c, Tensor z);
  // True if every entry of every z_c is within the ball.
  bool in_ball() const;

 private:
  std::vector<Tensor> zs_;
  float epsilon_ = 0.0f;
  std::uint64_t init_seed_ = 0;
};

// Inverse adversarial loss of x_check against its anchor x:
//   CE(f(x_check), y)
//   + beta * (L1(F(x_check), F(x)) - L1(F(x_check), F(x_hat)))
// mean-reduced over the batch. x_hat may be null only when beta == 0.
float inverse_loss(const NetworkState& state, const Tensor& x_check, const Tensor& x,
                   const Tensor* x_hat, const std::vector<int>& y, float beta);

// Per-example inverse adversary: from x + 0.001 * N(0,1) (projected into the
// ball), cfg.steps iterations of
//   x_check <- project_ball(x_check - step_size * sign(grad L_inv))
// then one domain clamp. Examples in the batch never interact; each row is
// bit-identical to running it alone.
Tensor instance_inverse(const NetworkState& state, const Tensor& x,
                        const std::vector<int>& y, const Tensor* x_hat,
                        const InverseConfig& cfg, Rng& rng);

struct UniversalUpdateResult {
  // softmax(f(x_j + z_{y_j})) rows for the batch. Under the default config
  // these come from the same forward pass the bank step differentiated
  // (pre-update bank); with post_update_targets they are recomputed after
  // the step.
  Tensor target_probs;
};

// One signed step per class on the summed inverse loss
//   l_c = sum_{j: y_j = c} L_inv(x_j + z_c, y_j)
// followed by projection back into the ball. Classes absent from the batch
// keep their z unchanged. x_hat rows are the matching adversarial examples;
// required only when beta > 0.
UniversalUpdateResult universal_update(UniversalBank& bank, const NetworkState& state,
                                       const Tensor& x, const std::vector<int>& y,
                                       const Tensor* x_hat, const InverseConfig& cfg);

// x_j + z_{y_j}, domain-clamped.
Tensor apply_universal(const Tensor& x, const std::vector<int>& y,
                       const UniversalBank& bank,
                       std::optional<std::pair<float, float>> domain);

}  // namespace iat
