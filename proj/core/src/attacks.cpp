#include "iat/attacks.hpp"

#include <cmath>
#include <string>

namespace iat {

void AttackConfig::validate() const {
  if (epsilon < 0.0f || !std::isfinite(epsilon)) {
    throw ValueError("AttackConfig: epsilon must be >= 0");
  }
  if (step_size < 0.0f || !std::isfinite(step_size)) {
    throw ValueError("AttackConfig: step_size must be >= 0");
  }
  if (steps < 0) throw ValueError("AttackConfig: steps must be >= 0");
  if (init_radius_factor < 0.0f || !std::isfinite(init_radius_factor)) {
    throw ValueError("AttackConfig: init_radius_factor must be >= 0");
  }
  if (clamp_domain && clamp_domain->first > clamp_domain->second) {
    throw ValueError("AttackConfig: empty clamp domain");
  }
}

AttackConfig rs_fgsm_preset(float eps, std::optional<std::pair<float, float>> domain) {
  AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = 1.25f * eps;
  cfg.steps = 1;
  cfg.rand_init = true;
  cfg.init_radius_factor = 1.0f;
  cfg.project_after_step = true;
  cfg.clamp_domain = domain;
  return cfg;
}

AttackConfig n_fgsm_preset(float eps, std::optional<std::pair<float, float>> domain) {
  AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = eps;
  cfg.steps = 1;
  cfg.rand_init = true;
  cfg.init_radius_factor = 2.0f;
  cfg.project_after_step = false;
  cfg.clamp_domain = domain;
  return cfg;
}

Tensor linf_project(const Tensor& cand, const Tensor& ref, float eps,
                    std::optional<std::pair<float, float>> domain) {
  return clamp_box(cand, ref, eps, domain);
}

namespace {

Tensor uniform_noise_like(const Tensor& x, float radius, Rng& rng) {
  std::vector<float> noise(x.numel());
  for (float& v : noise) v = rng.uniform(-radius, radius);
  return Tensor::from_data(x.shape(), std::move(noise));
}

// Shared PGD loop. loss_grad must return the input gradient of the ascent
// objective at the given point.
template <typename LossGrad>
Tensor ascend(const char* name, const Tensor& x, const AttackConfig& cfg, Rng& rng,
              LossGrad&& loss_grad) {
  cfg.validate();
  Tensor cur = x;
  if (cfg.rand_init) {
    cur = linf_project(add(x, uniform_noise_like(x, cfg.epsilon, rng)), x, cfg.epsilon,
                       cfg.clamp_domain);
  }
  for (int it = 0; it < cfg.steps; ++it) {
    Tensor g;
    try {
      g = loss_grad(cur);
    } catch (const ValueError& e) {
      throw ValueError(std::string(name) + ": non-finite loss or gradient at iteration " +
                       std::to_string(it) + ": " + e.what());
    }
    cur = linf_project(add(cur, mul_scalar(sign(g), cfg.step_size)), x, cfg.epsilon,
                       cfg.clamp_domain);
  }
  return cur;
}

}  // namespace

Tensor pgd_attack(const NetworkState& state, const Tensor& x, const std::vector<int>& y,
                  const AttackConfig& cfg, Rng& rng) {
  return ascend("pgd_attack", x, cfg, rng, [&](const Tensor& cur) {
    ModelTape tape(state, /*params_require_grad=*/false);
    auto pass = tape.forward(cur, /*input_requires_grad=*/true);
    Var loss = cfg.loss == AttackLoss::kCrossEntropy
                   ? tape.trace().softmax_cross_entropy(pass.logits, y, Reduction::kMean)
                   : tape.trace().cw_margin(pass.logits, y, Reduction::kMean);
    return tape.trace().backward(loss).at(pass.input);
  });
}

Tensor trades_attack(const NetworkState& state, const Tensor& x, const AttackConfig& cfg,
                     Rng& rng) {
  // Natural prediction is a constant of the inner maximization.
  const Tensor p_nat = ops::softmax(forward(state, x).logits);
  return ascend("trades_attack", x, cfg, rng, [&](const Tensor& cur) {
    ModelTape tape(state, /*params_require_grad=*/false);
    auto pass = tape.forward(cur, /*input_requires_grad=*/true);
    Var q = tape.trace().softmax(pass.logits);
    Var loss = tape.trace().kl_divergence(tape.trace().constant(p_nat), q, Reduction::kMean);
    return tape.trace().backward(loss).at(pass.input);
  });
}

Tensor single_step_attack(const NetworkState& state, const Tensor& x,
                          const std::vector<int>& y, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  const float radius = cfg.init_radius_factor * cfg.epsilon;
  const Tensor eta =
      cfg.rand_init ? uniform_noise_like(x, radius, rng) : Tensor::zeros_like(x);
  const Tensor start = add(x, eta);

  Tensor g;
  try {
    ModelTape tape(state, /*params_require_grad=*/false);
    auto pass = tape.forward(start, /*input_requires_grad=*/true);
    Var loss = tape.trace().softmax_cross_entropy(pass.logits, y, Reduction::kMean);
    g = tape.trace().backward(loss).at(pass.input);
  } catch (const ValueError& e) {
    throw ValueError(std::string("single_step_attack: non-finite loss or gradient: ") +
                     e.what());
  }

  Tensor delta = add(eta, mul_scalar(sign(g), cfg.step_size));
  if (cfg.project_after_step) {
    delta = clamp(delta, -cfg.epsilon, cfg.epsilon);
  }
  Tensor out = add(x, delta);
  if (cfg.clamp_domain) {
    out = clamp(out, cfg.clamp_domain->first, cfg.clamp_domain->second);
  }
  return out;
}

float cw_margin_loss(const Tensor& logits, const std::vector<int>& labels) {
  return ops::cw_margin(logits, labels, Reduction::kMean).value();
}

}  // namespace iat
