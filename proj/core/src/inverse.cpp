#include "iat/inverse.hpp"

#include <cmath>
#include <string>

#include "iat/trace.hpp"

namespace iat {

void InverseConfig::validate() const {
  if (epsilon < 0.0f || !std::isfinite(epsilon)) {
    throw ValueError("InverseConfig: epsilon must be >= 0");
  }
  if (step_size < 0.0f || !std::isfinite(step_size)) {
    throw ValueError("InverseConfig: step_size must be >= 0");
  }
  if (steps < 0) throw ValueError("InverseConfig: steps must be >= 0");
  if (!std::isfinite(beta)) throw ValueError("InverseConfig: beta must be finite");
  if (clamp_domain && clamp_domain->first > clamp_domain->second) {
    throw ValueError("InverseConfig: empty clamp domain");
  }
}

UniversalBank::UniversalBank(std::size_t classes,
                             const std::vector<std::size_t>& input_shape, float epsilon,
                             std::uint64_t seed)
    : epsilon_(epsilon), init_seed_(seed) {
  if (classes < 2) throw ValueError("UniversalBank: need at least 2 classes");
  if (epsilon < 0.0f || !std::isfinite(epsilon)) {
    throw ValueError("UniversalBank: epsilon must be >= 0");
  }
  Rng rng(mix_seed(seed, streams::kBankInit));
  zs_.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<float> data(shape_numel(input_shape));
    for (float& v : data) v = 0.001f * rng.normal();
    // The init noise is tiny; the projection only matters for degenerate
    // epsilon, but it keeps the ball invariant unconditional.
    zs_.push_back(clamp(Tensor::from_data(input_shape, std::move(data)), -epsilon_, epsilon_));
  }
}

UniversalBank::UniversalBank(std::vector<Tensor> zs, float epsilon, std::uint64_t seed)
    : zs_(std::move(zs)), epsilon_(epsilon), init_seed_(seed) {
  if (zs_.size() < 2) throw ValueError("UniversalBank: need at least 2 classes");
  if (!in_ball()) throw ValueError("UniversalBank: perturbation outside the ball");
}

void UniversalBank::set_z(std::size_t c, Tensor z) {
  if (!z.same_shape(zs_.at(c))) {
    throw ShapeError("UniversalBank::set_z: shape " + z.shape_str() + " != " +
                     zs_[c].shape_str());
  }
  for (std::size_t i = 0; i < z.numel(); ++i) {
    if (std::fabs(z[i]) > epsilon_) {
      throw ValueError("UniversalBank::set_z: perturbation outside the ball");
    }
  }
  zs_[c] = std::move(z);
}

bool UniversalBank::in_ball() const {
  for (const Tensor& z : zs_) {
    for (std::size_t i = 0; i < z.numel(); ++i) {
      if (std::fabs(z[i]) > epsilon_) return false;
    }
  }
  return true;
}

namespace {

void check_xhat(const Tensor* x_hat, const Tensor& x, float beta, const char* who) {
  if (beta != 0.0f && x_hat == nullptr) {
    throw ValueError(std::string(who) + ": beta != 0 requires adversarial examples");
  }
  if (x_hat && !x_hat->same_shape(x)) {
    throw ShapeError(std::string(who) + ": adversarial batch " + x_hat->shape_str() +
                     " does not match " + x.shape_str());
  }
}

// CE + beta * (L1(F(xc), F(x)) - L1(F(xc), F(xhat))), with the reference
// features entering as constants. kBatchSum keeps every example's gradient
// row independent of the rest of the batch.
Var generation_loss(ModelTape& tape, const ModelTape::Pass& pass,
                    const std::vector<int>& y, const Tensor* f_x, const Tensor* f_xhat,
                    float beta, Reduction r) {
  Trace& tr = tape.trace();
  Var loss = tr.softmax_cross_entropy(pass.logits, y, r);
  if (beta != 0.0f) {
    Var pull = tr.l1_feature_distance(pass.features, tr.constant(*f_x), r);
    Var push = tr.l1_feature_distance(pass.features, tr.constant(*f_xhat), r);
    Var triplet = tr.add(pull, tr.scale(push, -1.0f));
    loss = tr.add(loss, tr.scale(triplet, beta));
  }
  return loss;
}

}  // namespace

float inverse_loss(const NetworkState& state, const Tensor& x_check, const Tensor& x,
                   const Tensor* x_hat, const std::vector<int>& y, float beta) {
  if (!x_check.same_shape(x)) {
    throw ShapeError("inverse_loss: x_check " + x_check.shape_str() + " does not match x " +
                     x.shape_str());
  }
  check_xhat(x_hat, x, beta, "inverse_loss");
  const ForwardOutput out = forward(state, x_check);
  float loss = ops::softmax_cross_entropy(out.logits, y, Reduction::kMean).value();
  if (beta != 0.0f) {
    const Tensor f_x = forward(state, x).features;
    const Tensor f_xhat = forward(state, *x_hat).features;
    const float pull =
        ops::l1_feature_distance(out.features, f_x, Reduction::kMean).value();
    const float push =
        ops::l1_feature_distance(out.features, f_xhat, Reduction::kMean).value();
    loss += beta * (pull - push);
  }
  return loss;
}

Tensor instance_inverse(const NetworkState& state, const Tensor& x,
                        const std::vector<int>& y, const Tensor* x_hat,
                        const InverseConfig& cfg, Rng& rng) {
  cfg.validate();
  check_xhat(x_hat, x, cfg.beta, "instance_inverse");

  Tensor f_x, f_xhat;
  if (cfg.beta != 0.0f) {
    f_x = forward(state, x).features;
    f_xhat = forward(state, *x_hat).features;
  }

  std::vector<float> noise(x.numel());
  for (float& v : noise) v = 0.001f * rng.normal();
  Tensor xc = clamp_box(add(x, Tensor::from_data(x.shape(), std::move(noise))), x,
                        cfg.epsilon, std::nullopt);

  for (int it = 0; it < cfg.steps; ++it) {
    Tensor g;
    try {
      ModelTape tape(state, /*params_require_grad=*/false);
      auto pass = tape.forward(xc, /*input_requires_grad=*/true);
      Var loss = generation_loss(tape, pass, y, &f_x, &f_xhat, cfg.beta,
                                 Reduction::kBatchSum);
      g = tape.trace().backward(loss).at(pass.input);
    } catch (const ValueError& e) {
      throw ValueError("instance_inverse: non-finite loss or gradient at iteration " +
                       std::to_string(it) + ": " + e.what());
    }
    xc = clamp_box(sub(xc, mul_scalar(sign(g), cfg.step_size)), x, cfg.epsilon,
                   std::nullopt);
  }
  if (cfg.clamp_domain) {
    xc = clamp(xc, cfg.clamp_domain->first, cfg.clamp_domain->second);
  }
  return xc;
}

Tensor apply_universal(const Tensor& x, const std::vector<int>& y,
                       const UniversalBank& bank,
                       std::optional<std::pair<float, float>> domain) {
  const std::size_t b = x.dim(0);
  const std::size_t per = x.numel() / b;
  if (y.size() != b) {
    throw ShapeError("apply_universal: " + std::to_string(y.size()) +
                     " labels for batch of " + std::to_string(b));
  }
  std::vector<float> out(x.numel());
  for (std::size_t j = 0; j < b; ++j) {
    if (y[j] < 0 || static_cast<std::size_t>(y[j]) >= bank.classes()) {
      throw ValueError("apply_universal: label " + std::to_string(y[j]) +
                       " outside the bank");
    }
    const Tensor& z = bank.z(static_cast<std::size_t>(y[j]));
    if (z.numel() != per) {
      throw ShapeError("apply_universal: bank shape " + z.shape_str() +
                       " does not match example shape");
    }
    for (std::size_t i = 0; i < per; ++i) {
      float v = x[j * per + i] + z[i];
      if (domain) {
        v = v < domain->first ? domain->first : (v > domain->second ? domain->second : v);
      }
      out[j * per + i] = v;
    }
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

UniversalUpdateResult universal_update(UniversalBank& bank, const NetworkState& state,
                                       const Tensor& x, const std::vector<int>& y,
                                       const Tensor* x_hat, const InverseConfig& cfg) {
  cfg.validate();
  check_xhat(x_hat, x, cfg.beta, "universal_update");
  const std::size_t b = x.dim(0);
  const std::size_t per = x.numel() / b;

  // x_j + z_{y_j}; gradients with respect to z_c are the per-example input
  // gradients summed over the examples of class c.
  const Tensor xc = apply_universal(x, y, bank, std::nullopt);

  Tensor f_x, f_xhat;
  if (cfg.beta != 0.0f) {
    f_x = forward(state, x).features;
    f_xhat = forward(state, *x_hat).features;
  }

  ModelTape tape(state, /*params_require_grad=*/false);
  auto pass = tape.forward(xc, /*input_requires_grad=*/true);
  Var loss =
      generation_loss(tape, pass, y, &f_x, &f_xhat, cfg.beta, Reduction::kBatchSum);
  const Tensor g = tape.trace().backward(loss).at(pass.input);

  for (std::size_t c = 0; c < bank.classes(); ++c) {
    std::vector<float> gc(per, 0.0f);
    bool present = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (static_cast<std::size_t>(y[j]) != c) continue;
      present = true;
      for (std::size_t i = 0; i < per; ++i) gc[i] += g[j * per + i];
    }
    if (!present) continue;
    const Tensor& z = bank.z(c);
    std::vector<float> zn(per);
    for (std::size_t i = 0; i < per; ++i) {
      const float s = gc[i] > 0.0f ? 1.0f : (gc[i] < 0.0f ? -1.0f : 0.0f);
      float v = z[i] - cfg.step_size * s;
      v = v < -cfg.epsilon ? -cfg.epsilon : (v > cfg.epsilon ? cfg.epsilon : v);
      zn[i] = v;
    }
    bank.set_z(c, Tensor::from_data(z.shape(), std::move(zn)));
  }

  UniversalUpdateResult result;
  if (cfg.post_update_targets) {
    const Tensor xc_new = apply_universal(x, y, bank, std::nullopt);
    result.target_probs = ops::softmax(forward(state, xc_new).logits);
  } else {
    result.target_probs = ops::softmax(tape.trace().value(pass.logits));
  }
  return result;
}

}  // namespace iat
