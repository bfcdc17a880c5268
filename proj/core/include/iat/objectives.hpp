#pragma once

#include <string>
#include <vector>

#include "iat/model.hpp"
#include "iat/trace.hpp"

namespace iat {

// Which composite training loss the trainer optimizes. "iat" pairs the plain
// adversarial CE with a KL pull toward the model's output on instance-wise
// inverse examples; "uiat" uses the class-universal bank with momentum
// targets; "uiat-oneoff" freezes the targets captured in one designated
// epoch; "singlestep-uiat" combines a single-step attack with a per-batch
// bank update.
enum class ObjectiveTag {
  kSat,
  kTrades,
  kIat,
  kUiat,
  kUiatOneOff,
  kSinglestepUiat,
};

struct ObjectiveKind {
  ObjectiveTag tag = ObjectiveTag::kSat;
  float lambda = 3.5f;  // weight of the KL-to-target term
  float omega = 6.0f;   // TRADES robustness weight
  // When set, the KL target distribution stays a live tape node instead of
  // being detached to a constant (singlestep-uiat only).
  bool kl_flow_through = false;

  void validate() const;
};

const char* objective_name(ObjectiveTag tag);
ObjectiveTag parse_objective(const std::string& name);

// ---- Scalar loss values (no recording; for reporting and tests) ----

// CE(f(x_hat), y), mean over the batch.
float sat_loss(const NetworkState& state, const Tensor& x_hat,
               const std::vector<int>& y);

// CE(f(x), y) + omega * KL(f(x) || f(x_hat)), softmax outputs on both sides.
float trades_loss(const NetworkState& state, const Tensor& x, const Tensor& x_hat,
                  const std::vector<int>& y, float omega);

// CE(f(x_hat), y) + lambda * KL(p_t || f(x_hat)); p_t is a fixed probability
// target, rows summing to 1 within 1e-5.
float uiat_loss(const NetworkState& state, const Tensor& x_hat,
                const std::vector<int>& y, const Tensor& p_t, float lambda);

// CE(f(x_hat), y) + lambda * KL(f(x_check) || f(x_hat)) where x_check comes
// from applying the universal bank; f(x_check) is evaluated fresh and used as
// the target distribution.
float singlestep_uiat_loss(const NetworkState& state, const Tensor& x_hat,
                           const std::vector<int>& y, const Tensor& x_check,
                           float lambda);

// ---- Tape builders (differentiable composites over recorded passes) ----

// Mean CE over the adversarial pass.
Var build_sat(ModelTape& tape, const ModelTape::Pass& adv,
              const std::vector<int>& y);

// CE on the natural pass plus omega * KL(softmax(nat) || softmax(adv)), both
// sides live. With omega == 0 the loss is exactly the natural CE and adv may
// be null (no adversarial pass is needed at all).
Var build_trades(ModelTape& tape, const ModelTape::Pass& nat,
                 const ModelTape::Pass* adv, const std::vector<int>& y,
                 float omega);

// CE on the adversarial pass plus lambda * KL(target_probs || softmax(adv)),
// with target_probs entering as a constant. With lambda == 0 the KL term is
// not recorded at all, so the loss node is exactly the SAT loss node.
Var build_kl_to_target(ModelTape& tape, const ModelTape::Pass& adv,
                       const std::vector<int>& y, const Tensor& target_probs,
                       float lambda);

// CE on the adversarial pass plus lambda * KL(softmax(inv) || softmax(adv))
// where the inverse pass stays live (gradients flow into both sides).
Var build_kl_flow_through(ModelTape& tape, const ModelTape::Pass& adv,
                          const ModelTape::Pass& inv, const std::vector<int>& y,
                          float lambda);

}  // namespace iat
