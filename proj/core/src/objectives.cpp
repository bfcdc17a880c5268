#include "iat/objectives.hpp"

namespace iat {

void ObjectiveKind::validate() const {
  if (!(lambda >= 0.0f)) throw ValueError("objective: lambda must be >= 0");
  if (!(omega >= 0.0f)) throw ValueError("objective: omega must be >= 0");
  if (kl_flow_through && tag != ObjectiveTag::kSinglestepUiat) {
    throw ValueError("objective: kl_flow_through applies to singlestep-uiat only");
  }
}

const char* objective_name(ObjectiveTag tag) {
  switch (tag) {
    case ObjectiveTag::kSat: return "sat";
    case ObjectiveTag::kTrades: return "trades";
    case ObjectiveTag::kIat: return "iat";
    case ObjectiveTag::kUiat: return "uiat";
    case ObjectiveTag::kUiatOneOff: return "uiat-oneoff";
    case ObjectiveTag::kSinglestepUiat: return "singlestep-uiat";
  }
  throw ValueError("objective: unknown tag");
}

ObjectiveTag parse_objective(const std::string& name) {
  if (name == "sat") return ObjectiveTag::kSat;
  if (name == "trades") return ObjectiveTag::kTrades;
  if (name == "iat") return ObjectiveTag::kIat;
  if (name == "uiat") return ObjectiveTag::kUiat;
  if (name == "uiat-oneoff") return ObjectiveTag::kUiatOneOff;
  if (name == "singlestep-uiat") return ObjectiveTag::kSinglestepUiat;
  throw ValueError("objective: unknown name '" + name + "'");
}

float sat_loss(const NetworkState& state, const Tensor& x_hat,
               const std::vector<int>& y) {
  auto out = forward(state, x_hat);
  return ops::softmax_cross_entropy(out.logits, y, Reduction::kMean).value();
}

float trades_loss(const NetworkState& state, const Tensor& x, const Tensor& x_hat,
                  const std::vector<int>& y, float omega) {
  if (!(omega >= 0.0f)) throw ValueError("trades_loss: omega must be >= 0");
  auto nat = forward(state, x);
  float loss = ops::softmax_cross_entropy(nat.logits, y, Reduction::kMean).value();
  if (omega != 0.0f) {
    auto adv = forward(state, x_hat);
    const Tensor p = ops::softmax(nat.logits);
    const Tensor q = ops::softmax(adv.logits);
    loss += omega * ops::kl_divergence(p, q, Reduction::kMean).value();
  }
  return loss;
}

float uiat_loss(const NetworkState& state, const Tensor& x_hat,
                const std::vector<int>& y, const Tensor& p_t, float lambda) {
  if (!(lambda >= 0.0f)) throw ValueError("uiat_loss: lambda must be >= 0");
  auto adv = forward(state, x_hat);
  float loss = ops::softmax_cross_entropy(adv.logits, y, Reduction::kMean).value();
  if (lambda != 0.0f) {
    const Tensor q = ops::softmax(adv.logits);
    loss += lambda * ops::kl_divergence(p_t, q, Reduction::kMean).value();
  }
  return loss;
}

float singlestep_uiat_loss(const NetworkState& state, const Tensor& x_hat,
                           const std::vector<int>& y, const Tensor& x_check,
                           float lambda) {
  if (!(lambda >= 0.0f)) throw ValueError("singlestep_uiat_loss: lambda must be >= 0");
  auto adv = forward(state, x_hat);
  float loss = ops::softmax_cross_entropy(adv.logits, y, Reduction::kMean).value();
  if (lambda != 0.0f) {
    auto inv = forward(state, x_check);
    const Tensor p = ops::softmax(inv.logits);
    const Tensor q = ops::softmax(adv.logits);
    loss += lambda * ops::kl_divergence(p, q, Reduction::kMean).value();
  }
  return loss;
}

Var build_sat(ModelTape& tape, const ModelTape::Pass& adv,
              const std::vector<int>& y) {
  return tape.trace().softmax_cross_entropy(adv.logits, y, Reduction::kMean);
}

Var build_trades(ModelTape& tape, const ModelTape::Pass& nat,
                 const ModelTape::Pass* adv, const std::vector<int>& y,
                 float omega) {
  if (!(omega >= 0.0f)) throw ValueError("build_trades: omega must be >= 0");
  Trace& t = tape.trace();
  Var ce = t.softmax_cross_entropy(nat.logits, y, Reduction::kMean);
  if (omega == 0.0f) return ce;
  if (adv == nullptr) {
    throw ValueError("build_trades: adversarial pass required when omega > 0");
  }
  Var p = t.softmax(nat.logits);
  Var q = t.softmax(adv->logits);
  Var kl = t.kl_divergence(p, q, Reduction::kMean);
  return t.add(ce, t.scale(kl, omega));
}

Var build_kl_to_target(ModelTape& tape, const ModelTape::Pass& adv,
                       const std::vector<int>& y, const Tensor& target_probs,
                       float lambda) {
  if (!(lambda >= 0.0f)) throw ValueError("build_kl_to_target: lambda must be >= 0");
  Trace& t = tape.trace();
  Var ce = t.softmax_cross_entropy(adv.logits, y, Reduction::kMean);
  if (lambda == 0.0f) return ce;
  Var p = t.constant(target_probs);
  Var q = t.softmax(adv.logits);
  Var kl = t.kl_divergence(p, q, Reduction::kMean);
  return t.add(ce, t.scale(kl, lambda));
}

Var build_kl_flow_through(ModelTape& tape, const ModelTape::Pass& adv,
                          const ModelTape::Pass& inv, const std::vector<int>& y,
                          float lambda) {
  if (!(lambda >= 0.0f)) throw ValueError("build_kl_flow_through: lambda must be >= 0");
  Trace& t = tape.trace();
  Var ce = t.softmax_cross_entropy(adv.logits, y, Reduction::kMean);
  if (lambda == 0.0f) return ce;
  Var p = t.softmax(inv.logits);
  Var q = t.softmax(adv.logits);
  Var kl = t.kl_divergence(p, q, Reduction::kMean);
  return t.add(ce, t.scale(kl, lambda));
}

}  // namespace iat
