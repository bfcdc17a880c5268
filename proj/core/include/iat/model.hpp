#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iat/tensor.hpp"
#include "iat/trace.hpp"

namespace iat {

enum class ArchKind { kMlp, kSmallCnn };

// Architecture description. Two families:
//   mlp:  dense(hidden[0]) relu ... dense(hidden[k-1]) relu dense(classes)
//   cnn:  conv3x3(conv_channels[0]) relu ... flatten
//         dense(dense[0]) relu ... dense(classes)
// The penultimate activation (input of the final dense layer) is the feature
// vector F(x); at least one hidden layer is required so it exists.
struct NetworkSpec {
  ArchKind kind = ArchKind::kMlp;
  std::vector<std::size_t> input_shape;     // {D} for mlp, {C,H,W} for cnn
  std::vector<std::size_t> hidden;          // mlp widths
  std::vector<std::size_t> conv_channels;   // cnn 3x3 conv output channels
  std::vector<std::size_t> dense;           // cnn dense widths before classifier
  std::size_t classes = 0;

  void validate() const;
  // Width of F(x).
  std::size_t feature_dim() const;
  // Shapes of the parameter tensors in storage order (W, b per layer).
  std::vector<std::vector<std::size_t>> param_shapes() const;
  // Compact text form embedded in checkpoints, e.g.
  // "kind=mlp;input=2;hidden=64,64;classes=2;seed=42" (seed added by the
  // checkpoint writer).
  std::string descriptor() const;
  static NetworkSpec parse_descriptor(const std::string& text, std::uint64_t* seed_out);

  bool operator==(const NetworkSpec&) const = default;
};

struct NetworkState {
  NetworkSpec spec;
  std::vector<Tensor> params;  // same order as spec.param_shapes()
  std::uint64_t init_seed = 0;
};

// He-style init: W ~ N(0, 2/fan_in), biases zero. Deterministic by seed.
NetworkState init_network(const NetworkSpec& spec, std::uint64_t seed);

// Replace one parameter coordinate; used by finite-difference checks.
NetworkState with_param(const NetworkState& s, std::size_t param, std::size_t index,
                        float v);

struct ForwardOutput {
  Tensor features;  // [B, feature_dim]
  Tensor logits;    // [B, classes]
};

// Plain forward pass, no recording. x is [B] + input_shape.
ForwardOutput forward(const NetworkState& state, const Tensor& x);

// Recorded forwards over one trace. Parameters enter the trace once;
// several passes (natural, adversarial, inverse) may share them so a single
// backward yields the combined parameter gradients.
class ModelTape {
 public:
  ModelTape(const NetworkState& state, bool params_require_grad);

  struct Pass {
    Var input;
    Var features;
    Var logits;
  };

  Pass forward(const Tensor& x, bool input_requires_grad);

  Trace& trace() { return trace_; }
  const std::vector<Var>& param_vars() const { return param_vars_; }
  std::vector<Tensor> param_grads(const GradientMap& g) const;

 private:
  const NetworkState* state_;
  Trace trace_;
  std::vector<Var> param_vars_;
};

}  // namespace iat
