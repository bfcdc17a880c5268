#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "iat/tensor.hpp"

namespace iat {

// How a per-example loss vector is reduced over the batch. kMean divides by
// the batch size; kBatchSum adds the per-example values unscaled. kBatchSum
// keeps per-example gradients bit-identical to the single-example case, which
// the universal-perturbation update relies on.
enum class Reduction { kMean, kBatchSum };

// Pure forward kernels. Shape-checked, deterministic, and independent of the
// worker cap; traced ops call exactly these.
namespace ops {

// [M,K] x [K,N] -> [M,N]. Each output cell is a serial dot product in k
// order, so a row's result does not depend on the other rows.
Tensor matmul(const Tensor& a, const Tensor& b);

// Same-shape add, or bias broadcast: [B,N]+[N] over rows, [B,C,H,W]+[C] over
// channels.
Tensor add(const Tensor& a, const Tensor& b);

// x [B,Cin,H,W], w [Cout,Cin,kh,kw] -> [B,Cout,H-kh+1,W-kw+1].
// Stride 1, no padding.
Tensor conv2d(const Tensor& x, const Tensor& w);

Tensor relu(const Tensor& x);

// [B, ...] -> [B, prod(rest)], zero-copy.
Tensor flatten(const Tensor& x);

Tensor scale(const Tensor& x, float c);

// Row-wise softmax of [B,C] logits, max-shifted for stability.
Tensor softmax(const Tensor& logits);

// Stabilized log-sum-exp cross-entropy of [B,C] logits against integer
// labels; scalar output under the given reduction.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Reduction r);

// The per-example values behind softmax_cross_entropy; used for ranking.
std::vector<float> per_example_cross_entropy(const Tensor& logits,
                                             const std::vector<int>& labels);

// KL(p || q) over [B,C] probability rows: sum_c p_c * (ln p~_c - ln q~_c)
// with p~, q~ clamped to [1e-12, 1] inside the logs. Rows of both inputs
// must sum to 1 within 1e-5.
Tensor kl_divergence(const Tensor& p, const Tensor& q, Reduction r);

// Mean absolute difference of [B,D] feature rows. kMean averages over B*D;
// kBatchSum averages over D within a row and sums the rows.
Tensor l1_feature_distance(const Tensor& a, const Tensor& b, Reduction r);

// Margin loss over [B,C] logits: mean/sum over rows of
// (max_{i != y} z_i - z_y); ties pick the smallest index.
Tensor cw_margin(const Tensor& logits, const std::vector<int>& labels, Reduction r);

}  // namespace ops

class Trace;

// Handle to a node of one specific Trace.
struct Var {
  std::uint64_t trace_id = 0;
  std::int32_t node = -1;
};

// Gradients produced by Trace::backward. Leaves that the root does not reach
// report zeros. Borrows the trace; use before the trace is destroyed.
class GradientMap {
 public:
  Tensor at(Var v) const;

 private:
  friend class Trace;
  const Trace* trace_ = nullptr;
  std::uint64_t trace_id_ = 0;
  std::vector<Tensor> grads_;
};

// Append-only record of primitive operations. Recording order is a
// topological order, so backward is one reverse sweep with gradient
// accumulation at fan-out points.
class Trace {
 public:
  Trace();
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;
  Trace(Trace&&) = default;
  Trace& operator=(Trace&&) = default;

  // Leaf that receives a gradient (inputs under attack, parameters).
  Var input(Tensor v);
  // Leaf that never receives a gradient (data, detached targets).
  Var constant(Tensor v);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var conv2d(Var x, Var w);
  Var relu(Var x);
  Var flatten(Var x);
  Var scale(Var x, float c);
  Var softmax(Var logits);
  Var softmax_cross_entropy(Var logits, std::vector<int> labels, Reduction r);
  Var kl_divergence(Var p, Var q, Reduction r);
  Var l1_feature_distance(Var a, Var b, Reduction r);
  Var cw_margin(Var logits, std::vector<int> labels, Reduction r);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse-topological sweep from a scalar root. Throws if the root is not a
  // scalar node of this trace.
  GradientMap backward(Var root) const;

  // Re-runs every recorded op on its recorded inputs and compares bitwise.
  bool replay_matches() const;

 private:
  enum class OpKind : std::uint8_t {
    kLeaf,
    kConstant,
    kMatmul,
    kAdd,
    kConv2d,
    kRelu,
    kFlatten,
    kScale,
    kSoftmax,
    kSoftmaxCrossEntropy,
    kKlDivergence,
    kL1FeatureDistance,
    kCwMargin,
  };

  struct Node {
    OpKind kind;
    std::int32_t a = -1;
    std::int32_t b = -1;
    Tensor value;
    bool requires_grad = false;
    float scalar = 0.0f;
    Reduction reduction = Reduction::kMean;
    std::shared_ptr<const std::vector<int>> labels;
  };

  std::int32_t check(Var v, const char* op) const;
  Var push(Node n);
  Tensor recompute(const Node& n) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

// Process-wide structural counters: model forward passes and trace backward
// sweeps. Used to assert per-batch cost bounds.
struct PassCounters {
  static void reset();
  static std::uint64_t forwards();
  static std::uint64_t backwards();
  static void count_forward();
  static void count_backward();
};

}  // namespace iat
