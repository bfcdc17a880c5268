#include "iat/trace.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "iat/threads.hpp"

namespace iat {

namespace {

constexpr float kProbClampLo = 1e-12f;
constexpr float kProbClampHi = 1.0f;

void check_rank2(const Tensor& t, const char* op, const char* arg) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": " + arg + " must be rank-2, got " +
                     t.shape_str());
  }
}

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes,
                  const char* op) {
  if (labels.size() != batch) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValueError(std::string(op) + ": label " + std::to_string(y) +
                       " out of range for " + std::to_string(classes) + " classes");
    }
  }
}

void check_prob_rows(const Tensor& t, const char* op, const char* arg) {
  const std::size_t b = t.dim(0), c = t.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const float v = t[i * c + j];
      if (v < -1e-6f) {
        throw ValueError(std::string(op) + ": " + arg + " row " + std::to_string(i) +
                         " has negative entry");
      }
      s += v;
    }
    if (std::fabs(s - 1.0) > 1e-5) {
      throw ValueError(std::string(op) + ": " + arg + " row " + std::to_string(i) +
                       " sums to " + std::to_string(s) + ", not 1");
    }
  }
}

// Index of max_{i != y} logits[i], smallest index on ties.
std::size_t runner_up_index(const float* row, std::size_t classes, int y) {
  std::size_t best = classes;  // sentinel
  for (std::size_t i = 0; i < classes; ++i) {
    if (static_cast<int>(i) == y) continue;
    if (best == classes || row[i] > row[best]) best = i;
  }
  return best;
}

float reduction_weight(Reduction r, std::size_t batch) {
  return r == Reduction::kMean ? 1.0f / static_cast<float>(batch) : 1.0f;
}

}  // namespace

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul", "lhs");
  check_rank2(b, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dims of " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n, 0.0f);
  const float* pa = a.data();
  const float* pb = b.data();
  parallel_for(m, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      float* po = out.data() + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const float av = pa[i * k + kk];
        const float* pr = pb + kk * n;
        for (std::size_t j = 0; j < n; ++j) po[j] += av * pr[j];
      }
    }
  });
  return Tensor::from_data({m, n}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) {
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::from_data(a.shape(), std::move(out));
  }
  if (b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.dim(1)) {
    const std::size_t rows = a.dim(0), n = a.dim(1);
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + b[j];
    }
    return Tensor::from_data(a.shape(), std::move(out));
  }
  if (b.rank() == 1 && a.rank() == 4 && b.dim(0) == a.dim(1)) {
    const std::size_t bs = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < bs; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float bv = b[ch];
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) out[base + p] = a[base + p] + bv;
      }
    }
    return Tensor::from_data(a.shape(), std::move(out));
  }
  throw ShapeError("add: cannot broadcast " + b.shape_str() + " onto " + a.shape_str());
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: need rank-4 input and kernel, got " + x.shape_str() +
                     " and " + w.shape_str());
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input channels " + x.shape_str() +
                     " do not match kernel " + w.shape_str());
  }
  const std::size_t bs = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (kh > h || kw > wd) {
    throw ShapeError("conv2d: kernel " + w.shape_str() + " larger than map " +
                     x.shape_str());
  }
  const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
  std::vector<float> out(bs * cout * oh * ow, 0.0f);
  const float* px = x.data();
  const float* pw = w.data();
  parallel_for(bs * cout, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      const std::size_t b = t / cout, co = t % cout;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo) {
          float acc = 0.0f;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* xi = px + ((b * cin + ci) * h + y) * wd + xo;
            const float* wi = pw + ((co * cin + ci) * kh) * kw;
            for (std::size_t r = 0; r < kh; ++r) {
              for (std::size_t c = 0; c < kw; ++c) acc += xi[r * wd + c] * wi[r * kw + c];
            }
          }
          out[((b * cout + co) * oh + y) * ow + xo] = acc;
        }
      }
    }
  });
  return Tensor::from_data({bs, cout, oh, ow}, std::move(out));
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("flatten: need rank >= 2, got " + x.shape_str());
  }
  std::size_t rest = 1;
  for (std::size_t i = 1; i < x.rank(); ++i) rest *= x.dim(i);
  return reshape(x, {x.dim(0), rest});
}

Tensor scale(const Tensor& x, float c) {
  if (!std::isfinite(c)) throw ValueError("scale: non-finite factor");
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor softmax(const Tensor& logits) {
  check_rank2(logits, "softmax", "logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (c == 0) throw ShapeError("softmax: zero classes");
  std::vector<float> out(logits.numel());
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = logits.data() + i * c;
    float m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const float e = std::exp(row[j] - m);
      out[i * c + j] = e;
      s += e;
    }
    const float inv = static_cast<float>(1.0 / s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= inv;
  }
  return Tensor::from_data(logits.shape(), std::move(out));
}

std::vector<float> per_example_cross_entropy(const Tensor& logits,
                                             const std::vector<int>& labels) {
  check_rank2(logits, "softmax_cross_entropy", "logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  check_labels(labels, b, c, "softmax_cross_entropy");
  std::vector<float> per(b);
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = logits.data() + i * c;
    float m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    per[i] = m + static_cast<float>(std::log(s)) - row[labels[i]];
  }
  return per;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Reduction r) {
  const std::vector<float> per = per_example_cross_entropy(logits, labels);
  double s = 0.0;
  for (float v : per) s += v;
  if (r == Reduction::kMean) s /= static_cast<double>(per.size());
  return Tensor::scalar(static_cast<float>(s));
}

Tensor kl_divergence(const Tensor& p, const Tensor& q, Reduction r) {
  check_rank2(p, "kl_divergence", "p");
  check_rank2(q, "kl_divergence", "q");
  if (!p.same_shape(q)) {
    throw ShapeError("kl_divergence: shapes " + p.shape_str() + " and " +
                     q.shape_str() + " differ");
  }
  check_prob_rows(p, "kl_divergence", "p");
  check_prob_rows(q, "kl_divergence", "q");
  const std::size_t b = p.dim(0), c = p.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const float pv = p[i * c + j];
      const float pc = std::clamp(pv, kProbClampLo, kProbClampHi);
      const float qc = std::clamp(q[i * c + j], kProbClampLo, kProbClampHi);
      row += static_cast<double>(pv) * (std::log(pc) - std::log(qc));
    }
    total += row;
  }
  if (r == Reduction::kMean) total /= static_cast<double>(b);
  return Tensor::scalar(static_cast<float>(total));
}

Tensor l1_feature_distance(const Tensor& a, const Tensor& b, Reduction r) {
  check_rank2(a, "l1_feature_distance", "a");
  if (!a.same_shape(b)) {
    throw ShapeError("l1_feature_distance: shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
  }
  const std::size_t batch = a.dim(0), d = a.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += std::fabs(a[i] - b[i]);
  total /= static_cast<double>(d);
  if (r == Reduction::kMean) total /= static_cast<double>(batch);
  return Tensor::scalar(static_cast<float>(total));
}

Tensor cw_margin(const Tensor& logits, const std::vector<int>& labels, Reduction r) {
  check_rank2(logits, "cw_margin", "logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (c < 2) throw ShapeError("cw_margin: needs at least 2 classes");
  check_labels(labels, b, c, "cw_margin");
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = logits.data() + i * c;
    const std::size_t best = runner_up_index(row, c, labels[i]);
    total += static_cast<double>(row[best]) - row[labels[i]];
  }
  if (r == Reduction::kMean) total /= static_cast<double>(b);
  return Tensor::scalar(static_cast<float>(total));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Trace

namespace {
std::atomic<std::uint64_t> g_next_trace_id{1};
std::atomic<std::uint64_t> g_forward_passes{0};
std::atomic<std::uint64_t> g_backward_passes{0};
}  // namespace

void PassCounters::reset() {
  g_forward_passes.store(0);
  g_backward_passes.store(0);
}
std::uint64_t PassCounters::forwards() { return g_forward_passes.load(); }
std::uint64_t PassCounters::backwards() { return g_backward_passes.load(); }
void PassCounters::count_forward() { g_forward_passes.fetch_add(1); }
void PassCounters::count_backward() { g_backward_passes.fetch_add(1); }

Trace::Trace() : id_(g_next_trace_id.fetch_add(1)) {}

std::int32_t Trace::check(Var v, const char* op) const {
  if (v.trace_id != id_ || v.node < 0 ||
      static_cast<std::size_t>(v.node) >= nodes_.size()) {
    throw Error(std::string(op) + ": var does not belong to this trace");
  }
  return v.node;
}

Var Trace::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Trace::input(Tensor v) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(v);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Trace::constant(Tensor v) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(v);
  n.requires_grad = false;
  return push(std::move(n));
}

Var Trace::matmul(Var a, Var b) {
  const auto ia = check(a, "matmul"), ib = check(b, "matmul");
  Node n;
  n.kind = OpKind::kMatmul;
  n.a = ia;
  n.b = ib;
  n.value = ops::matmul(nodes_[ia].value, nodes_[ib].value);
  n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
  return push(std::move(n));
}

Var Trace::add(Var a, Var b) {
  const auto ia = check(a, "add"), ib = check(b, "add");
  Node n;
  n.kind = OpKind::kAdd;
  n.a = ia;
  n.b = ib;
  n.value = ops::add(nodes_[ia].value, nodes_[ib].value);
  n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
  return push(std::move(n));
}

Var Trace::conv2d(Var x, Var w) {
  const auto ix = check(x, "conv2d"), iw = check(w, "conv2d");
  Node n;
  n.kind = OpKind::kConv2d;
  n.a = ix;
  n.b = iw;
  n.value = ops::conv2d(nodes_[ix].value, nodes_[iw].value);
  n.requires_grad = nodes_[ix].requires_grad || nodes_[iw].requires_grad;
  return push(std::move(n));
}

Var Trace::relu(Var x) {
  const auto ix = check(x, "relu");
  Node n;
  n.kind = OpKind::kRelu;
  n.a = ix;
  n.value = ops::relu(nodes_[ix].value);
  n.requires_grad = nodes_[ix].requires_grad;
  return push(std::move(n));
}

Var Trace::flatten(Var x) {
  const auto ix = check(x, "flatten");
  Node n;
  n.kind = OpKind::kFlatten;
  n.a = ix;
  n.value = ops::flatten(nodes_[ix].value);
  n.requires_grad = nodes_[ix].requires_grad;
  return push(std::move(n));
}

Var Trace::scale(Var x, float c) {
  const auto ix = check(x, "scale");
  Node n;
  n.kind = OpKind::kScale;
  n.a = ix;
  n.scalar = c;
  n.value = ops::scale(nodes_[ix].value, c);
  n.requires_grad = nodes_[ix].requires_grad;
  return push(std::move(n));
}

Var Trace::softmax(Var logits) {
  const auto il = check(logits, "softmax");
  Node n;
  n.kind = OpKind::kSoftmax;
  n.a = il;
  n.value = ops::softmax(nodes_[il].value);
  n.requires_grad = nodes_[il].requires_grad;
  return push(std::move(n));
}

Var Trace::softmax_cross_entropy(Var logits, std::vector<int> labels, Reduction r) {
  const auto il = check(logits, "softmax_cross_entropy");
  Node n;
  n.kind = OpKind::kSoftmaxCrossEntropy;
  n.a = il;
  n.reduction = r;
  n.labels = std::make_shared<const std::vector<int>>(std::move(labels));
  n.value = ops::softmax_cross_entropy(nodes_[il].value, *n.labels, r);
  n.requires_grad = nodes_[il].requires_grad;
  return push(std::move(n));
}

Var Trace::kl_divergence(Var p, Var q, Reduction r) {
  const auto ip = check(p, "kl_divergence"), iq = check(q, "kl_divergence");
  Node n;
  n.kind = OpKind::kKlDivergence;
  n.a = ip;
  n.b = iq;
  n.reduction = r;
  n.value = ops::kl_divergence(nodes_[ip].value, nodes_[iq].value, r);
  n.requires_grad = nodes_[ip].requires_grad || nodes_[iq].requires_grad;
  return push(std::move(n));
}

Var Trace::l1_feature_distance(Var a, Var b, Reduction r) {
  const auto ia = check(a, "l1_feature_distance"), ib = check(b, "l1_feature_distance");
  Node n;
  n.kind = OpKind::kL1FeatureDistance;
  n.a = ia;
  n.b = ib;
  n.reduction = r;
  n.value = ops::l1_feature_distance(nodes_[ia].value, nodes_[ib].value, r);
  n.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
  return push(std::move(n));
}

Var Trace::cw_margin(Var logits, std::vector<int> labels, Reduction r) {
  const auto il = check(logits, "cw_margin");
  Node n;
  n.kind = OpKind::kCwMargin;
  n.a = il;
  n.reduction = r;
  n.labels = std::make_shared<const std::vector<int>>(std::move(labels));
  n.value = ops::cw_margin(nodes_[il].value, *n.labels, r);
  n.requires_grad = nodes_[il].requires_grad;
  return push(std::move(n));
}

const Tensor& Trace::value(Var v) const { return nodes_[check(v, "value")].value; }

Tensor GradientMap::at(Var v) const {
  if (!trace_ || v.trace_id != trace_id_) {
    throw Error("GradientMap::at: var does not belong to the traced graph");
  }
  const Tensor& g = grads_[static_cast<std::size_t>(v.node)];
  if (!g.empty()) return g;
  return Tensor::zeros_like(trace_->value(v));
}

GradientMap Trace::backward(Var root) const {
  const std::int32_t r = check(root, "backward");
  if (nodes_[r].value.numel() != 1) {
    throw ShapeError("backward: root has shape " + nodes_[r].value.shape_str() +
                     ", expected a scalar");
  }
  PassCounters::count_backward();

  std::vector<std::vector<float>> grad(nodes_.size());
  auto buf = [&](std::int32_t i) -> std::vector<float>& {
    auto& g = grad[static_cast<std::size_t>(i)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(i)].value.numel(), 0.0f);
    return g;
  };
  buf(r)[0] = 1.0f;

  for (std::int32_t i = r; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto& g = grad[static_cast<std::size_t>(i)];
    if (g.empty() || !n.requires_grad) continue;
    const bool need_a = n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].requires_grad;
    const bool need_b = n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].requires_grad;
    if (!need_a && !need_b) continue;
    const Tensor& va = n.a >= 0 ? nodes_[static_cast<std::size_t>(n.a)].value : Tensor();
    const Tensor& vb = n.b >= 0 ? nodes_[static_cast<std::size_t>(n.b)].value : Tensor();

    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        break;
      case OpKind::kMatmul: {
        const std::size_t m = va.dim(0), k = va.dim(1), nn = vb.dim(1);
        if (need_a) {
          auto& da = buf(n.a);
          const float* pb = vb.data();
          parallel_for(m, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t ii = lo; ii < hi; ++ii) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                float acc = 0.0f;
                const float* pr = pb + kk * nn;
                for (std::size_t j = 0; j < nn; ++j) acc += g[ii * nn + j] * pr[j];
                da[ii * k + kk] += acc;
              }
            }
          });
        }
        if (need_b) {
          auto& db = buf(n.b);
          const float* pa = va.data();
          parallel_for(k, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t kk = lo; kk < hi; ++kk) {
              for (std::size_t ii = 0; ii < m; ++ii) {
                const float av = pa[ii * k + kk];
                for (std::size_t j = 0; j < nn; ++j) db[kk * nn + j] += av * g[ii * nn + j];
              }
            }
          });
        }
        break;
      }
      case OpKind::kAdd: {
        if (need_a) {
          auto& da = buf(n.a);
          for (std::size_t e = 0; e < g.size(); ++e) da[e] += g[e];
        }
        if (need_b) {
          auto& db = buf(n.b);
          if (vb.same_shape(va)) {
            for (std::size_t e = 0; e < g.size(); ++e) db[e] += g[e];
          } else if (va.rank() == 2) {
            const std::size_t rows = va.dim(0), nn = va.dim(1);
            for (std::size_t j = 0; j < nn; ++j) {
              float acc = 0.0f;
              for (std::size_t ii = 0; ii < rows; ++ii) acc += g[ii * nn + j];
              db[j] += acc;
            }
          } else {  // [B,C,H,W] + [C]
            const std::size_t bs = va.dim(0), c = va.dim(1), hw = va.dim(2) * va.dim(3);
            for (std::size_t ch = 0; ch < c; ++ch) {
              float acc = 0.0f;
              for (std::size_t ii = 0; ii < bs; ++ii) {
                const std::size_t base = (ii * c + ch) * hw;
                for (std::size_t p = 0; p < hw; ++p) acc += g[base + p];
              }
              db[ch] += acc;
            }
          }
        }
        break;
      }
      case OpKind::kConv2d: {
        const std::size_t bs = va.dim(0), cin = va.dim(1), h = va.dim(2), wd = va.dim(3);
        const std::size_t cout = vb.dim(0), kh = vb.dim(2), kw = vb.dim(3);
        const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
        if (need_a) {
          auto& dx = buf(n.a);
          const float* pw = vb.data();
          parallel_for(bs * cin, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t t = lo; t < hi; ++t) {
              const std::size_t b = t / cin, ci = t % cin;
              for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < wd; ++x) {
                  float acc = 0.0f;
                  for (std::size_t co = 0; co < cout; ++co) {
                    for (std::size_t r = 0; r < kh; ++r) {
                      if (y < r || y - r >= oh) continue;
                      for (std::size_t c = 0; c < kw; ++c) {
                        if (x < c || x - c >= ow) continue;
                        acc += g[((b * cout + co) * oh + (y - r)) * ow + (x - c)] *
                               pw[((co * cin + ci) * kh + r) * kw + c];
                      }
                    }
                  }
                  dx[((b * cin + ci) * h + y) * wd + x] += acc;
                }
              }
            }
          });
        }
        if (need_b) {
          auto& dw = buf(n.b);
          const float* px = va.data();
          parallel_for(cout * cin, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t t = lo; t < hi; ++t) {
              const std::size_t co = t / cin, ci = t % cin;
              for (std::size_t r = 0; r < kh; ++r) {
                for (std::size_t c = 0; c < kw; ++c) {
                  float acc = 0.0f;
                  for (std::size_t b = 0; b < bs; ++b) {
                    for (std::size_t y = 0; y < oh; ++y) {
                      const float* xr = px + ((b * cin + ci) * h + (y + r)) * wd + c;
                      const float* gr = g.data() + ((b * cout + co) * oh + y) * ow;
                      for (std::size_t x = 0; x < ow; ++x) acc += xr[x] * gr[x];
                    }
                  }
                  dw[((co * cin + ci) * kh + r) * kw + c] += acc;
                }
              }
            }
          });
        }
        break;
      }
      case OpKind::kRelu: {
        auto& dx = buf(n.a);
        for (std::size_t e = 0; e < g.size(); ++e) {
          if (va[e] > 0.0f) dx[e] += g[e];  // relu'(0) = 0
        }
        break;
      }
      case OpKind::kFlatten: {
        auto& dx = buf(n.a);
        for (std::size_t e = 0; e < g.size(); ++e) dx[e] += g[e];
        break;
      }
      case OpKind::kScale: {
        auto& dx = buf(n.a);
        for (std::size_t e = 0; e < g.size(); ++e) dx[e] += n.scalar * g[e];
        break;
      }
      case OpKind::kSoftmax: {
        auto& dl = buf(n.a);
        const Tensor& p = n.value;
        const std::size_t b = p.dim(0), c = p.dim(1);
        for (std::size_t ii = 0; ii < b; ++ii) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            dot += static_cast<double>(g[ii * c + j]) * p[ii * c + j];
          }
          for (std::size_t j = 0; j < c; ++j) {
            dl[ii * c + j] +=
                p[ii * c + j] * (g[ii * c + j] - static_cast<float>(dot));
          }
        }
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        auto& dl = buf(n.a);
        const Tensor p = ops::softmax(va);
        const std::size_t b = va.dim(0), c = va.dim(1);
        const float w = g[0] * reduction_weight(n.reduction, b);
        const auto& y = *n.labels;
        for (std::size_t ii = 0; ii < b; ++ii) {
          for (std::size_t j = 0; j < c; ++j) {
            const float onehot = static_cast<int>(j) == y[ii] ? 1.0f : 0.0f;
            dl[ii * c + j] += w * (p[ii * c + j] - onehot);
          }
        }
        break;
      }
      case OpKind::kKlDivergence: {
        const std::size_t b = va.dim(0), c = va.dim(1);
        const float w = g[0] * reduction_weight(n.reduction, b);
        for (std::size_t e = 0; e < b * c; ++e) {
          const float pv = va[e];
          const float qv = vb[e];
          const float pc = std::clamp(pv, kProbClampLo, kProbClampHi);
          const float qc = std::clamp(qv, kProbClampLo, kProbClampHi);
          if (need_a) {
            // d/dp [p (ln p~ - ln q~)]; the clamp derivative is 0 outside
            // (lo, hi), so the +1 term only appears when p is unclamped.
            const bool open = pv > kProbClampLo && pv < kProbClampHi;
            buf(n.a)[e] += w * (std::log(pc) - std::log(qc) + (open ? 1.0f : 0.0f));
          }
          if (need_b) {
            const bool open = qv > kProbClampLo && qv < kProbClampHi;
            if (open) buf(n.b)[e] += -w * pv / qc;
          }
        }
        break;
      }
      case OpKind::kL1FeatureDistance: {
        const std::size_t b = va.dim(0), d = va.dim(1);
        const float w =
            g[0] / static_cast<float>(d) * reduction_weight(n.reduction, b);
        for (std::size_t e = 0; e < b * d; ++e) {
          const float diff = va[e] - vb[e];
          const float s = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
          if (need_a) buf(n.a)[e] += w * s;
          if (need_b) buf(n.b)[e] -= w * s;
        }
        break;
      }
      case OpKind::kCwMargin: {
        auto& dl = buf(n.a);
        const std::size_t b = va.dim(0), c = va.dim(1);
        const float w = g[0] * reduction_weight(n.reduction, b);
        const auto& y = *n.labels;
        for (std::size_t ii = 0; ii < b; ++ii) {
          const std::size_t best = runner_up_index(va.data() + ii * c, c, y[ii]);
          dl[ii * c + best] += w;
          dl[ii * c + static_cast<std::size_t>(y[ii])] -= w;
        }
        break;
      }
    }
  }

  GradientMap out;
  out.trace_ = this;
  out.trace_id_ = id_;
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!grad[i].empty()) {
      out.grads_[i] = Tensor::from_data(nodes_[i].value.shape(), std::move(grad[i]));
    }
  }
  return out;
}

Tensor Trace::recompute(const Node& n) const {
  const Tensor& va = n.a >= 0 ? nodes_[static_cast<std::size_t>(n.a)].value : Tensor();
  const Tensor& vb = n.b >= 0 ? nodes_[static_cast<std::size_t>(n.b)].value : Tensor();
  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return n.value;
    case OpKind::kMatmul:
      return ops::matmul(va, vb);
    case OpKind::kAdd:
      return ops::add(va, vb);
    case OpKind::kConv2d:
      return ops::conv2d(va, vb);
    case OpKind::kRelu:
      return ops::relu(va);
    case OpKind::kFlatten:
      return ops::flatten(va);
    case OpKind::kScale:
      return ops::scale(va, n.scalar);
    case OpKind::kSoftmax:
      return ops::softmax(va);
    case OpKind::kSoftmaxCrossEntropy:
      return ops::softmax_cross_entropy(va, *n.labels, n.reduction);
    case OpKind::kKlDivergence:
      return ops::kl_divergence(va, vb, n.reduction);
    case OpKind::kL1FeatureDistance:
      return ops::l1_feature_distance(va, vb, n.reduction);
    case OpKind::kCwMargin:
      return ops::cw_margin(va, *n.labels, n.reduction);
  }
  throw Error("replay: unknown op kind");
}

bool Trace::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kLeaf || n.kind == OpKind::kConstant) continue;
    if (!bitwise_equal(recompute(n), n.value)) return false;
  }
  return true;
}

}  // namespace iat
