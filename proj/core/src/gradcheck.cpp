#include "iat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "iat/inverse.hpp"
#include "iat/model.hpp"
#include "iat/objectives.hpp"
#include "iat/rng.hpp"
#include "iat/tensor.hpp"
#include "iat/trace.hpp"

namespace iat {

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

namespace {

constexpr float kH = 1e-3f;

// One gradient to verify: the analytic tensor against central differences of
// value_at, which re-evaluates the loss with base[k] replaced.
struct SlotCheck {
  std::string op;
  Tensor base;
  Tensor analytic;
  std::function<double(std::size_t, float)> value_at;
};

Tensor rand_uniform(Rng& rng, std::vector<std::size_t> shape, float lo, float hi) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Entries of magnitude in [margin, hi] with random signs; keeps relu and
// sign kinks out of finite-difference reach.
Tensor rand_away_from_zero(Rng& rng, std::vector<std::size_t> shape, float margin,
                           float hi) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) {
    const float m = rng.uniform(margin, hi);
    x = rng.uniform() < 0.5f ? -m : m;
  }
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor set_at(const Tensor& t, std::size_t k, float v) {
  std::vector<float> d(t.data(), t.data() + t.numel());
  d[k] = v;
  return Tensor::from_data(t.shape(), std::move(d));
}

std::vector<int> rand_labels(Rng& rng, std::size_t b, std::size_t c) {
  std::vector<int> y(b);
  for (int& v : y) v = static_cast<int>(rng.below(c));
  return y;
}

// u^T X v: collapses a [M,N] value to a scalar through fixed linear probes so
// any op's output can feed backward().
double probe_value(const Tensor& x, const Tensor& u, const Tensor& v) {
  return ops::matmul(ops::matmul(u, x), v).value();
}

Var probe_var(Trace& t, Var x, const Tensor& u, const Tensor& v) {
  return t.matmul(t.matmul(t.constant(u), x), t.constant(v));
}

struct ProbePair {
  Tensor u;
  Tensor v;
};

ProbePair make_probe(Rng& rng, std::size_t m, std::size_t n) {
  return ProbePair{rand_uniform(rng, {1, m}, -1.0f, 1.0f),
                   rand_uniform(rng, {n, 1}, -1.0f, 1.0f)};
}

// ---- primitive cases ----

void case_matmul(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor a = rand_uniform(rng, {3, 4}, -1.0f, 1.0f);
  const Tensor b = rand_uniform(rng, {4, 2}, -1.0f, 1.0f);
  const ProbePair pr = make_probe(rng, 3, 2);
  Trace t;
  const Var va = t.input(a);
  const Var vb = t.input(b);
  const GradientMap g = t.backward(probe_var(t, t.matmul(va, vb), pr.u, pr.v));
  out.push_back({"matmul", a, g.at(va), [a, b, pr](std::size_t k, float v) {
                   return probe_value(ops::matmul(set_at(a, k, v), b), pr.u, pr.v);
                 }});
  out.push_back({"matmul", b, g.at(vb), [a, b, pr](std::size_t k, float v) {
                   return probe_value(ops::matmul(a, set_at(b, k, v)), pr.u, pr.v);
                 }});
}

void case_add(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor a = rand_uniform(rng, {3, 4}, -1.0f, 1.0f);
  const Tensor b = rand_uniform(rng, {3, 4}, -1.0f, 1.0f);
  const ProbePair pr = make_probe(rng, 3, 4);
  Trace t;
  const Var va = t.input(a);
  const Var vb = t.input(b);
  const GradientMap g = t.backward(probe_var(t, t.add(va, vb), pr.u, pr.v));
  out.push_back({"add", a, g.at(va), [a, b, pr](std::size_t k, float v) {
                   return probe_value(ops::add(set_at(a, k, v), b), pr.u, pr.v);
                 }});
  out.push_back({"add", b, g.at(vb), [a, b, pr](std::size_t k, float v) {
                   return probe_value(ops::add(a, set_at(b, k, v)), pr.u, pr.v);
                 }});
}

void case_add_bias_rows(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_uniform(rng, {3, 4}, -1.0f, 1.0f);
  const Tensor b = rand_uniform(rng, {4}, -1.0f, 1.0f);
  const ProbePair pr = make_probe(rng, 3, 4);
  Trace t;
  const Var vx = t.input(x);
  const Var vb = t.input(b);
  const GradientMap g = t.backward(probe_var(t, t.add(vx, vb), pr.u, pr.v));
  out.push_back({"add_bias_rows", x, g.at(vx), [x, b, pr](std::size_t k, float v) {
                   return probe_value(ops::add(set_at(x, k, v), b), pr.u, pr.v);
                 }});
  out.push_back({"add_bias_rows", b, g.at(vb), [x, b, pr](std::size_t k, float v) {
                   return probe_value(ops::add(x, set_at(b, k, v)), pr.u, pr.v);
                 }});
}

void case_add_bias_channels(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_uniform(rng, {2, 3, 2, 2}, -1.0f, 1.0f);
  const Tensor b = rand_uniform(rng, {3}, -1.0f, 1.0f);
  const ProbePair pr = make_probe(rng, 2, 12);
  Trace t;
  const Var vx = t.input(x);
  const Var vb = t.input(b);
  const GradientMap g = t.backward(probe_var(t, t.flatten(t.add(vx, vb)), pr.u, pr.v));
  const auto value = [x, b, pr](const Tensor& x2, const Tensor& b2) {
    return probe_value(ops::flatten(ops::add(x2, b2)), pr.u, pr.v);
  };
  out.push_back({"add_bias_channels", x, g.at(vx), [x, b, value](std::size_t k, float v) {
                   return value(set_at(x, k, v), b);
                 }});
  out.push_back({"add_bias_channels", b, g.at(vb), [x, b, value](std::size_t k, float v) {
                   return value(x, set_at(b, k, v));
                 }});
}

void case_conv2d(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_uniform(rng, {2, 2, 4, 4}, -1.0f, 1.0f);
  const Tensor w = rand_uniform(rng, {3, 2, 3, 3}, -0.5f, 0.5f);
  const ProbePair pr = make_probe(rng, 2, 12);  // out [2,3,2,2] -> flat [2,12]
  Trace t;
  const Var vx = t.input(x);
  const Var vw = t.input(w);
  const GradientMap g = t.backward(probe_var(t, t.flatten(t.conv2d(vx, vw)), pr.u, pr.v));
  out.push_back({"conv2d", x, g.at(vx), [x, w, pr](std::size_t k, float v) {
                   return probe_value(ops::flatten(ops::conv2d(set_at(x, k, v), w)), pr.u,
                                      pr.v);
                 }});
  out.push_back({"conv2d", w, g.at(vw), [x, w, pr](std::size_t k, float v) {
                   return probe_value(ops::flatten(ops::conv2d(x, set_at(w, k, v))), pr.u,
                                      pr.v);
                 }});
}

void case_relu(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_away_from_zero(rng, {3, 4}, 0.05f, 1.0f);
  const ProbePair pr = make_probe(rng, 3, 4);
  Trace t;
  const Var vx = t.input(x);
  const GradientMap g = t.backward(probe_var(t, t.relu(vx), pr.u, pr.v));
  out.push_back({"relu", x, g.at(vx), [x, pr](std::size_t k, float v) {
                   return probe_value(ops::relu(set_at(x, k, v)), pr.u, pr.v);
                 }});
}

void case_flatten(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_uniform(rng, {2, 3, 2, 2}, -1.0f, 1.0f);
  const ProbePair pr = make_probe(rng, 2, 12);
  Trace t;
  const Var vx = t.input(x);
  const GradientMap g = t.backward(probe_var(t, t.flatten(vx), pr.u, pr.v));
  out.push_back({"flatten", x, g.at(vx), [x, pr](std::size_t k, float v) {
                   return probe_value(ops::flatten(set_at(x, k, v)), pr.u, pr.v);
                 }});
}

void case_scale(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor x = rand_uniform(rng, {3, 4}, -1.0f, 1.0f);
  const float c = 1.7f;
  const ProbePair pr = make_probe(rng, 3, 4);
  Trace t;
  const Var vx = t.input(x);
  const GradientMap g = t.backward(probe_var(t, t.scale(vx, c), pr.u, pr.v));
  out.push_back({"scale", x, g.at(vx), [x, c, pr](std::size_t k, float v) {
                   return probe_value(ops::scale(set_at(x, k, v), c), pr.u, pr.v);
                 }});
}

void case_softmax(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor z = rand_uniform(rng, {3, 4}, -2.0f, 2.0f);
  const ProbePair pr = make_probe(rng, 3, 4);
  Trace t;
  const Var vz = t.input(z);
  const GradientMap g = t.backward(probe_var(t, t.softmax(vz), pr.u, pr.v));
  out.push_back({"softmax", z, g.at(vz), [z, pr](std::size_t k, float v) {
                   return probe_value(ops::softmax(set_at(z, k, v)), pr.u, pr.v);
                 }});
}

void case_cross_entropy(Rng& rng, std::vector<SlotCheck>& out, Reduction r,
                        const char* name) {
  const Tensor z = rand_uniform(rng, {4, 5}, -2.0f, 2.0f);
  const std::vector<int> y = rand_labels(rng, 4, 5);
  Trace t;
  const Var vz = t.input(z);
  const GradientMap g = t.backward(t.softmax_cross_entropy(vz, y, r));
  out.push_back({name, z, g.at(vz), [z, y, r](std::size_t k, float v) {
                   return ops::softmax_cross_entropy(set_at(z, k, v), y, r).value();
                 }});
}

void case_kl_softmax(Rng& rng, std::vector<SlotCheck>& out) {
  // Checked through softmax so every finite-difference evaluation still
  // feeds valid probability rows into the divergence.
  const Tensor a = rand_uniform(rng, {3, 4}, -2.0f, 2.0f);
  const Tensor b = rand_uniform(rng, {3, 4}, -2.0f, 2.0f);
  Trace t;
  const Var va = t.input(a);
  const Var vb = t.input(b);
  const GradientMap g =
      t.backward(t.kl_divergence(t.softmax(va), t.softmax(vb), Reduction::kMean));
  const auto value = [](const Tensor& a2, const Tensor& b2) {
    return ops::kl_divergence(ops::softmax(a2), ops::softmax(b2), Reduction::kMean)
        .value();
  };
  out.push_back({"kl_divergence", a, g.at(va), [a, b, value](std::size_t k, float v) {
                   return value(set_at(a, k, v), b);
                 }});
  out.push_back({"kl_divergence", b, g.at(vb), [a, b, value](std::size_t k, float v) {
                   return value(a, set_at(b, k, v));
                 }});
}

void case_kl_const_target(Rng& rng, std::vector<SlotCheck>& out) {
  const Tensor p = ops::softmax(rand_uniform(rng, {3, 4}, -2.0f, 2.0f));
  const Tensor b = rand_uniform(rng, {3, 4}, -2.0f, 2.0f);
  Trace t;
  const Var vb = t.input(b);
  const GradientMap g =
      t.backward(t.kl_divergence(t.constant(p), t.softmax(vb), Reduction::kMean));
  out.push_back({"kl_const_target", b, g.at(vb), [p, b](std::size_t k, float v) {
                   return ops::kl_divergence(p, ops::softmax(set_at(b, k, v)),
                                             Reduction::kMean)
                       .value();
                 }});
}

void case_l1_distance(Rng& rng, std::vector<SlotCheck>& out, Reduction r,
                      const char* name) {
  const Tensor a = rand_uniform(rng, {3, 6}, -1.0f, 1.0f);
  // Coordinate gaps of at least 0.1 keep |a-b| smooth under the probe.
  const Tensor b = ops::add(a, rand_away_from_zero(rng, {3, 6}, 0.1f, 0.6f));
  Trace t;
  const Var va = t.input(a);
  const Var vb = t.input(b);
  const GradientMap g = t.backward(t.l1_feature_distance(va, vb, r));
  const auto value = [r](const Tensor& a2, const Tensor& b2) {
    return ops::l1_feature_distance(a2, b2, r).value();
  };
  out.push_back({name, a, g.at(va), [a, b, value](std::size_t k, float v) {
                   return value(set_at(a, k, v), b);
                 }});
  out.push_back({name, b, g.at(vb), [a, b, value](std::size_t k, float v) {
                   return value(a, set_at(b, k, v));
                 }});
}

void case_cw_margin(Rng& rng, std::vector<SlotCheck>& out) {
  // Distinct logits spaced at least 0.1 apart so the runner-up index is
  // stable under +-h perturbations.
  const std::size_t bsz = 4, c = 5;
  std::vector<float> vals(bsz * c);
  for (std::size_t j = 0; j < bsz; ++j) {
    float base = rng.uniform(-1.0f, 0.0f);
    std::vector<float> row(c);
    for (std::size_t i = 0; i < c; ++i) {
      base += rng.uniform(0.1f, 0.5f);
      row[i] = base;
    }
    // random placement of the sorted values
    for (std::size_t i = c; i > 1; --i) std::swap(row[i - 1], row[rng.below(i)]);
    std::copy(row.begin(), row.end(), vals.begin() + static_cast<std::ptrdiff_t>(j * c));
  }
  const Tensor z = Tensor::from_data({bsz, c}, std::move(vals));
  const std::vector<int> y = rand_labels(rng, bsz, c);
  Trace t;
  const Var vz = t.input(z);
  const GradientMap g = t.backward(t.cw_margin(vz, y, Reduction::kMean));
  out.push_back({"cw_margin", z, g.at(vz), [z, y](std::size_t k, float v) {
                   return ops::cw_margin(set_at(z, k, v), y, Reduction::kMean).value();
                 }});
}

// ---- composite cases on a tiny MLP ----

// Smallest pre-relu magnitude across the hidden layers; the composites only
// use inputs whose activations clear this margin so relu kinks stay out of
// finite-difference reach.
float mlp_preact_margin(const NetworkState& s, const Tensor& x) {
  float margin = 1e9f;
  Tensor h = x;
  const std::size_t layers = s.params.size() / 2;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const Tensor z = ops::add(ops::matmul(h, s.params[2 * l]), s.params[2 * l + 1]);
    for (std::size_t k = 0; k < z.numel(); ++k) {
      margin = std::min(margin, std::abs(z.data()[k]));
    }
    h = ops::relu(z);
  }
  return margin;
}

// Smallest |fa-fb| over coordinates where the features are not both exactly
// zero (two relu-clamped zeros stay equal under small perturbations).
float feature_gap_margin(const Tensor& fa, const Tensor& fb) {
  float margin = 1e9f;
  for (std::size_t k = 0; k < fa.numel(); ++k) {
    const float a = fa.data()[k];
    const float b = fb.data()[k];
    if (a == 0.0f && b == 0.0f) continue;
    margin = std::min(margin, std::abs(a - b));
  }
  return margin;
}

struct TinySetup {
  NetworkState state;
  Tensor x;        // natural batch
  Tensor x_hat;    // stand-in adversarial batch
  Tensor x_check;  // stand-in inverse batch
  std::vector<int> y;
};

TinySetup sample_tiny(Rng& rng, bool need_feature_gaps) {
  NetworkSpec spec;
  spec.kind = ArchKind::kMlp;
  spec.input_shape = {2};
  spec.hidden = {5, 4};
  spec.classes = 3;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    NetworkState s = init_network(spec, rng.next_u64());
    const Tensor x = rand_uniform(rng, {3, 2}, -1.0f, 1.0f);
    const Tensor x_hat = ops::add(x, rand_uniform(rng, {3, 2}, -0.2f, 0.2f));
    const Tensor x_check = ops::add(x, rand_uniform(rng, {3, 2}, -0.15f, 0.15f));
    if (mlp_preact_margin(s, x) < 0.02f || mlp_preact_margin(s, x_hat) < 0.02f ||
        mlp_preact_margin(s, x_check) < 0.02f) {
      continue;
    }
    if (need_feature_gaps) {
      const Tensor fx = forward(s, x).features;
      const Tensor fxh = forward(s, x_hat).features;
      const Tensor fxc = forward(s, x_check).features;
      if (feature_gap_margin(fxc, fx) < 0.02f || feature_gap_margin(fxc, fxh) < 0.02f) {
        continue;
      }
    }
    return TinySetup{std::move(s), x, x_hat, x_check, rand_labels(rng, 3, 3)};
  }
  throw Error("gradcheck: could not sample a kink-free tiny model");
}

// Adds one slot per parameter tensor, comparing tape gradients against
// finite differences of an untraced loss evaluation.
void add_param_slots(const char* op, const TinySetup& ts,
                     const std::vector<Tensor>& grads,
                     const std::function<double(const NetworkState&)>& loss,
                     std::vector<SlotCheck>& out) {
  for (std::size_t i = 0; i < ts.state.params.size(); ++i) {
    out.push_back({op, ts.state.params[i], grads[i],
                   [ts, i, loss](std::size_t k, float v) {
                     return loss(with_param(ts.state, i, k, v));
                   }});
  }
}

void case_model_ce(Rng& rng, std::vector<SlotCheck>& out) {
  const TinySetup ts = sample_tiny(rng, false);
  ModelTape tape(ts.state, true);
  const ModelTape::Pass pass = tape.forward(ts.x, true);
  const Var loss = build_sat(tape, pass, ts.y);
  const GradientMap g = tape.trace().backward(loss);
  const auto value = [y = ts.y](const NetworkState& s, const Tensor& x) {
    return static_cast<double>(sat_loss(s, x, y));
  };
  out.push_back({"model_ce", ts.x, g.at(pass.input), [ts, value](std::size_t k, float v) {
                   return value(ts.state, set_at(ts.x, k, v));
                 }});
  add_param_slots("model_ce", ts, tape.param_grads(g),
                  [x = ts.x, value](const NetworkState& s) { return value(s, x); }, out);
}

void case_trades(Rng& rng, std::vector<SlotCheck>& out) {
  const TinySetup ts = sample_tiny(rng, false);
  const float omega = 2.0f;
  ModelTape tape(ts.state, true);
  const ModelTape::Pass nat = tape.forward(ts.x, true);
  const ModelTape::Pass adv = tape.forward(ts.x_hat, true);
  const Var loss = build_trades(tape, nat, &adv, ts.y, omega);
  const GradientMap g = tape.trace().backward(loss);
  const auto value = [ts, omega](const NetworkState& s, const Tensor& x,
                                 const Tensor& xh) {
    return static_cast<double>(trades_loss(s, x, xh, ts.y, omega));
  };
  out.push_back({"trades", ts.x, g.at(nat.input), [ts, value](std::size_t k, float v) {
                   return value(ts.state, set_at(ts.x, k, v), ts.x_hat);
                 }});
  out.push_back({"trades", ts.x_hat, g.at(adv.input), [ts, value](std::size_t k, float v) {
                   return value(ts.state, ts.x, set_at(ts.x_hat, k, v));
                 }});
  add_param_slots("trades", ts, tape.param_grads(g),
                  [ts, value](const NetworkState& s) { return value(s, ts.x, ts.x_hat); },
                  out);
}

void case_uiat(Rng& rng, std::vector<SlotCheck>& out) {
  const TinySetup ts = sample_tiny(rng, false);
  const float lambda = 1.5f;
  const Tensor p_t = ops::softmax(rand_uniform(rng, {3, 3}, -2.0f, 2.0f));
  ModelTape tape(ts.state, true);
  const ModelTape::Pass adv = tape.forward(ts.x_hat, true);
  const Var loss = build_kl_to_target(tape, adv, ts.y, p_t, lambda);
  const GradientMap g = tape.trace().backward(loss);
  const auto value = [ts, p_t, lambda](const NetworkState& s, const Tensor& xh) {
    return static_cast<double>(uiat_loss(s, xh, ts.y, p_t, lambda));
  };
  out.push_back({"uiat", ts.x_hat, g.at(adv.input), [ts, value](std::size_t k, float v) {
                   return value(ts.state, set_at(ts.x_hat, k, v));
                 }});
  add_param_slots("uiat", ts, tape.param_grads(g),
                  [ts, value](const NetworkState& s) { return value(s, ts.x_hat); }, out);
}

void case_flow_through(Rng& rng, std::vector<SlotCheck>& out) {
  const TinySetup ts = sample_tiny(rng, false);
  const float lambda = 0.8f;
  ModelTape tape(ts.state, true);
  const ModelTape::Pass adv = tape.forward(ts.x_hat, true);
  const ModelTape::Pass inv = tape.forward(ts.x_check, true);
  const Var loss = build_kl_flow_through(tape, adv, inv, ts.y, lambda);
  const GradientMap g = tape.trace().backward(loss);
  const auto value = [ts, lambda](const NetworkState& s, const Tensor& xh,
                                  const Tensor& xc) {
    return static_cast<double>(singlestep_uiat_loss(s, xh, ts.y, xc, lambda));
  };
  out.push_back({"kl_flow_through", ts.x_hat, g.at(adv.input),
                 [ts, value](std::size_t k, float v) {
                   return value(ts.state, set_at(ts.x_hat, k, v), ts.x_check);
                 }});
  out.push_back({"kl_flow_through", ts.x_check, g.at(inv.input),
                 [ts, value](std::size_t k, float v) {
                   return value(ts.state, ts.x_hat, set_at(ts.x_check, k, v));
                 }});
  add_param_slots(
      "kl_flow_through", ts, tape.param_grads(g),
      [ts, value](const NetworkState& s) { return value(s, ts.x_hat, ts.x_check); }, out);
}

void case_inverse_generation(Rng& rng, std::vector<SlotCheck>& out) {
  const TinySetup ts = sample_tiny(rng, true);
  const float beta = 0.7f;
  const Tensor fx = forward(ts.state, ts.x).features;
  const Tensor fxh = forward(ts.state, ts.x_hat).features;
  ModelTape tape(ts.state, false);
  const ModelTape::Pass pass = tape.forward(ts.x_check, true);
  Trace& t = tape.trace();
  const Var ce = t.softmax_cross_entropy(pass.logits, ts.y, Reduction::kMean);
  const Var pull = t.l1_feature_distance(pass.features, t.constant(fx), Reduction::kMean);
  const Var push = t.l1_feature_distance(pass.features, t.constant(fxh), Reduction::kMean);
  const Var loss = t.add(ce, t.scale(t.add(pull, t.scale(push, -1.0f)), beta));
  const GradientMap g = t.backward(loss);
  out.push_back({"inverse_generation", ts.x_check, g.at(pass.input),
                 [ts, beta](std::size_t k, float v) {
                   return static_cast<double>(inverse_loss(ts.state,
                                                           set_at(ts.x_check, k, v), ts.x,
                                                           &ts.x_hat, ts.y, beta));
                 }});
}

std::vector<SlotCheck> build_all(std::uint64_t seed) {
  std::vector<SlotCheck> checks;
  Rng rng(mix_seed(seed, 0x67636b00));  // gradcheck-local stream
  case_matmul(rng, checks);
  case_add(rng, checks);
  case_add_bias_rows(rng, checks);
  case_add_bias_channels(rng, checks);
  case_conv2d(rng, checks);
  case_relu(rng, checks);
  case_flatten(rng, checks);
  case_scale(rng, checks);
  case_softmax(rng, checks);
  case_cross_entropy(rng, checks, Reduction::kMean, "cross_entropy_mean");
  case_cross_entropy(rng, checks, Reduction::kBatchSum, "cross_entropy_sum");
  case_kl_softmax(rng, checks);
  case_kl_const_target(rng, checks);
  case_l1_distance(rng, checks, Reduction::kMean, "l1_distance_mean");
  case_l1_distance(rng, checks, Reduction::kBatchSum, "l1_distance_sum");
  case_cw_margin(rng, checks);
  case_model_ce(rng, checks);
  case_trades(rng, checks);
  case_uiat(rng, checks);
  case_flow_through(rng, checks);
  case_inverse_generation(rng, checks);
  return checks;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tol,
                                                 const std::string& perturb_op) {
  const std::vector<SlotCheck> checks = build_all(seed);
  std::vector<GradCheckResult> results;
  const auto result_for = [&results](const std::string& op) -> GradCheckResult& {
    for (GradCheckResult& r : results) {
      if (r.op == op) return r;
    }
    results.push_back(GradCheckResult{op, 0.0, true});
    return results.back();
  };

  for (const SlotCheck& ck : checks) {
    GradCheckResult& res = result_for(ck.op);
    const bool perturbed = ck.op == perturb_op;
    for (std::size_t k = 0; k < ck.base.numel(); ++k) {
      const float b = ck.base.data()[k];
      const float bp = b + kH;
      const float bm = b - kH;
      const double fp = ck.value_at(k, bp);
      const double fm = ck.value_at(k, bm);
      const double numeric =
          (fp - fm) / (static_cast<double>(bp) - static_cast<double>(bm));
      double analytic = ck.analytic.data()[k];
      if (perturbed) analytic = analytic * 1.05 + 0.01;  // must be caught
      res.worst_rel_err =
          std::max(res.worst_rel_err, gradcheck_relative_error(analytic, numeric));
    }
  }
  for (GradCheckResult& r : results) r.pass = r.worst_rel_err <= tol;
  return results;
}

}  // namespace iat
