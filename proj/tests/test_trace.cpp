#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "iat/errors.hpp"
#include "iat/tensor.hpp"
#include "iat/threads.hpp"
#include "iat/rng.hpp"
#include "iat/trace.hpp"

using iat::Reduction;
using iat::Tensor;
using iat::Trace;

namespace {

Tensor row_probs(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor::from_data({1, n}, std::move(v));
}

}  // namespace

TEST_CASE("matmul kernel oracle") {
  // Hand-computed 2x3 * 3x2.
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = iat::ops::matmul(a, b);
  CHECK(c.data()[0] == 58.0f);   // 1*7+2*9+3*11
  CHECK(c.data()[1] == 64.0f);   // 1*8+2*10+3*12
  CHECK(c.data()[2] == 139.0f);  // 4*7+5*9+6*11
  CHECK(c.data()[3] == 154.0f);
  CHECK_THROWS_AS(iat::ops::matmul(a, a), iat::ShapeError);
}

TEST_CASE("add broadcasts bias over rows and channels") {
  Tensor m = Tensor::from_data({2, 3}, {0, 0, 0, 1, 1, 1});
  Tensor bias = Tensor::from_data({3}, {10, 20, 30});
  Tensor r = iat::ops::add(m, bias);
  CHECK(r.data()[0] == 10.0f);
  CHECK(r.data()[5] == 31.0f);

  Tensor img = Tensor::zeros({1, 2, 2, 2});
  Tensor cb = Tensor::from_data({2}, {1, 2});
  Tensor ri = iat::ops::add(img, cb);
  CHECK(ri.data()[0] == 1.0f);  // channel 0
  CHECK(ri.data()[7] == 2.0f);  // channel 1
}

TEST_CASE("conv2d valid oracle") {
  // 1x1x3x3 input, 1x1x2x2 kernel of ones: each output cell is the window sum.
  Tensor x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor y = iat::ops::conv2d(x, w);
  CHECK(y.dim(2) == 2);
  CHECK(y.data()[0] == 12.0f);  // 1+2+4+5
  CHECK(y.data()[1] == 16.0f);
  CHECK(y.data()[2] == 24.0f);
  CHECK(y.data()[3] == 28.0f);
}

TEST_CASE("relu subgradient at zero is zero") {
  Trace t;
  auto x = t.input(Tensor::from_data({1, 3}, {-1.0f, 0.0f, 2.0f}));
  auto r = t.relu(x);
  auto ones = t.constant(Tensor::from_data({3, 1}, {1, 1, 1}));
  auto s = t.matmul(r, ones);  // scalar [1,1]
  auto g = t.backward(s).at(x);
  CHECK(g.data()[0] == 0.0f);
  CHECK(g.data()[1] == 0.0f);  // exact zero input -> zero gradient
  CHECK(g.data()[2] == 1.0f);
}

TEST_CASE("softmax rows sum to one") {
  Tensor logits = Tensor::from_data({2, 3}, {1000.0f, 1001.0f, 999.0f, -3.0f, 0.0f, 3.0f});
  Tensor p = iat::ops::softmax(logits);
  for (int r = 0; r < 2; ++r) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += p.data()[r * 3 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Large shifts do not overflow thanks to the max subtraction.
  CHECK(std::isfinite(p.data()[0]));
}

TEST_CASE("cross entropy closed form") {
  // Uniform logits over C classes: CE = ln C.
  Tensor logits = Tensor::zeros({1, 4});
  float ce = iat::ops::softmax_cross_entropy(logits, {2}, Reduction::kMean).value();
  CHECK(ce == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // Two examples, mean vs batch-sum reduction.
  Tensor two = Tensor::zeros({2, 4});
  float mean = iat::ops::softmax_cross_entropy(two, {0, 1}, Reduction::kMean).value();
  float sum = iat::ops::softmax_cross_entropy(two, {0, 1}, Reduction::kBatchSum).value();
  CHECK(sum == doctest::Approx(2.0 * mean).epsilon(1e-6));
}

TEST_CASE("kl divergence clamps and matches the closed form") {
  // KL([.5,.5] || [1,0]) with q clamped at 1e-12:
  //   .5*(ln .5 - ln 1) + .5*(ln .5 - ln 1e-12) = ln .5 + .5*ln 1e12
  double expected = std::log(0.5) + 0.5 * 12.0 * std::log(10.0);  // 13.1224...
  float kl = iat::ops::kl_divergence(row_probs({0.5f, 0.5f}), row_probs({1.0f, 0.0f}),
                                     Reduction::kMean)
                 .value();
  CHECK(kl == doctest::Approx(expected).epsilon(1e-5));

  // KL(p || p) = 0.
  float self_kl = iat::ops::kl_divergence(row_probs({0.3f, 0.7f}), row_probs({0.3f, 0.7f}),
                                          Reduction::kMean)
                      .value();
  CHECK(self_kl == doctest::Approx(0.0).epsilon(1e-7));

  // Rows must be normalized.
  CHECK_THROWS_AS(iat::ops::kl_divergence(row_probs({0.6f, 0.6f}), row_probs({0.5f, 0.5f}),
                                          Reduction::kMean),
                  iat::ValueError);
}

TEST_CASE("l1 feature distance reductions") {
  Tensor a = Tensor::from_data({2, 2}, {0, 0, 1, 1});
  Tensor b = Tensor::from_data({2, 2}, {1, 3, 1, 5});
  // Row means over D=2: (1+3)/2 = 2 and (0+4)/2 = 2.
  float mean = iat::ops::l1_feature_distance(a, b, Reduction::kMean).value();
  CHECK(mean == doctest::Approx(2.0).epsilon(1e-6));
  float sum = iat::ops::l1_feature_distance(a, b, Reduction::kBatchSum).value();
  CHECK(sum == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("cw margin picks the best wrong class, smallest index on ties") {
  Tensor logits = Tensor::from_data({2, 3}, {5, 1, 3, 2, 2, 2});
  // Row 0, y=0: max wrong = 3 (class 2), margin 3-5 = -2.
  // Row 1, y=1: all equal, max wrong = 2, margin 0.
  float m = iat::ops::cw_margin(logits, {0, 1}, Reduction::kMean).value();
  CHECK(m == doctest::Approx((-2.0 + 0.0) / 2.0).epsilon(1e-6));
}

TEST_CASE("loss reductions are permutation invariant") {
  iat::Rng rng(7);
  std::vector<float> vals(8 * 5);
  for (auto& v : vals) v = rng.uniform(-3.0f, 3.0f);
  std::vector<int> labels(8);
  for (auto& l : labels) l = static_cast<int>(rng.below(5));

  Tensor logits = Tensor::from_data({8, 5}, vals);
  float base = iat::ops::softmax_cross_entropy(logits, labels, Reduction::kMean).value();

  // Reverse the batch order.
  std::vector<float> rev(vals.size());
  std::vector<int> rlabels(8);
  for (int i = 0; i < 8; ++i) {
    rlabels[i] = labels[7 - i];
    for (int c = 0; c < 5; ++c) rev[i * 5 + c] = vals[(7 - i) * 5 + c];
  }
  float perm = iat::ops::softmax_cross_entropy(Tensor::from_data({8, 5}, rev), rlabels,
                                               Reduction::kMean)
                   .value();
  CHECK(std::fabs(base - perm) <= 1e-5f);
}

TEST_CASE("batch-sum per-example gradients match single-example runs bitwise") {
  iat::Rng rng(11);
  std::vector<float> vals(4 * 3);
  for (auto& v : vals) v = rng.uniform(-2.0f, 2.0f);
  std::vector<int> labels = {2, 0, 1, 1};
  Tensor logits = Tensor::from_data({4, 3}, vals);

  Trace t;
  auto lv = t.input(logits);
  auto loss = t.softmax_cross_entropy(lv, labels, Reduction::kBatchSum);
  Tensor g = t.backward(loss).at(lv);

  for (int i = 0; i < 4; ++i) {
    std::vector<float> row(vals.begin() + i * 3, vals.begin() + (i + 1) * 3);
    Trace ti;
    auto lvi = ti.input(Tensor::from_data({1, 3}, row));
    auto li = ti.softmax_cross_entropy(lvi, {labels[i]}, Reduction::kBatchSum);
    Tensor gi = ti.backward(li).at(lvi);
    for (int c = 0; c < 3; ++c) {
      CHECK(g.data()[i * 3 + c] == gi.data()[c]);  // bitwise
    }
  }
}

TEST_CASE("backward requires a scalar root of the same trace") {
  Trace t;
  auto x = t.input(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(t.backward(x), iat::ShapeError);

  Trace other;
  auto ox = other.input(Tensor::zeros({1, 1}));
  CHECK_THROWS_AS(t.backward(ox), iat::Error);
}

TEST_CASE("unreached leaves report zero gradients") {
  Trace t;
  auto x = t.input(Tensor::from_data({1, 1}, {3.0f}));
  auto y = t.input(Tensor::from_data({1, 1}, {4.0f}));
  auto s = t.scale(x, 2.0f);
  auto g = t.backward(s);
  CHECK(g.at(x).value() == 2.0f);
  CHECK(g.at(y).value() == 0.0f);
}

TEST_CASE("constants receive no gradient flow but fan-out accumulates") {
  Trace t;
  auto x = t.input(Tensor::from_data({1, 1}, {1.5f}));
  auto doubled = t.add(x, x);  // fan-out of x
  auto g = t.backward(doubled);
  CHECK(g.at(x).value() == 2.0f);
}

TEST_CASE("replay matches recomputes every node bitwise") {
  iat::Rng rng(3);
  std::vector<float> xv(6), wv(12);
  for (auto& v : xv) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : wv) v = rng.uniform(-1.0f, 1.0f);

  Trace t;
  auto x = t.input(Tensor::from_data({2, 3}, xv));
  auto w = t.input(Tensor::from_data({3, 4}, wv));
  auto h = t.relu(t.matmul(x, w));
  auto p = t.softmax(h);
  auto loss = t.kl_divergence(p, p, Reduction::kMean);
  (void)loss;
  CHECK(t.replay_matches());
}

TEST_CASE("pass counters track forwards and backwards") {
  iat::PassCounters::reset();
  CHECK(iat::PassCounters::forwards() == 0);
  iat::PassCounters::count_forward();
  iat::PassCounters::count_forward();
  iat::PassCounters::count_backward();
  CHECK(iat::PassCounters::forwards() == 2);
  CHECK(iat::PassCounters::backwards() == 1);
  iat::PassCounters::reset();
  CHECK(iat::PassCounters::backwards() == 0);
}

TEST_CASE("kernels are invariant to the worker cap") {
  iat::Rng rng(19);
  std::vector<float> xv(16 * 8), wv(8 * 8);
  for (auto& v : xv) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : wv) v = rng.uniform(-1.0f, 1.0f);
  Tensor x = Tensor::from_data({16, 8}, xv);
  Tensor w = Tensor::from_data({8, 8}, wv);

  iat::set_max_threads(1);
  Tensor serial = iat::ops::matmul(x, w);
  iat::set_max_threads(4);
  Tensor parallel = iat::ops::matmul(x, w);
  iat::set_max_threads(1);
  CHECK(iat::bitwise_equal(serial, parallel));
}
