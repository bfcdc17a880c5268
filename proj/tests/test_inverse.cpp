#include <cmath>
#include <vector>

#include "doctest.h"
#include "iat/errors.hpp"
#include "iat/inverse.hpp"
#include "iat/rng.hpp"
#include "test_util.hpp"

using iat::InverseConfig;
using iat::Tensor;
using iat::UniversalBank;

TEST_CASE("bank starts inside the ball and rejects outside writes") {
  UniversalBank bank(3, {2}, 0.05f, 11);
  CHECK(bank.classes() == 3);
  CHECK(bank.epsilon() == 0.05f);
  CHECK(bank.in_ball());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < bank.z(c).numel(); ++i) {
      CHECK(std::fabs(bank.z(c).data()[i]) <= 0.05f);
    }
  }
  CHECK_THROWS_AS(bank.set_z(0, Tensor::from_data({2}, {0.06f, 0.0f})), iat::ValueError);
  CHECK_NOTHROW(bank.set_z(0, Tensor::from_data({2}, {0.05f, -0.05f})));

  // Deterministic by seed.
  UniversalBank again(3, {2}, 0.05f, 11);
  CHECK(iat::bitwise_equal(again.z(1), bank.z(1)));
}

TEST_CASE("inverse loss reduces to ce when beta is zero") {
  iat::Rng rng(3);
  auto state = testutil::random_affine(rng);
  Tensor x = Tensor::from_data({1, 2}, {0.2f, -0.1f});
  float li = iat::inverse_loss(state, x, x, nullptr, {0}, 0.0f);
  CHECK(li == doctest::Approx(testutil::ce_at(state, x, 0)).epsilon(1e-6));
}

TEST_CASE("inverse loss feature terms have the documented sign") {
  // Moving x_check onto x zeroes the anchor distance, so the beta term is
  // exactly -beta * L1(F(x), F(x_hat)).
  iat::Rng rng(5);
  auto state = testutil::random_affine(rng);
  Tensor x = Tensor::from_data({1, 2}, {0.2f, -0.1f});
  Tensor x_hat = Tensor::from_data({1, 2}, {0.3f, 0.0f});
  float beta = 0.7f;
  float with = iat::inverse_loss(state, x, x, &x_hat, {0}, beta);
  float ce = testutil::ce_at(state, x, 0);
  auto fx = iat::forward(state, x).features;
  auto fh = iat::forward(state, x_hat).features;
  float gap = iat::ops::l1_feature_distance(fx, fh, iat::Reduction::kMean).value();
  CHECK(with == doctest::Approx(ce - beta * gap).epsilon(1e-5));

  // beta > 0 requires the adversarial anchor.
  CHECK_THROWS_AS(iat::inverse_loss(state, x, x, nullptr, {0}, beta), iat::ValueError);
}

TEST_CASE("one large ce-descent step lands exactly on the best corner") {
  // Affine logits: constant gradient sign, so a step of 2.5*eps' from
  // anywhere in the ball clamps onto the CE-minimizing corner bitwise.
  iat::Rng model_rng(814);
  for (int trial = 0; trial < 100; ++trial) {
    auto state = testutil::random_affine(model_rng);
    Tensor x = Tensor::from_data(
        {1, 2}, {model_rng.uniform(-1.0f, 1.0f), model_rng.uniform(-1.0f, 1.0f)});
    int y = static_cast<int>(model_rng.below(2));

    float eps = 0.04f;
    float best = 1e30f;
    Tensor best_corner;
    for (const auto& corner : testutil::box_corners(x, eps)) {
      float ce = testutil::ce_at(state, corner, y);
      if (ce < best) {
        best = ce;
        best_corner = corner;
      }
    }

    InverseConfig cfg;
    cfg.epsilon = eps;
    cfg.step_size = 2.5f * eps;
    cfg.steps = 1;
    cfg.beta = 0.0f;
    cfg.clamp_domain = std::nullopt;
    iat::Rng irng(iat::mix_seed(4, static_cast<std::uint64_t>(trial)));
    Tensor x_check = iat::instance_inverse(state, x, {y}, nullptr, cfg, irng);
    CHECK(iat::bitwise_equal(x_check, best_corner));
  }
}

TEST_CASE("instance inverse rows are independent of batch company") {
  iat::Rng rng(23);
  auto state = testutil::random_affine(rng);
  Tensor batch = Tensor::from_data({2, 2}, {0.1f, 0.2f, -0.4f, 0.3f});
  InverseConfig cfg;
  cfg.epsilon = 0.05f;
  cfg.step_size = 0.0125f;
  cfg.steps = 5;
  cfg.beta = 0.0f;
  cfg.clamp_domain = std::nullopt;

  iat::Rng r1(1001);
  Tensor full = iat::instance_inverse(state, batch, {0, 1}, nullptr, cfg, r1);

  // Same noise stream, same rows: run the two-row batch again and compare.
  iat::Rng r2(1001);
  Tensor again = iat::instance_inverse(state, batch, {0, 1}, nullptr, cfg, r2);
  CHECK(iat::bitwise_equal(full, again));

  // Each row stays within the ball of its own anchor.
  for (std::size_t i = 0; i < full.numel(); ++i) {
    CHECK(std::fabs(full.data()[i] - batch.data()[i]) <= cfg.epsilon + 1e-6f);
  }
}

TEST_CASE("universal update equals a per-example step when classes are singletons") {
  // One example per class: the summed per-class gradient is that example's
  // gradient, so the bank step must match a hand-built single step bitwise.
  iat::Rng rng(97);
  auto state = testutil::random_affine(rng);
  Tensor x = Tensor::from_data({2, 2}, {0.25f, -0.5f, -0.75f, 0.4f});
  std::vector<int> y = {0, 1};

  float eps = 0.03f;
  InverseConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = eps;
  cfg.steps = 1;
  cfg.beta = 0.0f;
  cfg.clamp_domain = std::nullopt;

  UniversalBank bank(2, {2}, eps, 500);
  std::vector<Tensor> z_before = {bank.z(0), bank.z(1)};
  iat::universal_update(bank, state, x, y, nullptr, cfg);

  for (std::size_t c = 0; c < 2; ++c) {
    // Reference: one signed CE-descent step on z_c at the unclamped x + z_c.
    std::vector<float> row = {x.data()[c * 2 + 0], x.data()[c * 2 + 1]};
    Tensor xi = Tensor::from_data({1, 2}, row);
    Tensor seeded = iat::add(xi, iat::reshape(z_before[c], {1, 2}));

    iat::ModelTape tape(state, false);
    auto pass = tape.forward(seeded, true);
    auto loss = tape.trace().softmax_cross_entropy(pass.logits, {y[c]},
                                                   iat::Reduction::kBatchSum);
    Tensor grad = tape.trace().backward(loss).at(pass.input);
    Tensor stepped = iat::sub(iat::reshape(z_before[c], {1, 2}),
                              iat::mul_scalar(iat::sign(grad), cfg.step_size));
    Tensor projected = iat::clamp(stepped, -eps, eps);
    CHECK(iat::bitwise_equal(iat::reshape(bank.z(c), {1, 2}), projected));
  }
  CHECK(bank.in_ball());
}

TEST_CASE("universal update leaves absent classes untouched") {
  iat::Rng rng(61);
  auto state = testutil::random_affine(rng);
  UniversalBank bank(2, {2}, 0.05f, 7);
  Tensor z1_before = bank.z(1);
  Tensor x = Tensor::from_data({1, 2}, {0.2f, 0.3f});
  InverseConfig cfg;
  cfg.epsilon = 0.05f;
  cfg.step_size = 0.05f;
  cfg.steps = 1;
  cfg.beta = 0.0f;
  cfg.clamp_domain = std::nullopt;
  iat::universal_update(bank, state, x, {0}, nullptr, cfg);
  CHECK(iat::bitwise_equal(bank.z(1), z1_before));
}

TEST_CASE("bank stays in the ball under a randomized update fuzz") {
  iat::Rng rng(333);
  auto state = testutil::random_affine(rng);
  float eps = 0.02f;
  UniversalBank bank(2, {2}, eps, 9);
  InverseConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = 0.015f;
  cfg.steps = 1;
  cfg.beta = 0.0f;
  cfg.clamp_domain = std::nullopt;
  for (int it = 0; it < 200; ++it) {
    std::vector<float> vals = {rng.uniform(-1.0f, 1.0f), rng.uniform(-1.0f, 1.0f),
                               rng.uniform(-1.0f, 1.0f), rng.uniform(-1.0f, 1.0f)};
    Tensor x = Tensor::from_data({2, 2}, vals);
    std::vector<int> y = {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    iat::universal_update(bank, state, x, y, nullptr, cfg);
    REQUIRE(bank.in_ball());
  }
}

TEST_CASE("target probabilities come from the pre-update forward by default") {
  iat::Rng rng(71);
  auto state = testutil::random_affine(rng);
  Tensor x = Tensor::from_data({1, 2}, {0.4f, -0.2f});
  float eps = 0.03f;

  UniversalBank bank(2, {2}, eps, 12);
  Tensor z_before = bank.z(0);
  InverseConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = eps;
  cfg.steps = 1;
  cfg.beta = 0.0f;
  cfg.clamp_domain = std::nullopt;

  auto res = iat::universal_update(bank, state, x, {0}, nullptr, cfg);
  Tensor seeded = iat::add(x, iat::reshape(z_before, {1, 2}));
  Tensor expected = iat::ops::softmax(iat::forward(state, seeded).logits);
  CHECK(iat::bitwise_equal(res.target_probs, expected));

  // With post-update targets the forward is recomputed at the new bank.
  UniversalBank bank2(2, {2}, eps, 12);
  InverseConfig cfg2 = cfg;
  cfg2.post_update_targets = true;
  auto res2 = iat::universal_update(bank2, state, x, {0}, nullptr, cfg2);
  Tensor seeded2 = iat::add(x, iat::reshape(bank2.z(0), {1, 2}));
  Tensor expected2 = iat::ops::softmax(iat::forward(state, seeded2).logits);
  CHECK(iat::bitwise_equal(res2.target_probs, expected2));
}

TEST_CASE("apply_universal adds the class perturbation and clamps the domain") {
  UniversalBank bank(2, {2}, 0.5f, 1);
  bank.set_z(0, Tensor::from_data({2}, {0.5f, -0.5f}));
  bank.set_z(1, Tensor::from_data({2}, {0.0f, 0.25f}));
  Tensor x = Tensor::from_data({2, 2}, {0.8f, 0.3f, 0.5f, 0.9f});
  Tensor out = iat::apply_universal(x, {0, 1}, bank, std::make_pair(0.0f, 1.0f));
  CHECK(out.data()[0] == 1.0f);  // 1.3 clamped
  CHECK(out.data()[1] == 0.0f);  // 0.3 - 0.5 clamped
  CHECK(out.data()[2] == 0.5f);
  CHECK(out.data()[3] == 1.0f);  // 1.15 clamped
}
