// Microbenchmarks at the library's working scale: forward/backward on the
// two-moons MLP, one PGD attack batch, and one full training step.

#include <benchmark/benchmark.h>

#include "iat/attacks.hpp"
#include "iat/datasets.hpp"
#include "iat/inverse.hpp"
#include "iat/model.hpp"
#include "iat/objectives.hpp"
#include "iat/rng.hpp"
#include "iat/trainer.hpp"

namespace {

iat::NetworkSpec moons_spec() {
  iat::NetworkSpec spec;
  spec.kind = iat::ArchKind::kMlp;
  spec.input_shape = {2};
  spec.hidden = {64, 64};
  spec.classes = 2;
  return spec;
}

struct Fixture {
  iat::Dataset data = iat::two_moons(128, 0.1f, 7);
  iat::NetworkState state = iat::init_network(moons_spec(), 42);
  iat::Tensor x;
  std::vector<int> y;

  Fixture() {
    std::vector<std::size_t> idx(128);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    x = data.gather(idx);
    y = data.gather_labels(idx);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Forward(benchmark::State& bench) {
  auto& f = fixture();
  for (auto _ : bench) {
    auto out = iat::forward(f.state, f.x);
    benchmark::DoNotOptimize(out.logits);
  }
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& bench) {
  auto& f = fixture();
  for (auto _ : bench) {
    iat::ModelTape tape(f.state, true);
    auto pass = tape.forward(f.x, false);
    auto loss = tape.trace().softmax_cross_entropy(pass.logits, f.y, iat::Reduction::kMean);
    auto grads = tape.trace().backward(loss);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_Pgd10(benchmark::State& bench) {
  auto& f = fixture();
  iat::AttackConfig cfg;
  cfg.epsilon = 0.1f;
  cfg.step_size = 0.025f;
  cfg.steps = 10;
  std::uint64_t n = 0;
  for (auto _ : bench) {
    iat::Rng rng(iat::mix_seed(1, ++n));
    auto adv = iat::pgd_attack(f.state, f.x, f.y, cfg, rng);
    benchmark::DoNotOptimize(adv);
  }
}
BENCHMARK(BM_Pgd10);

void BM_UniversalUpdate(benchmark::State& bench) {
  auto& f = fixture();
  iat::InverseConfig cfg;
  cfg.epsilon = 0.05f;
  cfg.step_size = 0.05f;
  cfg.beta = 0.0f;
  iat::UniversalBank bank(f.data.classes, f.data.example_shape(), cfg.epsilon, 3);
  for (auto _ : bench) {
    auto res = iat::universal_update(bank, f.state, f.x, f.y, nullptr, cfg);
    benchmark::DoNotOptimize(res.target_probs);
  }
}
BENCHMARK(BM_UniversalUpdate);

void BM_TrainEpoch(benchmark::State& bench) {
  auto& f = fixture();
  iat::TrainConfig cfg;
  cfg.objective.tag = iat::ObjectiveTag::kUiat;
  cfg.attack.epsilon = 0.1f;
  cfg.attack.step_size = 0.025f;
  cfg.attack.steps = 10;
  cfg.inverse.epsilon = 0.05f;
  cfg.inverse.step_size = 0.05f;
  cfg.epochs = 1;
  cfg.batch_size = 128;
  for (auto _ : bench) {
    auto result = iat::train(f.data, f.state.spec, cfg);
    benchmark::DoNotOptimize(result.state);
  }
}
BENCHMARK(BM_TrainEpoch);

}  // namespace

BENCHMARK_MAIN();
