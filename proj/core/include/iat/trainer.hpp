#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iat/attacks.hpp"
#include "iat/datasets.hpp"
#include "iat/inverse.hpp"
#include "iat/model.hpp"
#include "iat/objectives.hpp"
#include "iat/prob_store.hpp"

namespace iat {

struct TrainConfig {
  ObjectiveKind objective;
  AttackConfig attack;    // training-time adversary
  InverseConfig inverse;  // inverse-example generation
  int epochs = 40;
  std::size_t batch_size = 128;
  float peak_lr = 0.1f;
  float weight_decay = 5e-4f;
  float momentum = 0.9f;     // Nesterov factor
  float gamma = 0.9f;        // target-momentum blend factor
  int momentum_start = -1;   // epoch the blend starts; -1 = round(0.75*epochs)
  int oneoff_epoch = -1;     // capture epoch for one-off targets; -1 = round(0.80*epochs)
  std::uint64_t seed = 42;
  int checkpoint_every = 0;  // epochs between sink calls; 0 disables

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  float lr = 0.0f;  // learning rate of the epoch's first iteration
  float train_nat_acc = 0.0f;
  float train_rob_acc = 0.0f;
  float loss = 0.0f;  // batch-size-weighted mean of the step loss
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

// CSV with header epoch,lr,train_nat_acc,train_rob_acc,loss,seconds.
void write_report_csv(const TrainReport& report, const std::string& path);

struct TrainResult {
  NetworkState state;
  TrainReport report;
  std::optional<UniversalBank> bank;  // objectives that keep a bank return it
};

using CheckpointSink =
    std::function<void(int epoch, const NetworkState& state, const UniversalBank* bank)>;

// One-cycle triangular schedule: 0 -> peak over the first half of all
// iterations, peak -> 0 over the second half. iteration 0 gives 0.
float cyclic_lr(std::size_t iteration, std::size_t total_iterations, float peak);

// In-place Nesterov SGD update:
//   g  <- grad + weight_decay * param
//   v' <- momentum * v + g
//   p' <- p - rate * (g + momentum * v')
// velocity must hold one tensor per parameter (zeros on the first call).
void sgd_nesterov_step(NetworkState& state, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, float rate, float momentum,
                       float weight_decay);

// Runs the configured training loop from a fresh He initialization seeded by
// cfg.seed. Fully deterministic in (spec, cfg): shuffling, attack noise, and
// inverse noise each draw from their own per-(epoch, batch) stream. Throws
// DivergenceError naming the epoch and batch if any loss, gradient, or
// parameter update turns non-finite.
TrainResult train(const Dataset& data, const NetworkSpec& spec, const TrainConfig& cfg,
                  const CheckpointSink& sink = nullptr);

}  // namespace iat
