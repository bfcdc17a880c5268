#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iat/datasets.hpp"
#include "iat/evaluator.hpp"
#include "iat/model.hpp"
#include "iat/trainer.hpp"

namespace iat {

// Flat `section.key = value` run configuration. '#' starts a comment; every
// key must be in the published schema; unknown keys are rejected. Negative
// sentinel values mean "derive from the corresponding radius" and are
// resolved by the resolved_* helpers below.
struct RunConfig {
  // dataset
  std::string dataset_kind = "two-moons";  // "two-moons" | "idx"
  std::size_t train_n = 2000;
  std::size_t test_n = 1000;
  float noise_sd = 0.1f;
  std::uint64_t train_data_seed = 101;
  std::uint64_t test_data_seed = 202;
  std::string idx_images;
  std::string idx_labels;
  std::string idx_test_images;
  std::string idx_test_labels;

  // model
  std::string model_kind = "mlp";  // "mlp" | "small-cnn"
  std::vector<std::size_t> hidden = {64, 64};
  std::vector<std::size_t> conv_channels = {8, 16};
  std::size_t dense = 64;

  // objective
  std::string objective = "uiat";
  float lambda = 3.5f;
  float omega = 6.0f;
  bool kl_flow_through = false;

  // train
  int epochs = 40;
  std::size_t batch_size = 128;
  float peak_lr = 0.1f;
  float weight_decay = 5e-4f;
  float momentum = 0.9f;
  float gamma = 0.9f;
  int momentum_start = -1;
  int oneoff_epoch = -1;
  std::uint64_t seed = 42;
  int checkpoint_every = 0;

  // attack (training-time)
  float attack_epsilon = 8.0f / 255.0f;
  float attack_step = -1.0f;  // < 0: epsilon / 4
  int attack_steps = 10;
  bool attack_rand_init = true;
  std::string attack_loss = "ce";      // "ce" | "cw"
  std::string attack_preset = "none";  // "none" | "rs-fgsm" | "n-fgsm"

  // inverse
  float inverse_epsilon = -1.0f;  // < 0: attack_epsilon / 2
  float inverse_step = -1.0f;     // < 0: eps' for universal, eps'/2 instance-wise
  int inverse_steps = 5;
  float beta = 1.0f;
  bool post_update_targets = false;

  // eval
  int eval_steps = 20;
  float eval_step = -1.0f;  // < 0: |epsilon| / 4
  std::uint64_t eval_seed = 1;

  // output
  std::string out_dir = "out";
};

// Parse config text / file; overrides are extra "section.key=value" strings
// applied after the file, in order. Unknown keys or unparsable values throw
// ConfigError naming the offender.
RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// Every schema key with its current value, in schema order — what the CLI
// echoes before running.
std::string effective_config_text(const RunConfig& rc);

// Dataset construction per the dataset.* keys.
Dataset load_train_dataset(const RunConfig& rc);
Dataset load_test_dataset(const RunConfig& rc);

// Model spec with the input shape taken from the dataset.
NetworkSpec network_spec_for(const RunConfig& rc, const Dataset& data);

// Concrete configs with presets applied, sentinels resolved, and the clamp
// domain taken from the dataset.
ObjectiveKind resolved_objective(const RunConfig& rc);
AttackConfig resolved_train_attack(const RunConfig& rc,
                                   const std::optional<std::pair<float, float>>& domain);
InverseConfig resolved_inverse(const RunConfig& rc,
                               const std::optional<std::pair<float, float>>& domain);
TrainConfig resolved_train_config(const RunConfig& rc, const Dataset& data);

// Evaluation templates: PGD at eval_steps for positive radii, CE-only
// inverse descent for negative ones. step_size stays the auto sentinel when
// eval_step < 0 so each grid point resolves it against its own |epsilon|.
AttackConfig resolved_eval_attack(const RunConfig& rc,
                                  const std::optional<std::pair<float, float>>& domain);
InverseConfig resolved_eval_inverse(const RunConfig& rc,
                                    const std::optional<std::pair<float, float>>& domain);

}  // namespace iat
