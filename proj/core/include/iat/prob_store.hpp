#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iat/errors.hpp"

namespace iat {

// Per-example probability targets keyed by stable dataset index. Two modes:
//
//  * momentum: before epoch T the target is the current prediction (which is
//    also stored so epoch T has a history to blend with); from epoch T on the
//    target is gamma * stored + (1 - gamma) * current, and the blend replaces
//    the stored vector.
//  * one-off: before epoch T' the target is the natural prediction; at T' a
//    provider computes the inverse-example prediction exactly once per index,
//    which is stored and returned unchanged at every later epoch.
//
// Epochs are 0-based throughout.
class ProbStore {
 public:
  enum class Mode { kMomentum, kOneOff };

  ProbStore(Mode mode, float gamma, int momentum_start, int oneoff_epoch,
            std::size_t dataset_size, std::size_t classes);

  std::vector<float> momentum_target(std::size_t idx,
                                     const std::vector<float>& current,
                                     int epoch);

  std::vector<float> oneoff_target(
      std::size_t idx, int epoch, const std::vector<float>& natural_probs,
      const std::function<std::vector<float>()>& inverse_probs_provider);

  Mode mode() const { return mode_; }
  float gamma() const { return gamma_; }
  int momentum_start() const { return momentum_start_; }
  int oneoff_epoch() const { return oneoff_epoch_; }
  std::size_t size() const { return store_.size(); }
  std::size_t classes() const { return classes_; }
  bool has(std::size_t idx) const;
  const std::vector<float>& stored(std::size_t idx) const;

  // Audit dump: one row per stored vector, "index,epoch,p0,p1,...", where
  // epoch is the epoch that last wrote the row.
  void dump_csv(const std::string& path) const;

 private:
  void check_index(std::size_t idx) const;
  void check_probs(const std::vector<float>& p, const char* what) const;

  Mode mode_;
  float gamma_;
  int momentum_start_;
  int oneoff_epoch_;
  std::size_t classes_;
  std::vector<std::optional<std::vector<float>>> store_;
  std::vector<int> written_epoch_;
};

// Default schedule positions for a given epoch budget: the momentum blend
// starts at round(0.75 * epochs) and the one-off capture happens at
// round(0.80 * epochs), matching the reference 75 / 80 out of 100.
int scaled_momentum_start(int epochs);
int scaled_oneoff_epoch(int epochs);

}  // namespace iat
