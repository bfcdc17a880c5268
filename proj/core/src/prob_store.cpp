#include "iat/prob_store.hpp"

#include <cmath>
#include <fstream>

namespace iat {

ProbStore::ProbStore(Mode mode, float gamma, int momentum_start, int oneoff_epoch,
                     std::size_t dataset_size, std::size_t classes)
    : mode_(mode),
      gamma_(gamma),
      momentum_start_(momentum_start),
      oneoff_epoch_(oneoff_epoch),
      classes_(classes),
      store_(dataset_size),
      written_epoch_(dataset_size, -1) {
  if (!(gamma >= 0.0f && gamma <= 1.0f)) {
    throw ValueError("ProbStore: gamma must be in [0,1]");
  }
  if (classes < 2) throw ValueError("ProbStore: need at least 2 classes");
  if (mode == Mode::kMomentum && momentum_start < 0) {
    throw ValueError("ProbStore: momentum start epoch must be >= 0");
  }
  if (mode == Mode::kOneOff && oneoff_epoch < 0) {
    throw ValueError("ProbStore: one-off epoch must be >= 0");
  }
}

void ProbStore::check_index(std::size_t idx) const {
  if (idx >= store_.size()) throw ValueError("ProbStore: index out of range");
}

void ProbStore::check_probs(const std::vector<float>& p, const char* what) const {
  if (p.size() != classes_) {
    throw ValueError(std::string("ProbStore: ") + what + " has wrong length");
  }
  double sum = 0.0;
  for (float v : p) {
    if (!(v >= -1e-6f && v <= 1.0f + 1e-6f)) {
      throw ValueError(std::string("ProbStore: ") + what + " entry outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-5) {
    throw ValueError(std::string("ProbStore: ") + what + " does not sum to 1");
  }
}

std::vector<float> ProbStore::momentum_target(std::size_t idx,
                                              const std::vector<float>& current,
                                              int epoch) {
  if (mode_ != Mode::kMomentum) {
    throw ValueError("ProbStore: momentum_target called in one-off mode");
  }
  check_index(idx);
  check_probs(current, "current");
  // Before the blend starts (and on a degenerate epoch-0 start, where there
  // is no history yet) the current prediction is both target and seed.
  if (epoch < momentum_start_ || epoch == 0) {
    store_[idx] = current;
    written_epoch_[idx] = epoch;
    return current;
  }
  if (!store_[idx].has_value()) {
    throw ValueError("ProbStore: no stored vector for index " + std::to_string(idx) +
                     " at epoch " + std::to_string(epoch) +
                     " (store must be written every epoch)");
  }
  const std::vector<float>& prev = *store_[idx];
  std::vector<float> blended(classes_);
  for (std::size_t c = 0; c < classes_; ++c) {
    blended[c] = gamma_ * prev[c] + (1.0f - gamma_) * current[c];
  }
  store_[idx] = blended;
  written_epoch_[idx] = epoch;
  return blended;
}

std::vector<float> ProbStore::oneoff_target(
    std::size_t idx, int epoch, const std::vector<float>& natural_probs,
    const std::function<std::vector<float>()>& inverse_probs_provider) {
  if (mode_ != Mode::kOneOff) {
    throw ValueError("ProbStore: oneoff_target called in momentum mode");
  }
  check_index(idx);
  if (epoch < oneoff_epoch_) {
    check_probs(natural_probs, "natural");
    return natural_probs;
  }
  if (epoch == oneoff_epoch_) {
    if (!store_[idx].has_value()) {
      std::vector<float> p = inverse_probs_provider();
      check_probs(p, "inverse");
      store_[idx] = std::move(p);
      written_epoch_[idx] = epoch;
    }
    return *store_[idx];
  }
  if (!store_[idx].has_value()) {
    throw ValueError("ProbStore: no one-off vector for index " + std::to_string(idx) +
                     " at epoch " + std::to_string(epoch) +
                     " (capture epoch was skipped)");
  }
  return *store_[idx];
}

bool ProbStore::has(std::size_t idx) const {
  check_index(idx);
  return store_[idx].has_value();
}

const std::vector<float>& ProbStore::stored(std::size_t idx) const {
  check_index(idx);
  if (!store_[idx].has_value()) {
    throw ValueError("ProbStore: no stored vector for index " + std::to_string(idx));
  }
  return *store_[idx];
}

void ProbStore::dump_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out << "index,epoch";
  for (std::size_t c = 0; c < classes_; ++c) out << ",p" << c;
  out << "\n";
  for (std::size_t i = 0; i < store_.size(); ++i) {
    if (!store_[i].has_value()) continue;
    out << i << "," << written_epoch_[i];
    for (float v : *store_[i]) out << "," << v;
    out << "\n";
  }
}

int scaled_momentum_start(int epochs) {
  if (epochs < 1) throw ValueError("scaled_momentum_start: epochs must be >= 1");
  return static_cast<int>(std::lround(0.75 * epochs));
}

int scaled_oneoff_epoch(int epochs) {
  if (epochs < 1) throw ValueError("scaled_oneoff_epoch: epochs must be >= 1");
  int e = static_cast<int>(std::lround(0.80 * epochs));
  return e < epochs ? e : epochs - 1;
}

}  // namespace iat
