#include "iat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "iat/rng.hpp"
#include "iat/trace.hpp"

namespace iat {

void TrainConfig::validate() const {
  objective.validate();
  attack.validate();
  inverse.validate();
  if (epochs < 0) throw ValueError("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
  if (!(peak_lr >= 0.0f) || !std::isfinite(peak_lr)) {
    throw ValueError("TrainConfig: peak_lr must be >= 0");
  }
  if (!(weight_decay >= 0.0f) || !std::isfinite(weight_decay)) {
    throw ValueError("TrainConfig: weight_decay must be >= 0");
  }
  if (!(momentum >= 0.0f && momentum < 1.0f)) {
    throw ValueError("TrainConfig: momentum must be in [0,1)");
  }
  if (!(gamma >= 0.0f && gamma <= 1.0f)) {
    throw ValueError("TrainConfig: gamma must be in [0,1]");
  }
  if (momentum_start < -1) throw ValueError("TrainConfig: bad momentum_start");
  if (oneoff_epoch < -1) throw ValueError("TrainConfig: bad oneoff_epoch");
  if (checkpoint_every < 0) throw ValueError("TrainConfig: bad checkpoint cadence");
}

float cyclic_lr(std::size_t iteration, std::size_t total_iterations, float peak) {
  if (total_iterations == 0) throw ValueError("cyclic_lr: total_iterations must be >= 1");
  if (iteration > total_iterations) throw ValueError("cyclic_lr: iteration out of range");
  if (!(peak >= 0.0f) || !std::isfinite(peak)) {
    throw ValueError("cyclic_lr: peak must be >= 0");
  }
  const double t =
      static_cast<double>(iteration) / static_cast<double>(total_iterations);
  const double f = t <= 0.5 ? 2.0 * t : 2.0 * (1.0 - t);
  return static_cast<float>(peak * f);
}

void sgd_nesterov_step(NetworkState& state, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, float rate, float momentum,
                       float weight_decay) {
  if (grads.size() != state.params.size() || velocity.size() != state.params.size()) {
    throw ShapeError("sgd_nesterov_step: parameter/gradient/velocity count mismatch");
  }
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const Tensor& p = state.params[i];
    if (!p.same_shape(grads[i]) || !p.same_shape(velocity[i])) {
      throw ShapeError("sgd_nesterov_step: shape mismatch at parameter " +
                       std::to_string(i));
    }
    const float* pp = p.data();
    const float* gp = grads[i].data();
    const float* vp = velocity[i].data();
    std::vector<float> nv(p.numel());
    std::vector<float> np(p.numel());
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const float g = gp[k] + weight_decay * pp[k];
      const float v2 = momentum * vp[k] + g;
      nv[k] = v2;
      np[k] = pp[k] - rate * (g + momentum * v2);
    }
    try {
      velocity[i] = Tensor::from_data(p.shape(), std::move(nv));
      state.params[i] = Tensor::from_data(p.shape(), std::move(np));
    } catch (const ValueError& e) {
      throw DivergenceError(std::string("sgd_nesterov_step: non-finite update: ") +
                            e.what());
    }
  }
}

namespace {

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::size_t argmax_row(const float* row, std::size_t c) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < c; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& y) {
  const std::size_t b = logits.dim(0);
  const std::size_t c = logits.dim(1);
  std::size_t n = 0;
  for (std::size_t j = 0; j < b; ++j) {
    if (argmax_row(logits.data() + j * c, c) == static_cast<std::size_t>(y[j])) ++n;
  }
  return n;
}

std::vector<float> probs_row(const Tensor& probs, std::size_t j) {
  const std::size_t c = probs.dim(1);
  return std::vector<float>(probs.data() + j * c, probs.data() + (j + 1) * c);
}

// Runs the per-example momentum blend over a batch of current predictions
// and stacks the targets back into a [B,C] tensor.
Tensor blend_targets(ProbStore& store, const Tensor& current,
                     const std::vector<std::size_t>& idx, int epoch) {
  const std::size_t b = current.dim(0);
  const std::size_t c = current.dim(1);
  std::vector<float> tv(b * c);
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<float> t = store.momentum_target(idx[j], probs_row(current, j), epoch);
    std::copy(t.begin(), t.end(), tv.begin() + j * c);
  }
  return Tensor::from_data({b, c}, std::move(tv));
}

}  // namespace

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out << "epoch,lr,train_nat_acc,train_rob_acc,loss,seconds\n";
  for (const EpochStats& e : report.epochs) {
    out << e.epoch << ',' << fmt_g(e.lr) << ',' << fmt_g(e.train_nat_acc) << ','
        << fmt_g(e.train_rob_acc) << ',' << fmt_g(e.loss) << ',' << fmt_g(e.seconds)
        << '\n';
  }
}

TrainResult train(const Dataset& data, const NetworkSpec& spec, const TrainConfig& cfg,
                  const CheckpointSink& sink) {
  cfg.validate();
  spec.validate();
  const std::size_t n = data.size();
  if (n == 0) throw ValueError("train: empty dataset");
  if (data.classes != spec.classes) {
    throw ValueError("train: dataset has " + std::to_string(data.classes) +
                     " classes but the model expects " + std::to_string(spec.classes));
  }

  NetworkState state = init_network(spec, cfg.seed);
  std::vector<Tensor> velocity;
  velocity.reserve(state.params.size());
  for (const Tensor& p : state.params) velocity.push_back(Tensor::zeros(p.shape()));

  const ObjectiveTag tag = cfg.objective.tag;
  const float lambda = cfg.objective.lambda;
  const bool uses_bank = tag == ObjectiveTag::kUiat || tag == ObjectiveTag::kUiatOneOff ||
                         tag == ObjectiveTag::kSinglestepUiat;
  std::optional<UniversalBank> bank;
  if (uses_bank) {
    bank.emplace(spec.classes, spec.input_shape, cfg.inverse.epsilon, cfg.seed);
  }

  const int t_momentum = cfg.momentum_start >= 0
                             ? cfg.momentum_start
                             : (cfg.epochs > 0 ? scaled_momentum_start(cfg.epochs) : 0);
  const int t_oneoff = cfg.oneoff_epoch >= 0
                           ? cfg.oneoff_epoch
                           : (cfg.epochs > 0 ? scaled_oneoff_epoch(cfg.epochs) : 0);
  std::optional<ProbStore> store;
  if (tag == ObjectiveTag::kUiat) {
    store.emplace(ProbStore::Mode::kMomentum, cfg.gamma, t_momentum, t_oneoff, n,
                  spec.classes);
  } else if (tag == ObjectiveTag::kUiatOneOff) {
    store.emplace(ProbStore::Mode::kOneOff, cfg.gamma, t_momentum, t_oneoff, n,
                  spec.classes);
  }

  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_iters =
      batches_per_epoch * static_cast<std::size_t>(cfg.epochs);

  TrainReport report;
  std::size_t global_iter = 0;
  std::vector<std::size_t> order(n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng srng(mix_seed(cfg.seed, streams::kShuffle, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = srng.below(i + 1);
      std::swap(order[i], order[j]);
    }

    const float epoch_lr = cyclic_lr(global_iter, total_iters, cfg.peak_lr);
    std::size_t nat_correct = 0;
    std::size_t rob_correct = 0;
    double loss_sum = 0.0;

    for (std::size_t b = 0, start = 0; start < n; ++b, start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Tensor x = data.gather(idx);
      const std::vector<int> y = data.gather_labels(idx);
      const float lr = cyclic_lr(global_iter, total_iters, cfg.peak_lr);

      try {
        const ForwardOutput nat_out = forward(state, x);
        nat_correct += count_correct(nat_out.logits, y);

        Rng arng(mix_seed(cfg.seed, streams::kAttack, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(b)));
        Rng irng(mix_seed(cfg.seed, streams::kInverse, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(b)));

        ModelTape tape(state, /*params_require_grad=*/true);
        Var loss{};
        Tensor adv_logits;

        switch (tag) {
          case ObjectiveTag::kSat: {
            const Tensor x_hat =
                cfg.attack.epsilon > 0.0f ? pgd_attack(state, x, y, cfg.attack, arng) : x;
            const ModelTape::Pass pass = tape.forward(x_hat, false);
            loss = build_sat(tape, pass, y);
            adv_logits = tape.trace().value(pass.logits);
            break;
          }
          case ObjectiveTag::kTrades: {
            const ModelTape::Pass nat_pass = tape.forward(x, false);
            if (cfg.objective.omega == 0.0f) {
              loss = build_trades(tape, nat_pass, nullptr, y, 0.0f);
              adv_logits = tape.trace().value(nat_pass.logits);
            } else {
              const Tensor x_hat = cfg.attack.epsilon > 0.0f
                                       ? trades_attack(state, x, cfg.attack, arng)
                                       : x;
              const ModelTape::Pass adv_pass = tape.forward(x_hat, false);
              loss = build_trades(tape, nat_pass, &adv_pass, y, cfg.objective.omega);
              adv_logits = tape.trace().value(adv_pass.logits);
            }
            break;
          }
          case ObjectiveTag::kIat: {
            const Tensor x_hat =
                cfg.attack.epsilon > 0.0f ? pgd_attack(state, x, y, cfg.attack, arng) : x;
            const Tensor x_check = instance_inverse(state, x, y, &x_hat, cfg.inverse, irng);
            const Tensor p_t = ops::softmax(forward(state, x_check).logits);
            const ModelTape::Pass pass = tape.forward(x_hat, false);
            loss = build_kl_to_target(tape, pass, y, p_t, lambda);
            adv_logits = tape.trace().value(pass.logits);
            break;
          }
          case ObjectiveTag::kUiat: {
            const Tensor x_hat =
                cfg.attack.epsilon > 0.0f ? pgd_attack(state, x, y, cfg.attack, arng) : x;
            const UniversalUpdateResult res =
                universal_update(*bank, state, x, y, &x_hat, cfg.inverse);
            if (!bank->in_ball()) {
              throw ValueError("universal bank left its ball after an update");
            }
            const Tensor targets = blend_targets(*store, res.target_probs, idx, epoch);
            const ModelTape::Pass pass = tape.forward(x_hat, false);
            loss = build_kl_to_target(tape, pass, y, targets, lambda);
            adv_logits = tape.trace().value(pass.logits);
            break;
          }
          case ObjectiveTag::kUiatOneOff: {
            const Tensor x_hat =
                cfg.attack.epsilon > 0.0f ? pgd_attack(state, x, y, cfg.attack, arng) : x;
            std::optional<UniversalUpdateResult> res;
            if (epoch == t_oneoff) {
              // The bank only moves during the capture epoch.
              res.emplace(universal_update(*bank, state, x, y, &x_hat, cfg.inverse));
              if (!bank->in_ball()) {
                throw ValueError("universal bank left its ball after an update");
              }
            }
            const Tensor nat_probs = ops::softmax(nat_out.logits);
            const std::size_t c = spec.classes;
            std::vector<float> tv(idx.size() * c);
            for (std::size_t j = 0; j < idx.size(); ++j) {
              std::vector<float> t = store->oneoff_target(
                  idx[j], epoch, probs_row(nat_probs, j),
                  [&res, j]() { return probs_row(res->target_probs, j); });
              std::copy(t.begin(), t.end(), tv.begin() + static_cast<std::ptrdiff_t>(j * c));
            }
            const Tensor targets = Tensor::from_data({idx.size(), c}, std::move(tv));
            const ModelTape::Pass pass = tape.forward(x_hat, false);
            loss = build_kl_to_target(tape, pass, y, targets, lambda);
            adv_logits = tape.trace().value(pass.logits);
            break;
          }
          case ObjectiveTag::kSinglestepUiat: {
            const Tensor x_hat = cfg.attack.epsilon > 0.0f
                                     ? single_step_attack(state, x, y, cfg.attack, arng)
                                     : x;
            if (lambda == 0.0f) {
              // Plain single-step adversarial training: no bank work at all.
              const ModelTape::Pass pass = tape.forward(x_hat, false);
              loss = build_sat(tape, pass, y);
              adv_logits = tape.trace().value(pass.logits);
              break;
            }
            InverseConfig icfg = cfg.inverse;
            icfg.beta = 0.0f;  // single-step regime generates with plain CE
            const UniversalUpdateResult res =
                universal_update(*bank, state, x, y, nullptr, icfg);
            if (!bank->in_ball()) {
              throw ValueError("universal bank left its ball after an update");
            }
            if (cfg.objective.kl_flow_through && lambda != 0.0f) {
              const Tensor x_check = apply_universal(x, y, *bank, icfg.clamp_domain);
              const ModelTape::Pass adv_pass = tape.forward(x_hat, false);
              const ModelTape::Pass inv_pass = tape.forward(x_check, false);
              loss = build_kl_flow_through(tape, adv_pass, inv_pass, y, lambda);
              adv_logits = tape.trace().value(adv_pass.logits);
            } else {
              const ModelTape::Pass pass = tape.forward(x_hat, false);
              loss = build_kl_to_target(tape, pass, y, res.target_probs, lambda);
              adv_logits = tape.trace().value(pass.logits);
            }
            break;
          }
        }

        const GradientMap g = tape.trace().backward(loss);
        const std::vector<Tensor> grads = tape.param_grads(g);
        const float loss_value = tape.trace().value(loss).value();
        rob_correct += count_correct(adv_logits, y);
        loss_sum += static_cast<double>(loss_value) * static_cast<double>(idx.size());
        sgd_nesterov_step(state, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      } catch (const DivergenceError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b) + ": " + e.what());
      } catch (const ValueError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b) + ": " + e.what());
      }
      ++global_iter;
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = epoch_lr;
    st.train_nat_acc = static_cast<float>(nat_correct) / static_cast<float>(n);
    st.train_rob_acc = static_cast<float>(rob_correct) / static_cast<float>(n);
    st.loss = static_cast<float>(loss_sum / static_cast<double>(n));
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(st);

    if (cfg.checkpoint_every > 0 && sink &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch == cfg.epochs - 1)) {
      sink(epoch, state, bank ? &*bank : nullptr);
    }
  }

  return TrainResult{std::move(state), std::move(report), std::move(bank)};
}

}  // namespace iat
