// iat: train / eval / compare / gradcheck driver around the core library.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iat/checkpoint.hpp"
#include "iat/config.hpp"
#include "iat/errors.hpp"
#include "iat/evaluator.hpp"
#include "iat/gradcheck.hpp"
#include "iat/threads.hpp"
#include "iat/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Shared flags every subcommand that reads a run config takes.
struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;  // overrides out.dir when non-empty
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts* o) {
  cmd->add_option("--config", o->config_path, "run configuration file (key = value lines)");
  cmd->add_option("--set", o->overrides, "override a config key, e.g. --set objective.lambda=3.5")
      ->take_all();
  cmd->add_option("--out", o->out_dir, "output directory (overrides out.dir)");
  cmd->add_option("--threads", o->threads, "worker thread cap (default 1, deterministic at any value)")
      ->check(CLI::PositiveNumber);
}

iat::RunConfig make_run_config(const CommonOpts& o) {
  iat::RunConfig rc = o.config_path.empty()
                          ? iat::parse_run_config_text("", o.overrides)
                          : iat::load_run_config(o.config_path, o.overrides);
  if (const char* env = std::getenv("IAT_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw iat::ConfigError(std::string("IAT_SEED is not an unsigned integer: '") + env + "'");
    }
    rc.seed = static_cast<std::uint64_t>(v);
  }
  if (!o.out_dir.empty()) rc.out_dir = o.out_dir;
  return rc;
}

void echo_config(const iat::RunConfig& rc) {
  std::cout << "# effective configuration\n" << iat::effective_config_text(rc) << std::flush;
}

void write_manifest(const std::string& dir, const std::vector<std::string>& names) {
  std::ofstream out(join(dir, "manifest.txt"), std::ios::trunc);
  if (!out) throw iat::IoError(iat::IoError::Kind::kUnreadable, "cannot write manifest in " + dir);
  for (const auto& n : names) out << n << "\n";
}

// Inclusive epsilon grid "start:stop:step"; step must divide the range
// within 1e-9 and ascend.
std::vector<float> parse_grid(const std::string& text) {
  double v[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t next = (i < 2) ? text.find(':', pos) : std::string::npos;
    std::string part = text.substr(pos, next == std::string::npos ? next : next - pos);
    if (part.empty() || (i < 2 && next == std::string::npos)) {
      throw iat::ConfigError("curve grid must be start:stop:step, got '" + text + "'");
    }
    try {
      std::size_t used = 0;
      v[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw iat::ConfigError("bad number '" + part + "' in curve grid '" + text + "'");
    }
    pos = (next == std::string::npos) ? text.size() : next + 1;
  }
  double start = v[0], stop = v[1], step = v[2];
  if (!(std::isfinite(start) && std::isfinite(stop) && std::isfinite(step))) {
    throw iat::ConfigError("curve grid entries must be finite: '" + text + "'");
  }
  if (step <= 0.0) {
    if (step == 0.0 && start == stop) return {static_cast<float>(start)};
    throw iat::ConfigError("curve grid step must be positive: '" + text + "'");
  }
  if (stop < start) throw iat::ConfigError("curve grid must ascend: '" + text + "'");
  auto count = static_cast<long long>(std::llround((stop - start) / step));
  if (count < 0 || std::abs(start + static_cast<double>(count) * step - stop) > 1e-9) {
    throw iat::ConfigError("curve grid step does not divide the range: '" + text + "'");
  }
  std::vector<float> grid;
  grid.reserve(static_cast<std::size_t>(count) + 1);
  for (long long i = 0; i <= count; ++i) {
    grid.push_back(static_cast<float>(start + static_cast<double>(i) * step));
  }
  return grid;
}

iat::CurveSpec make_curve_spec(const iat::RunConfig& rc, const iat::Dataset& data,
                               const std::vector<float>& grid) {
  iat::CurveSpec spec;
  spec.grid = grid;
  spec.attack_template = iat::resolved_eval_attack(rc, data.domain);
  spec.inverse_template = iat::resolved_eval_inverse(rc, data.domain);
  spec.seed = rc.eval_seed;
  spec.validate();
  return spec;
}

// Accuracy at one signed radius: attack for positive, natural at zero,
// helpful (inverse) perturbation at |epsilon| for negative.
double accuracy_at(const iat::NetworkState& state, const iat::Dataset& data,
                   const iat::RunConfig& rc, float eps) {
  if (eps == 0.0f) return iat::natural_accuracy(state, data);
  if (eps > 0.0f) {
    iat::AttackConfig cfg = iat::resolved_eval_attack(rc, data.domain);
    cfg.epsilon = eps;
    if (cfg.step_size < 0.0f) cfg.step_size = eps / 4.0f;
    cfg.validate();
    return iat::robust_accuracy(state, data, cfg, rc.eval_seed);
  }
  iat::InverseConfig cfg = iat::resolved_eval_inverse(rc, data.domain);
  cfg.epsilon = -eps;
  if (cfg.step_size < 0.0f) cfg.step_size = -eps / 2.0f;
  cfg.validate();
  auto ok = iat::correct_under_inverse(state, data, cfg, rc.eval_seed);
  std::size_t hits = 0;
  for (auto b : ok) hits += b;
  return ok.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ok.size());
}

void check_checkpoint_matches(const iat::NetworkSpec& spec, const iat::Dataset& data,
                              const std::string& what) {
  if (spec.input_shape != data.example_shape()) {
    throw iat::ConfigError(what + ": checkpoint input shape " + "does not match the dataset");
  }
  if (spec.classes != data.classes) {
    throw iat::ConfigError(what + ": checkpoint has " + std::to_string(spec.classes) +
                           " classes, dataset has " + std::to_string(data.classes));
  }
}

int run_train(const CommonOpts& common) {
  iat::RunConfig rc = make_run_config(common);
  echo_config(rc);
  iat::set_max_threads(common.threads);

  iat::Dataset train_data = iat::load_train_dataset(rc);
  iat::Dataset test_data = iat::load_test_dataset(rc);
  iat::NetworkSpec spec = iat::network_spec_for(rc, train_data);
  iat::TrainConfig cfg = iat::resolved_train_config(rc, train_data);

  fs::create_directories(rc.out_dir);
  std::vector<std::string> artifacts;
  iat::CheckpointSink sink;
  if (cfg.checkpoint_every > 0) {
    sink = [&](int epoch, const iat::NetworkState& state, const iat::UniversalBank* bank) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_epoch%04d.iat", epoch);
      iat::save_checkpoint(join(rc.out_dir, name), state, bank);
      artifacts.emplace_back(name);
    };
  }

  iat::TrainResult result = iat::train(train_data, spec, cfg, sink);

  iat::save_checkpoint(join(rc.out_dir, "model.iat"), result.state,
                       result.bank ? &*result.bank : nullptr);
  artifacts.emplace_back("model.iat");
  iat::write_report_csv(result.report, join(rc.out_dir, "report.csv"));
  artifacts.emplace_back("report.csv");
  write_manifest(rc.out_dir, artifacts);

  double nat = iat::natural_accuracy(result.state, test_data);
  double rob = accuracy_at(result.state, test_data, rc, rc.attack_epsilon);
  std::printf("test natural accuracy: %.4f\n", nat);
  std::printf("test robust accuracy (epsilon %.9g): %.4f\n",
              static_cast<double>(rc.attack_epsilon), rob);
  std::printf("artifacts in %s: model.iat report.csv manifest.txt\n", rc.out_dir.c_str());
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& checkpoint_path, float eps,
             bool eps_given, const std::string& curve_arg, bool groups) {
  iat::RunConfig rc = make_run_config(common);
  echo_config(rc);
  iat::set_max_threads(common.threads);

  iat::Checkpoint ckpt = iat::load_checkpoint(checkpoint_path);
  iat::Dataset data = iat::load_test_dataset(rc);
  check_checkpoint_matches(ckpt.state.spec, data, "eval");

  float radius = eps_given ? eps : rc.attack_epsilon;
  double nat = iat::natural_accuracy(ckpt.state, data);
  double rob = accuracy_at(ckpt.state, data, rc, radius);
  std::printf("natural accuracy: %.4f\n", nat);
  std::printf("robust accuracy (epsilon %.9g): %.4f\n", static_cast<double>(radius), rob);

  if (!curve_arg.empty()) {
    iat::CurveSpec spec = make_curve_spec(rc, data, parse_grid(curve_arg));
    fs::create_directories(rc.out_dir);
    if (groups) {
      iat::GroupCurves curves = iat::accuracy_curve_grouped(ckpt.state, data, spec);
      iat::write_group_curves_csv(curves, join(rc.out_dir, "curve.csv"));
    } else {
      iat::Curve curve = iat::accuracy_curve(ckpt.state, data, spec);
      iat::write_curve_csv(curve, join(rc.out_dir, "curve.csv"));
    }
    write_manifest(rc.out_dir, {"curve.csv"});
    std::printf("wrote %s\n", join(rc.out_dir, "curve.csv").c_str());
  }
  return 0;
}

int run_compare(const CommonOpts& common, const std::string& path_a, const std::string& path_b,
                const std::string& curve_arg) {
  iat::RunConfig rc = make_run_config(common);
  echo_config(rc);
  iat::set_max_threads(common.threads);

  iat::Checkpoint a = iat::load_checkpoint(path_a);
  iat::Checkpoint b = iat::load_checkpoint(path_b);
  if (a.state.spec.input_shape != b.state.spec.input_shape ||
      a.state.spec.classes != b.state.spec.classes) {
    throw iat::ConfigError("compare: checkpoints disagree on input shape or class count");
  }
  iat::Dataset data = iat::load_test_dataset(rc);
  check_checkpoint_matches(a.state.spec, data, "compare");

  iat::CurveSpec spec = make_curve_spec(rc, data, parse_grid(curve_arg));
  iat::Curve curve_a = iat::accuracy_curve(a.state, data, spec);
  iat::Curve curve_b = iat::accuracy_curve(b.state, data, spec);
  iat::Curve delta = iat::curve_difference(curve_a, curve_b);

  fs::create_directories(rc.out_dir);
  iat::write_curve_csv(curve_a, join(rc.out_dir, "curve_a.csv"));
  iat::write_curve_csv(curve_b, join(rc.out_dir, "curve_b.csv"));
  iat::write_difference_csv(delta, join(rc.out_dir, "delta.csv"));
  write_manifest(rc.out_dir, {"curve_a.csv", "curve_b.csv", "delta.csv"});

  for (const auto& p : delta.points) {
    std::printf("epsilon %.9g: accuracy delta %+.4f\n", static_cast<double>(p.epsilon),
                p.accuracy);
  }
  std::printf("wrote curve_a.csv curve_b.csv delta.csv in %s\n", rc.out_dir.c_str());
  return 0;
}

int run_gradcheck(std::uint64_t seed, int n_seeds, double tol, const std::string& perturb,
                  int threads) {
  std::cout << "# effective configuration\n";
  std::cout << "gradcheck.seed = " << seed << "\n";
  std::cout << "gradcheck.seeds = " << n_seeds << "\n";
  std::cout << "gradcheck.tol = " << tol << "\n";
  std::cout << "gradcheck.perturb = " << (perturb.empty() ? "none" : perturb) << "\n";
  iat::set_max_threads(threads);

  // Aggregate the worst error per op across all seeds, first-seen op order.
  std::vector<std::string> order;
  std::map<std::string, iat::GradCheckResult> agg;
  for (int i = 0; i < n_seeds; ++i) {
    auto results = iat::run_gradcheck_suite(seed + static_cast<std::uint64_t>(i), tol, perturb);
    for (const auto& r : results) {
      auto it = agg.find(r.op);
      if (it == agg.end()) {
        order.push_back(r.op);
        agg.emplace(r.op, r);
      } else {
        it->second.worst_rel_err = std::max(it->second.worst_rel_err, r.worst_rel_err);
        it->second.pass = it->second.pass && r.pass;
      }
    }
  }

  std::vector<std::string> failing;
  for (const auto& op : order) {
    const auto& r = agg.at(op);
    std::printf("%-5s %-24s worst_rel_err %.3e\n", r.pass ? "ok" : "FAIL", op.c_str(),
                r.worst_rel_err);
    if (!r.pass) failing.push_back(op);
  }
  if (failing.empty()) {
    std::printf("gradcheck: all %zu ops within %.1e over %d seeds\n", order.size(), tol, n_seeds);
    return 0;
  }
  std::printf("gradcheck: %zu of %zu ops failed:", failing.size(), order.size());
  for (const auto& op : failing) std::printf(" %s", op.c_str());
  std::printf("\n");
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial training toolkit with inverse (helpful) perturbations"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model per the run configuration");
  add_common(train_cmd, &train_opts);

  CommonOpts eval_opts;
  std::string eval_checkpoint;
  float eval_eps = 0.0f;
  std::string eval_curve;
  bool eval_groups = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  add_common(eval_cmd, &eval_opts);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  auto* eps_opt = eval_cmd->add_option(
      "--eps", eval_eps, "evaluation radius (0 natural, negative = helpful perturbation)");
  eval_cmd->add_option("--curve", eval_curve, "accuracy curve grid start:stop:step (inclusive)");
  eval_cmd->add_flag("--groups", eval_groups,
                     "split the curve by natural-loss halves (all/top/bottom rows)");

  CommonOpts cmp_opts;
  std::string cmp_a, cmp_b, cmp_curve;
  auto* cmp_cmd = app.add_subcommand("compare", "accuracy-curve difference of two checkpoints");
  add_common(cmp_cmd, &cmp_opts);
  cmp_cmd->add_option("--a", cmp_a, "first checkpoint")->required();
  cmp_cmd->add_option("--b", cmp_b, "second checkpoint")->required();
  cmp_cmd->add_option("--curve", cmp_curve, "grid start:stop:step (inclusive)")->required();

  std::uint64_t gc_seed = 42;
  int gc_seeds = 5;
  double gc_tol = 1e-3;
  std::string gc_perturb;
  int gc_threads = 1;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every gradient rule");
  gc_cmd->add_option("--seed", gc_seed, "base seed (default 42)");
  gc_cmd->add_option("--seeds", gc_seeds, "number of consecutive seeds (default 5)")
      ->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tol", gc_tol, "relative-error tolerance (default 1e-3)");
  gc_cmd->add_option("--perturb", gc_perturb,
                     "sensitivity hook: scale the named op's analytic gradient by 1.05");
  gc_cmd->add_option("--threads", gc_threads, "worker thread cap")->check(CLI::PositiveNumber);

  int code = 0;
  train_cmd->callback([&] { code = run_train(train_opts); });
  eval_cmd->callback([&] {
    code = run_eval(eval_opts, eval_checkpoint, eval_eps, eps_opt->count() > 0, eval_curve,
                    eval_groups);
  });
  cmp_cmd->callback([&] { code = run_compare(cmp_opts, cmp_a, cmp_b, cmp_curve); });
  gc_cmd->callback([&] { code = run_gradcheck(gc_seed, gc_seeds, gc_tol, gc_perturb, gc_threads); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int c = app.exit(e);
    return c == 0 ? 0 : 2;  // help/version exit clean; usage errors map to 2
  } catch (const iat::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const iat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return code;
}
