#include "iat/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <fstream>
#include <sstream>

#include "iat/attacks.hpp"

namespace iat {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

float parse_float(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const float f = std::stof(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return f;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "' as an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + v + "' as an unsigned integer");
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  const long long i = parse_int(key, v);
  if (i < 0) throw ConfigError(key + ": must be >= 0");
  return static_cast<std::size_t>(i);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": cannot parse '" + v + "' as a bool (true/false)");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty entry in list '" + v + "'");
    out.push_back(parse_size(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string size_list_str(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyHandler>& schema() {
  static const std::vector<KeyHandler> s = {
      {"dataset.kind",
       [](RunConfig& c, const std::string& v) {
         if (v != "two-moons" && v != "idx") {
           throw ConfigError("dataset.kind: unknown kind '" + v + "'");
         }
         c.dataset_kind = v;
       },
       [](const RunConfig& c) { return c.dataset_kind; }},
      {"dataset.train_n",
       [](RunConfig& c, const std::string& v) { c.train_n = parse_size("dataset.train_n", v); },
       [](const RunConfig& c) { return std::to_string(c.train_n); }},
      {"dataset.test_n",
       [](RunConfig& c, const std::string& v) { c.test_n = parse_size("dataset.test_n", v); },
       [](const RunConfig& c) { return std::to_string(c.test_n); }},
      {"dataset.noise_sd",
       [](RunConfig& c, const std::string& v) { c.noise_sd = parse_float("dataset.noise_sd", v); },
       [](const RunConfig& c) { return fmt_g(c.noise_sd); }},
      {"dataset.train_seed",
       [](RunConfig& c, const std::string& v) {
         c.train_data_seed = parse_u64("dataset.train_seed", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train_data_seed); }},
      {"dataset.test_seed",
       [](RunConfig& c, const std::string& v) {
         c.test_data_seed = parse_u64("dataset.test_seed", v);
       },
       [](const RunConfig& c) { return std::to_string(c.test_data_seed); }},
      {"dataset.images",
       [](RunConfig& c, const std::string& v) { c.idx_images = v; },
       [](const RunConfig& c) { return c.idx_images; }},
      {"dataset.labels",
       [](RunConfig& c, const std::string& v) { c.idx_labels = v; },
       [](const RunConfig& c) { return c.idx_labels; }},
      {"dataset.test_images",
       [](RunConfig& c, const std::string& v) { c.idx_test_images = v; },
       [](const RunConfig& c) { return c.idx_test_images; }},
      {"dataset.test_labels",
       [](RunConfig& c, const std::string& v) { c.idx_test_labels = v; },
       [](const RunConfig& c) { return c.idx_test_labels; }},

      {"model.kind",
       [](RunConfig& c, const std::string& v) {
         if (v != "mlp" && v != "small-cnn") {
           throw ConfigError("model.kind: unknown kind '" + v + "'");
         }
         c.model_kind = v;
       },
       [](const RunConfig& c) { return c.model_kind; }},
      {"model.hidden",
       [](RunConfig& c, const std::string& v) { c.hidden = parse_size_list("model.hidden", v); },
       [](const RunConfig& c) { return size_list_str(c.hidden); }},
      {"model.conv_channels",
       [](RunConfig& c, const std::string& v) {
         c.conv_channels = parse_size_list("model.conv_channels", v);
       },
       [](const RunConfig& c) { return size_list_str(c.conv_channels); }},
      {"model.dense",
       [](RunConfig& c, const std::string& v) { c.dense = parse_size("model.dense", v); },
       [](const RunConfig& c) { return std::to_string(c.dense); }},

      {"objective.kind",
       [](RunConfig& c, const std::string& v) {
         try {
           parse_objective(v);
         } catch (const ValueError& e) {
           throw ConfigError(std::string("objective.kind: ") + e.what());
         }
         c.objective = v;
       },
       [](const RunConfig& c) { return c.objective; }},
      {"objective.lambda",
       [](RunConfig& c, const std::string& v) { c.lambda = parse_float("objective.lambda", v); },
       [](const RunConfig& c) { return fmt_g(c.lambda); }},
      {"objective.omega",
       [](RunConfig& c, const std::string& v) { c.omega = parse_float("objective.omega", v); },
       [](const RunConfig& c) { return fmt_g(c.omega); }},
      {"objective.kl_flow_through",
       [](RunConfig& c, const std::string& v) {
         c.kl_flow_through = parse_bool("objective.kl_flow_through", v);
       },
       [](const RunConfig& c) { return c.kl_flow_through ? "true" : "false"; }},

      {"train.epochs",
       [](RunConfig& c, const std::string& v) {
         c.epochs = static_cast<int>(parse_int("train.epochs", v));
       },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& v) {
         c.batch_size = parse_size("train.batch_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"train.peak_lr",
       [](RunConfig& c, const std::string& v) { c.peak_lr = parse_float("train.peak_lr", v); },
       [](const RunConfig& c) { return fmt_g(c.peak_lr); }},
      {"train.weight_decay",
       [](RunConfig& c, const std::string& v) {
         c.weight_decay = parse_float("train.weight_decay", v);
       },
       [](const RunConfig& c) { return fmt_g(c.weight_decay); }},
      {"train.momentum",
       [](RunConfig& c, const std::string& v) { c.momentum = parse_float("train.momentum", v); },
       [](const RunConfig& c) { return fmt_g(c.momentum); }},
      {"train.gamma",
       [](RunConfig& c, const std::string& v) { c.gamma = parse_float("train.gamma", v); },
       [](const RunConfig& c) { return fmt_g(c.gamma); }},
      {"train.momentum_start",
       [](RunConfig& c, const std::string& v) {
         c.momentum_start = static_cast<int>(parse_int("train.momentum_start", v));
       },
       [](const RunConfig& c) { return std::to_string(c.momentum_start); }},
      {"train.oneoff_epoch",
       [](RunConfig& c, const std::string& v) {
         c.oneoff_epoch = static_cast<int>(parse_int("train.oneoff_epoch", v));
       },
       [](const RunConfig& c) { return std::to_string(c.oneoff_epoch); }},
      {"train.seed",
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64("train.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"train.checkpoint_every",
       [](RunConfig& c, const std::string& v) {
         c.checkpoint_every = static_cast<int>(parse_int("train.checkpoint_every", v));
       },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},

      {"attack.epsilon",
       [](RunConfig& c, const std::string& v) {
         c.attack_epsilon = parse_float("attack.epsilon", v);
       },
       [](const RunConfig& c) { return fmt_g(c.attack_epsilon); }},
      {"attack.step_size",
       [](RunConfig& c, const std::string& v) {
         c.attack_step = parse_float("attack.step_size", v);
       },
       [](const RunConfig& c) { return fmt_g(c.attack_step); }},
      {"attack.steps",
       [](RunConfig& c, const std::string& v) {
         c.attack_steps = static_cast<int>(parse_int("attack.steps", v));
       },
       [](const RunConfig& c) { return std::to_string(c.attack_steps); }},
      {"attack.rand_init",
       [](RunConfig& c, const std::string& v) {
         c.attack_rand_init = parse_bool("attack.rand_init", v);
       },
       [](const RunConfig& c) { return c.attack_rand_init ? "true" : "false"; }},
      {"attack.loss",
       [](RunConfig& c, const std::string& v) {
         if (v != "ce" && v != "cw") throw ConfigError("attack.loss: unknown loss '" + v + "'");
         c.attack_loss = v;
       },
       [](const RunConfig& c) { return c.attack_loss; }},
      {"attack.preset",
       [](RunConfig& c, const std::string& v) {
         if (v != "none" && v != "rs-fgsm" && v != "n-fgsm") {
           throw ConfigError("attack.preset: unknown preset '" + v + "'");
         }
         c.attack_preset = v;
       },
       [](const RunConfig& c) { return c.attack_preset; }},

      {"inverse.epsilon",
       [](RunConfig& c, const std::string& v) {
         c.inverse_epsilon = parse_float("inverse.epsilon", v);
       },
       [](const RunConfig& c) { return fmt_g(c.inverse_epsilon); }},
      {"inverse.step_size",
       [](RunConfig& c, const std::string& v) {
         c.inverse_step = parse_float("inverse.step_size", v);
       },
       [](const RunConfig& c) { return fmt_g(c.inverse_step); }},
      {"inverse.steps",
       [](RunConfig& c, const std::string& v) {
         c.inverse_steps = static_cast<int>(parse_int("inverse.steps", v));
       },
       [](const RunConfig& c) { return std::to_string(c.inverse_steps); }},
      {"inverse.beta",
       [](RunConfig& c, const std::string& v) { c.beta = parse_float("inverse.beta", v); },
       [](const RunConfig& c) { return fmt_g(c.beta); }},
      {"inverse.post_update_targets",
       [](RunConfig& c, const std::string& v) {
         c.post_update_targets = parse_bool("inverse.post_update_targets", v);
       },
       [](const RunConfig& c) { return c.post_update_targets ? "true" : "false"; }},

      {"eval.steps",
       [](RunConfig& c, const std::string& v) {
         c.eval_steps = static_cast<int>(parse_int("eval.steps", v));
       },
       [](const RunConfig& c) { return std::to_string(c.eval_steps); }},
      {"eval.step_size",
       [](RunConfig& c, const std::string& v) { c.eval_step = parse_float("eval.step_size", v); },
       [](const RunConfig& c) { return fmt_g(c.eval_step); }},
      {"eval.seed",
       [](RunConfig& c, const std::string& v) { c.eval_seed = parse_u64("eval.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.eval_seed); }},

      {"out.dir",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
  };
  return s;
}

void apply_kv(RunConfig& rc, const std::string& key, const std::string& value,
              const std::string& where) {
  for (const KeyHandler& h : schema()) {
    if (key == h.key) {
      h.set(rc, value);
      return;
    }
  }
  throw ConfigError(where + ": unknown key '" + key + "'");
}

void apply_line(RunConfig& rc, std::string line, const std::string& where) {
  const std::size_t hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  const std::size_t eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
  }
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError(where + ": empty key");
  apply_kv(rc, key, value, where);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::string>& overrides) {
  RunConfig rc;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    apply_line(rc, line, "config line " + std::to_string(lineno));
  }
  for (const std::string& ov : overrides) {
    apply_line(rc, ov, "override '" + ov + "'");
  }
  return rc;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), overrides);
}

std::string effective_config_text(const RunConfig& rc) {
  std::string out;
  for (const KeyHandler& h : schema()) {
    out += h.key;
    out += " = ";
    out += h.get(rc);
    out += '\n';
  }
  return out;
}

Dataset load_train_dataset(const RunConfig& rc) {
  if (rc.dataset_kind == "two-moons") {
    return two_moons(rc.train_n, rc.noise_sd, rc.train_data_seed);
  }
  if (rc.idx_images.empty() || rc.idx_labels.empty()) {
    throw ConfigError("dataset.images / dataset.labels required for dataset.kind = idx");
  }
  return load_idx(rc.idx_images, rc.idx_labels);
}

Dataset load_test_dataset(const RunConfig& rc) {
  if (rc.dataset_kind == "two-moons") {
    return two_moons(rc.test_n, rc.noise_sd, rc.test_data_seed);
  }
  if (rc.idx_test_images.empty() || rc.idx_test_labels.empty()) {
    throw ConfigError(
        "dataset.test_images / dataset.test_labels required for dataset.kind = idx");
  }
  return load_idx(rc.idx_test_images, rc.idx_test_labels);
}

NetworkSpec network_spec_for(const RunConfig& rc, const Dataset& data) {
  NetworkSpec spec;
  spec.input_shape = data.example_shape();
  spec.classes = data.classes;
  if (rc.model_kind == "mlp") {
    spec.kind = ArchKind::kMlp;
    spec.hidden = rc.hidden;
    if (spec.input_shape.size() != 1) {
      throw ConfigError("model.kind = mlp requires flat examples; this dataset has rank " +
                        std::to_string(spec.input_shape.size()) + " examples");
    }
  } else {
    spec.kind = ArchKind::kSmallCnn;
    spec.conv_channels = rc.conv_channels;
    spec.dense = {rc.dense};
    if (spec.input_shape.size() != 3) {
      throw ConfigError("model.kind = small-cnn requires [C,H,W] examples");
    }
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return spec;
}

ObjectiveKind resolved_objective(const RunConfig& rc) {
  ObjectiveKind kind;
  kind.tag = parse_objective(rc.objective);
  kind.lambda = rc.lambda;
  kind.omega = rc.omega;
  kind.kl_flow_through = rc.kl_flow_through;
  try {
    kind.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("objective: ") + e.what());
  }
  return kind;
}

AttackConfig resolved_train_attack(const RunConfig& rc,
                                   const std::optional<std::pair<float, float>>& domain) {
  if (rc.attack_preset == "rs-fgsm") return rs_fgsm_preset(rc.attack_epsilon, domain);
  if (rc.attack_preset == "n-fgsm") return n_fgsm_preset(rc.attack_epsilon, domain);
  AttackConfig cfg;
  cfg.epsilon = rc.attack_epsilon;
  cfg.step_size = rc.attack_step < 0.0f ? rc.attack_epsilon / 4.0f : rc.attack_step;
  cfg.steps = rc.attack_steps;
  cfg.rand_init = rc.attack_rand_init;
  cfg.loss = rc.attack_loss == "cw" ? AttackLoss::kCwMargin : AttackLoss::kCrossEntropy;
  cfg.clamp_domain = domain;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  return cfg;
}

InverseConfig resolved_inverse(const RunConfig& rc,
                               const std::optional<std::pair<float, float>>& domain) {
  InverseConfig cfg;
  cfg.epsilon = rc.inverse_epsilon < 0.0f ? rc.attack_epsilon / 2.0f : rc.inverse_epsilon;
  if (rc.inverse_step < 0.0f) {
    // Instance-wise descent takes several half-radius steps; the universal
    // bank takes one full-radius signed step per batch.
    cfg.step_size = rc.objective == "iat" ? cfg.epsilon / 2.0f : cfg.epsilon;
  } else {
    cfg.step_size = rc.inverse_step;
  }
  cfg.steps = rc.inverse_steps;
  cfg.beta = rc.beta;
  cfg.post_update_targets = rc.post_update_targets;
  cfg.clamp_domain = domain;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("inverse: ") + e.what());
  }
  return cfg;
}

TrainConfig resolved_train_config(const RunConfig& rc, const Dataset& data) {
  TrainConfig cfg;
  cfg.objective = resolved_objective(rc);
  cfg.attack = resolved_train_attack(rc, data.domain);
  cfg.inverse = resolved_inverse(rc, data.domain);
  cfg.epochs = rc.epochs;
  cfg.batch_size = rc.batch_size;
  cfg.peak_lr = rc.peak_lr;
  cfg.weight_decay = rc.weight_decay;
  cfg.momentum = rc.momentum;
  cfg.gamma = rc.gamma;
  cfg.momentum_start = rc.momentum_start;
  cfg.oneoff_epoch = rc.oneoff_epoch;
  cfg.seed = rc.seed;
  cfg.checkpoint_every = rc.checkpoint_every;
  try {
    cfg.validate();
  } catch (const DivergenceError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return cfg;
}

AttackConfig resolved_eval_attack(const RunConfig& rc,
                                  const std::optional<std::pair<float, float>>& domain) {
  AttackConfig cfg;
  cfg.epsilon = rc.attack_epsilon;
  cfg.step_size = rc.eval_step;  // < 0 resolves per grid point
  cfg.steps = rc.eval_steps;
  cfg.rand_init = true;
  cfg.loss = rc.attack_loss == "cw" ? AttackLoss::kCwMargin : AttackLoss::kCrossEntropy;
  cfg.clamp_domain = domain;
  return cfg;
}

InverseConfig resolved_eval_inverse(const RunConfig& rc,
                                    const std::optional<std::pair<float, float>>& domain) {
  InverseConfig cfg;
  cfg.epsilon = rc.inverse_epsilon < 0.0f ? rc.attack_epsilon / 2.0f : rc.inverse_epsilon;
  cfg.step_size = rc.eval_step;  // < 0 resolves per grid point
  cfg.steps = rc.inverse_steps;
  cfg.beta = 0.0f;
  cfg.clamp_domain = domain;
  return cfg;
}

}  // namespace iat
