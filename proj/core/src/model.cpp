#include "iat/model.hpp"

#include <cmath>
#include <sstream>

#include "iat/rng.hpp"

namespace iat {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v, char sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

std::vector<std::size_t> parse_sizes(const std::string& s, char sep) {
  std::vector<std::size_t> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    if (cur.empty()) throw ValueError("empty size in list '" + s + "'");
    out.push_back(static_cast<std::size_t>(std::stoull(cur)));
  }
  return out;
}

constexpr std::size_t kConvKernel = 3;

}  // namespace

void NetworkSpec::validate() const {
  if (classes < 2) throw ValueError("NetworkSpec: need at least 2 classes");
  if (kind == ArchKind::kMlp) {
    if (input_shape.size() != 1 || input_shape[0] == 0) {
      throw ValueError("NetworkSpec: mlp input shape must be {D}");
    }
    if (hidden.empty()) {
      throw ValueError("NetworkSpec: need at least one hidden layer");
    }
    for (std::size_t w : hidden) {
      if (w == 0) throw ValueError("NetworkSpec: zero-width hidden layer");
    }
  } else {
    if (input_shape.size() != 3 || shape_numel(input_shape) == 0) {
      throw ValueError("NetworkSpec: cnn input shape must be {C,H,W}");
    }
    if (conv_channels.empty() || dense.empty()) {
      throw ValueError("NetworkSpec: cnn needs conv channels and a dense layer");
    }
    std::size_t h = input_shape[1], w = input_shape[2];
    for (std::size_t c : conv_channels) {
      if (c == 0) throw ValueError("NetworkSpec: zero conv channels");
      if (h < kConvKernel || w < kConvKernel) {
        throw ValueError("NetworkSpec: map shrinks below the 3x3 kernel");
      }
      h -= kConvKernel - 1;
      w -= kConvKernel - 1;
    }
    for (std::size_t d : dense) {
      if (d == 0) throw ValueError("NetworkSpec: zero-width dense layer");
    }
  }
}

std::size_t NetworkSpec::feature_dim() const {
  return kind == ArchKind::kMlp ? hidden.back() : dense.back();
}

std::vector<std::vector<std::size_t>> NetworkSpec::param_shapes() const {
  validate();
  std::vector<std::vector<std::size_t>> shapes;
  if (kind == ArchKind::kMlp) {
    std::size_t in = input_shape[0];
    for (std::size_t w : hidden) {
      shapes.push_back({in, w});
      shapes.push_back({w});
      in = w;
    }
    shapes.push_back({in, classes});
    shapes.push_back({classes});
  } else {
    std::size_t cin = input_shape[0], h = input_shape[1], w = input_shape[2];
    for (std::size_t c : conv_channels) {
      shapes.push_back({c, cin, kConvKernel, kConvKernel});
      shapes.push_back({c});
      cin = c;
      h -= kConvKernel - 1;
      w -= kConvKernel - 1;
    }
    std::size_t in = cin * h * w;
    for (std::size_t d : dense) {
      shapes.push_back({in, d});
      shapes.push_back({d});
      in = d;
    }
    shapes.push_back({in, classes});
    shapes.push_back({classes});
  }
  return shapes;
}

std::string NetworkSpec::descriptor() const {
  std::ostringstream os;
  if (kind == ArchKind::kMlp) {
    os << "kind=mlp;input=" << input_shape[0] << ";hidden=" << join_sizes(hidden, ',');
  } else {
    os << "kind=cnn;input=" << join_sizes(input_shape, 'x')
       << ";conv=" << join_sizes(conv_channels, ',') << ";dense=" << join_sizes(dense, ',');
  }
  os << ";classes=" << classes;
  return os.str();
}

NetworkSpec NetworkSpec::parse_descriptor(const std::string& text, std::uint64_t* seed_out) {
  NetworkSpec spec;
  if (seed_out) *seed_out = 0;
  std::istringstream is(text);
  std::string field;
  bool have_kind = false;
  try {
    while (std::getline(is, field, ';')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw ValueError("field without '='");
      }
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      if (key == "kind") {
        if (val == "mlp") {
          spec.kind = ArchKind::kMlp;
        } else if (val == "cnn") {
          spec.kind = ArchKind::kSmallCnn;
        } else {
          throw ValueError("unknown kind '" + val + "'");
        }
        have_kind = true;
      } else if (key == "input") {
        spec.input_shape = parse_sizes(val, 'x');
      } else if (key == "hidden") {
        spec.hidden = parse_sizes(val, ',');
      } else if (key == "conv") {
        spec.conv_channels = parse_sizes(val, ',');
      } else if (key == "dense") {
        spec.dense = parse_sizes(val, ',');
      } else if (key == "classes") {
        spec.classes = static_cast<std::size_t>(std::stoull(val));
      } else if (key == "seed") {
        if (seed_out) *seed_out = std::stoull(val);
      } else {
        throw ValueError("unknown field '" + key + "'");
      }
    }
    if (!have_kind) throw ValueError("missing kind");
    spec.validate();
  } catch (const std::exception& e) {
    throw IoError(IoError::Kind::kBadDescriptor,
                  std::string("bad network descriptor: ") + e.what());
  }
  return spec;
}

NetworkState init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkState state;
  state.spec = spec;
  state.init_seed = seed;
  Rng rng(mix_seed(seed, streams::kModelInit));
  for (const auto& shape : spec.param_shapes()) {
    if (shape.size() == 1) {  // bias
      state.params.push_back(Tensor::zeros(shape));
      continue;
    }
    // fan_in: rows of a dense W [in, out]; cin*kh*kw of a conv kernel.
    std::size_t fan_in = shape.size() == 2 ? shape[0] : shape[1] * shape[2] * shape[3];
    const float sd = std::sqrt(2.0f / static_cast<float>(fan_in));
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = sd * rng.normal();
    state.params.push_back(Tensor::from_data(shape, std::move(data)));
  }
  return state;
}

NetworkState with_param(const NetworkState& s, std::size_t param, std::size_t index,
                        float v) {
  NetworkState out = s;
  const Tensor& t = s.params.at(param);
  std::vector<float> data(t.data(), t.data() + t.numel());
  data.at(index) = v;
  out.params[param] = Tensor::from_data(t.shape(), std::move(data));
  return out;
}

namespace {

void check_input_shape(const NetworkSpec& spec, const Tensor& x) {
  bool ok = x.rank() == spec.input_shape.size() + 1 && x.dim(0) > 0;
  if (ok) {
    for (std::size_t i = 0; i < spec.input_shape.size(); ++i) {
      ok = ok && x.dim(i + 1) == spec.input_shape[i];
    }
  }
  if (!ok) {
    throw ShapeError("forward: input " + x.shape_str() + " does not match spec input");
  }
}

}  // namespace

ForwardOutput forward(const NetworkState& state, const Tensor& x) {
  check_input_shape(state.spec, x);
  PassCounters::count_forward();
  const auto& p = state.params;
  std::size_t i = 0;
  Tensor t = x;
  if (state.spec.kind == ArchKind::kSmallCnn) {
    for (std::size_t l = 0; l < state.spec.conv_channels.size(); ++l) {
      t = ops::relu(ops::add(ops::conv2d(t, p[i]), p[i + 1]));
      i += 2;
    }
    t = ops::flatten(t);
    for (std::size_t l = 0; l < state.spec.dense.size(); ++l) {
      t = ops::relu(ops::add(ops::matmul(t, p[i]), p[i + 1]));
      i += 2;
    }
  } else {
    for (std::size_t l = 0; l < state.spec.hidden.size(); ++l) {
      t = ops::relu(ops::add(ops::matmul(t, p[i]), p[i + 1]));
      i += 2;
    }
  }
  ForwardOutput out;
  out.features = t;
  out.logits = ops::add(ops::matmul(t, p[i]), p[i + 1]);
  return out;
}

ModelTape::ModelTape(const NetworkState& state, bool params_require_grad)
    : state_(&state) {
  state.spec.validate();
  if (state.params.size() != state.spec.param_shapes().size()) {
    throw ShapeError("ModelTape: parameter count does not match spec");
  }
  param_vars_.reserve(state.params.size());
  for (const Tensor& p : state.params) {
    param_vars_.push_back(params_require_grad ? trace_.input(p) : trace_.constant(p));
  }
}

ModelTape::Pass ModelTape::forward(const Tensor& x, bool input_requires_grad) {
  check_input_shape(state_->spec, x);
  PassCounters::count_forward();
  Pass pass;
  pass.input = input_requires_grad ? trace_.input(x) : trace_.constant(x);
  const auto& spec = state_->spec;
  std::size_t i = 0;
  Var t = pass.input;
  if (spec.kind == ArchKind::kSmallCnn) {
    for (std::size_t l = 0; l < spec.conv_channels.size(); ++l) {
      t = trace_.relu(trace_.add(trace_.conv2d(t, param_vars_[i]), param_vars_[i + 1]));
      i += 2;
    }
    t = trace_.flatten(t);
    for (std::size_t l = 0; l < spec.dense.size(); ++l) {
      t = trace_.relu(trace_.add(trace_.matmul(t, param_vars_[i]), param_vars_[i + 1]));
      i += 2;
    }
  } else {
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
      t = trace_.relu(trace_.add(trace_.matmul(t, param_vars_[i]), param_vars_[i + 1]));
      i += 2;
    }
  }
  pass.features = t;
  pass.logits = trace_.add(trace_.matmul(t, param_vars_[i]), param_vars_[i + 1]);
  return pass;
}

std::vector<Tensor> ModelTape::param_grads(const GradientMap& g) const {
  std::vector<Tensor> out;
  out.reserve(param_vars_.size());
  for (Var v : param_vars_) out.push_back(g.at(v));
  return out;
}

}  // namespace iat
