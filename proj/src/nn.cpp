#include "lp/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "lp/common.hpp"

namespace lp {

namespace {

constexpr char kMagic[6] = {'L', 'P', 'N', 'E', 'T', '1'};

void apply_act_inplace(Activation a, Eigen::MatrixXd& m) {
  switch (a) {
    case Activation::Tanh:
      m = m.array().tanh();
      return;
    case Activation::ReLU:
      m = m.array().max(0.0);
      return;
    case Activation::Sigmoid:
      m = (1.0 / (1.0 + (-m.array()).exp()));
      return;
    case Activation::Identity:
      return;
  }
  throw std::logic_error("unknown activation");
}

// Derivative expressed through the activation output, valid for every
// supported activation and cheaper than keeping pre-activations around.
Eigen::ArrayXXd act_derivative(Activation a, const Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - out.array().square();
    case Activation::ReLU:
      return (out.array() > 0.0).cast<double>();
    case Activation::Sigmoid:
      return out.array() * (1.0 - out.array());
    case Activation::Identity:
      return Eigen::ArrayXXd::Ones(out.rows(), out.cols());
  }
  throw std::logic_error("unknown activation");
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_row_major(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      unsigned char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
      out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_f64_row_major(std::istream& in, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      unsigned char b[8];
      in.read(reinterpret_cast<char*>(b), 8);
      if (!in) throw std::runtime_error("checkpoint truncated");
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      double v;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
}

std::uint8_t activation_code(Activation a) { return static_cast<std::uint8_t>(a); }

Activation activation_from_code(std::uint8_t code) {
  if (code > static_cast<std::uint8_t>(Activation::Identity))
    throw std::runtime_error("checkpoint has unknown activation code");
  return static_cast<Activation>(code);
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  throw std::logic_error("unknown activation");
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + name +
                              "' (expected tanh|relu|sigmoid|identity)");
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Identity: return x;
  }
  throw std::logic_error("unknown activation");
}

int NetworkSpec::first_width() const {
  return widths.empty() ? 0 : widths.front();
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("network needs input_dim >= 1");
  if (output_dim < 1) throw std::invalid_argument("network needs output_dim >= 1");
  if (widths.empty()) throw std::invalid_argument("network needs at least one hidden layer");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
}

long NetworkParams::parameter_count() const {
  long n = first_weights.size() + first_biases.size();
  for (const auto& layer : rest) n += layer.weights.size() + layer.biases.size();
  return n;
}

FreezeMask no_freeze(const NetworkSpec& spec) {
  FreezeMask mask;
  mask.first_weights =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(spec.input_dim,
                                                                   spec.first_width(), false);
  mask.first_biases = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(spec.first_width(), false);
  return mask;
}

void apply_freeze(const FreezeMask& mask, Gradient& grad) {
  if (mask.first_weights.size() > 0) {
    if (mask.first_weights.rows() != grad.first_weights.rows() ||
        mask.first_weights.cols() != grad.first_weights.cols())
      throw std::invalid_argument("freeze mask shape mismatch");
    grad.first_weights = mask.first_weights.select(0.0, grad.first_weights);
  }
  if (mask.first_biases.size() > 0) {
    if (mask.first_biases.size() != grad.first_biases.size())
      throw std::invalid_argument("freeze mask shape mismatch");
    grad.first_biases = mask.first_biases.select(0.0, grad.first_biases.array()).matrix();
  }
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkParams p;
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& m, int fan_in, std::uint64_t stream) {
    std::mt19937_64 rng(derive_seed(seed, stream));
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * normal(rng);
  };
  p.first_weights.resize(spec.input_dim, spec.first_width());
  fill(p.first_weights, spec.input_dim, 0);
  p.first_biases = Eigen::VectorXd::Zero(spec.first_width());
  int in_dim = spec.first_width();
  for (std::size_t j = 0; j < spec.widths.size(); ++j) {
    const bool last = j + 1 == spec.widths.size();
    const int out_dim = last ? spec.output_dim : spec.widths[j + 1];
    LayerParams layer;
    layer.weights.resize(in_dim, out_dim);
    fill(layer.weights, in_dim, j + 1);
    layer.biases = Eigen::VectorXd::Zero(out_dim);
    p.rest.push_back(std::move(layer));
    in_dim = out_dim;
  }
  return p;
}

Gradient zero_like(const NetworkParams& params) {
  Gradient g;
  g.first_weights = Eigen::MatrixXd::Zero(params.first_weights.rows(), params.first_weights.cols());
  g.first_biases = Eigen::VectorXd::Zero(params.first_biases.size());
  for (const auto& layer : params.rest) {
    LayerParams z;
    z.weights = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    z.biases = Eigen::VectorXd::Zero(layer.biases.size());
    g.rest.push_back(std::move(z));
  }
  return g;
}

Eigen::MatrixXd first_preactivation(const NetworkSpec& spec, const NetworkParams& params,
                                    const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != spec.input_dim)
    throw std::invalid_argument("first_preactivation: input dim mismatch");
  return (inputs * params.first_weights).rowwise() + params.first_biases.transpose();
}

ForwardCache forward_tail(const NetworkSpec& spec, const NetworkParams& params,
                          const Eigen::MatrixXd& first_pre) {
  if (first_pre.cols() != spec.first_width())
    throw std::invalid_argument("forward_tail: first layer width mismatch");
  if (params.rest.size() != spec.widths.size())
    throw std::invalid_argument("forward_tail: parameter/spec layer count mismatch");
  ForwardCache cache;
  cache.first_pre = first_pre;
  Eigen::MatrixXd a = first_pre;
  apply_act_inplace(spec.hidden_act, a);
  cache.hidden.push_back(a);
  for (std::size_t j = 0; j + 1 < params.rest.size(); ++j) {
    a = (a * params.rest[j].weights).rowwise() + params.rest[j].biases.transpose();
    apply_act_inplace(spec.hidden_act, a);
    cache.hidden.push_back(a);
  }
  const auto& out = params.rest.back();
  cache.output = (a * out.weights).rowwise() + out.biases.transpose();
  apply_act_inplace(spec.output_act, cache.output);
  return cache;
}

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                              const Eigen::MatrixXd& inputs) {
  return forward_tail(spec, params, first_preactivation(spec, params, inputs)).output;
}

Eigen::VectorXd forward(const NetworkSpec& spec, const NetworkParams& params,
                        const Eigen::VectorXd& input) {
  return forward_batch(spec, params, input.transpose()).row(0).transpose();
}

namespace {

double mean_batch_loss(LossFamily family, const Eigen::MatrixXd& pred,
                       const Eigen::MatrixXd& target) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    total += per_example_loss(family, pred.row(i).transpose(), target.row(i).transpose());
  return total / static_cast<double>(pred.rows());
}

// Gradient of the mean batch loss with respect to the output layer
// pre-activation. Cross-entropy composed with a sigmoid cancels to the
// familiar prediction-minus-target form.
Eigen::MatrixXd output_delta(const NetworkSpec& spec, LossFamily family,
                             const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  const double inv_b = 1.0 / static_cast<double>(pred.rows());
  if (family == LossFamily::BinaryCrossEntropy && spec.output_act == Activation::Sigmoid)
    return inv_b * (pred - target);
  Eigen::ArrayXXd dldp;
  if (family == LossFamily::Squared) {
    dldp = 2.0 * inv_b * (pred - target).array();
  } else {
    if ((pred.array() <= 0.0).any() || (pred.array() >= 1.0).any())
      throw std::invalid_argument("cross-entropy needs predictions strictly inside (0,1)");
    dldp = inv_b * (pred - target).array() / (pred.array() * (1.0 - pred.array()));
  }
  return (dldp * act_derivative(spec.output_act, pred)).matrix();
}

}  // namespace

BatchGradient tail_backward(const NetworkSpec& spec, const NetworkParams& params,
                            const ForwardCache& cache, const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets, LossFamily family) {
  if (targets.rows() != cache.output.rows() || targets.cols() != cache.output.cols())
    throw std::invalid_argument("tail_backward: target shape mismatch");
  BatchGradient result;
  result.loss = mean_batch_loss(family, cache.output, targets);
  result.grad = zero_like(params);

  Eigen::MatrixXd delta = output_delta(spec, family, cache.output, targets);
  const std::size_t n_rest = params.rest.size();
  // Gradient with respect to each rest layer, walking backwards.
  Eigen::MatrixXd upstream;  // d loss / d activation of the layer below
  for (std::size_t j = n_rest; j-- > 0;) {
    const Eigen::MatrixXd& below = cache.hidden[j];
    result.grad.rest[j].weights = below.transpose() * delta;
    result.grad.rest[j].biases = delta.colwise().sum().transpose();
    upstream = delta * params.rest[j].weights.transpose();
    if (j > 0)
      delta = (upstream.array() * act_derivative(spec.hidden_act, cache.hidden[j])).matrix();
  }
  const Eigen::MatrixXd first_delta =
      (upstream.array() * act_derivative(spec.hidden_act, cache.hidden[0])).matrix();
  result.grad.first_biases = first_delta.colwise().sum().transpose();
  if (inputs.size() > 0) {
    if (inputs.rows() != first_delta.rows())
      throw std::invalid_argument("tail_backward: input batch size mismatch");
    result.grad.first_weights = inputs.transpose() * first_delta;
  }
  return result;
}

BatchGradient batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                             const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                             LossFamily family) {
  const ForwardCache cache = forward_tail(spec, params, first_preactivation(spec, params, inputs));
  return tail_backward(spec, params, cache, inputs, targets, family);
}

double batch_loss(const NetworkSpec& spec, const NetworkParams& params,
                  const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  LossFamily family) {
  return mean_batch_loss(family, forward_batch(spec, params, inputs), targets);
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd|adam)");
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerState make_optimizer(const OptimizerConfig& config, const NetworkParams& params) {
  OptimizerState st;
  st.config = config;
  st.step = 0;
  if (config.kind == OptimizerKind::Adam) {
    st.m = zero_like(params);
    st.v = zero_like(params);
  }
  return st;
}

namespace {

void adam_update(Eigen::MatrixXd& p, const Eigen::MatrixXd& g, Eigen::MatrixXd& m,
                 Eigen::MatrixXd& v, const OptimizerConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = (c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square()).matrix();
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

void adam_update(Eigen::VectorXd& p, const Eigen::VectorXd& g, Eigen::VectorXd& m,
                 Eigen::VectorXd& v, const OptimizerConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = (c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square()).matrix();
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void optimizer_step(OptimizerState& state, NetworkParams& params, const Gradient& grad) {
  const OptimizerConfig& c = state.config;
  state.step += 1;
  if (c.kind == OptimizerKind::Sgd) {
    params.first_weights -= c.lr * grad.first_weights;
    params.first_biases -= c.lr * grad.first_biases;
    for (std::size_t j = 0; j < params.rest.size(); ++j) {
      params.rest[j].weights -= c.lr * grad.rest[j].weights;
      params.rest[j].biases -= c.lr * grad.rest[j].biases;
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  adam_update(params.first_weights, grad.first_weights, state.m.first_weights,
              state.v.first_weights, c, bc1, bc2);
  adam_update(params.first_biases, grad.first_biases, state.m.first_biases, state.v.first_biases,
              c, bc1, bc2);
  for (std::size_t j = 0; j < params.rest.size(); ++j) {
    adam_update(params.rest[j].weights, grad.rest[j].weights, state.m.rest[j].weights,
                state.v.rest[j].weights, c, bc1, bc2);
    adam_update(params.rest[j].biases, grad.rest[j].biases, state.m.rest[j].biases,
                state.v.rest[j].biases, c, bc1, bc2);
  }
}

void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     const NetworkParams& params) {
  spec.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint8_t acts[2] = {activation_code(spec.hidden_act), activation_code(spec.output_act)};
  out.write(reinterpret_cast<const char*>(acts), 2);
  write_u32(out, static_cast<std::uint32_t>(spec.input_dim));
  write_u32(out, static_cast<std::uint32_t>(spec.widths.size()));
  for (int w : spec.widths) write_u32(out, static_cast<std::uint32_t>(w));
  write_u32(out, static_cast<std::uint32_t>(spec.output_dim));
  write_f64_row_major(out, params.first_weights);
  write_f64_row_major(out, params.first_biases);
  for (const auto& layer : params.rest) {
    write_f64_row_major(out, layer.weights);
    write_f64_row_major(out, layer.biases);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kMagic, 6) != 0)
    throw std::runtime_error("not a network checkpoint: " + path);
  std::uint8_t acts[2];
  in.read(reinterpret_cast<char*>(acts), 2);
  if (!in) throw std::runtime_error("checkpoint truncated");
  Checkpoint ck;
  ck.spec.hidden_act = activation_from_code(acts[0]);
  ck.spec.output_act = activation_from_code(acts[1]);
  ck.spec.input_dim = static_cast<int>(read_u32(in));
  const std::uint32_t n_hidden = read_u32(in);
  if (n_hidden == 0 || n_hidden > 1u << 16) throw std::runtime_error("checkpoint layer count out of range");
  for (std::uint32_t j = 0; j < n_hidden; ++j) ck.spec.widths.push_back(static_cast<int>(read_u32(in)));
  ck.spec.output_dim = static_cast<int>(read_u32(in));
  ck.spec.validate();
  ck.params.first_weights.resize(ck.spec.input_dim, ck.spec.first_width());
  read_f64_row_major(in, ck.params.first_weights);
  Eigen::MatrixXd bias(ck.spec.first_width(), 1);
  read_f64_row_major(in, bias);
  ck.params.first_biases = bias.col(0);
  int in_dim = ck.spec.first_width();
  for (std::size_t j = 0; j < ck.spec.widths.size(); ++j) {
    const bool last = j + 1 == ck.spec.widths.size();
    const int out_dim = last ? ck.spec.output_dim : ck.spec.widths[j + 1];
    LayerParams layer;
    layer.weights.resize(in_dim, out_dim);
    read_f64_row_major(in, layer.weights);
    Eigen::MatrixXd lb(out_dim, 1);
    read_f64_row_major(in, lb);
    layer.biases = lb.col(0);
    ck.params.rest.push_back(std::move(layer));
    in_dim = out_dim;
  }
  return ck;
}

}  // namespace lp
