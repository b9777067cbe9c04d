#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "lp/common.hpp"
#include "lp/nn.hpp"

using namespace lp;

namespace {

double scalar_act(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Identity: return x;
  }
  return x;
}

// Layer-by-layer recomputation with plain scalar loops, independent of the
// Eigen forward path.
Eigen::VectorXd forward_by_hand(const NetworkSpec& spec, const NetworkParams& params,
                                const Eigen::VectorXd& x) {
  std::vector<double> cur(x.data(), x.data() + x.size());
  std::vector<double> next;
  auto dense = [&](const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Activation act) {
    next.assign(static_cast<size_t>(w.cols()), 0.0);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double acc = b[j];
      for (Eigen::Index i = 0; i < w.rows(); ++i) acc += cur[static_cast<size_t>(i)] * w(i, j);
      next[static_cast<size_t>(j)] = scalar_act(act, acc);
    }
    cur = next;
  };
  dense(params.first_weights, params.first_biases, spec.hidden_act);
  for (size_t l = 0; l < params.rest.size(); ++l) {
    const bool last = l + 1 == params.rest.size();
    dense(params.rest[l].weights, params.rest[l].biases,
          last ? spec.output_act : spec.hidden_act);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(cur.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = cur[static_cast<size_t>(i)];
  return out;
}

struct FlatView {
  std::vector<double*> slots;
  explicit FlatView(NetworkParams& p) {
    auto add = [&](Eigen::MatrixXd& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) slots.push_back(m.data() + i);
    };
    auto addv = [&](Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) slots.push_back(v.data() + i);
    };
    add(p.first_weights);
    addv(p.first_biases);
    for (auto& layer : p.rest) {
      add(layer.weights);
      addv(layer.biases);
    }
  }
};

double fd_gradient_max_err(const NetworkSpec& spec, NetworkParams params, LossFamily family,
                           const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  const BatchGradient bg = batch_gradient(spec, params, inputs, targets, family);
  NetworkParams grad = bg.grad;
  FlatView pv(params);
  FlatView gv(grad);
  const double step = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < pv.slots.size(); ++i) {
    const double save = *pv.slots[i];
    *pv.slots[i] = save + step;
    const double up = batch_loss(spec, params, inputs, targets, family);
    *pv.slots[i] = save - step;
    const double dn = batch_loss(spec, params, inputs, targets, family);
    *pv.slots[i] = save;
    const double fd = (up - dn) / (2.0 * step);
    const double g = *gv.slots[i];
    worst = std::max(worst, std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)}));
  }
  return worst;
}

NetworkSpec small_spec() {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.widths = {8};
  spec.output_dim = 1;
  return spec;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("init is deterministic with zero biases") {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.widths = {8, 4};
  spec.output_dim = 2;
  const NetworkParams a = init_params(spec, 42);
  const NetworkParams b = init_params(spec, 42);
  CHECK(a.first_weights == b.first_weights);
  CHECK(a.first_biases == b.first_biases);
  REQUIRE(a.rest.size() == 2);
  for (size_t l = 0; l < a.rest.size(); ++l) {
    CHECK(a.rest[l].weights == b.rest[l].weights);
    CHECK(a.rest[l].biases == b.rest[l].biases);
  }
  CHECK(a.first_weights.rows() == 3);
  CHECK(a.first_weights.cols() == 8);
  CHECK(a.first_biases.size() == 8);
  CHECK((a.first_biases.array() == 0.0).all());
  for (const auto& layer : a.rest) CHECK((layer.biases.array() == 0.0).all());
  const NetworkParams c = init_params(spec, 43);
  CHECK(a.first_weights != c.first_weights);
}

TEST_CASE("zero first layer makes the output input independent") {
  NetworkSpec spec;
  spec.input_dim = 4;
  spec.widths = {6, 6};
  spec.output_dim = 3;
  NetworkParams params = init_params(spec, 7);
  params.first_weights.setZero();
  std::mt19937_64 rng(derive_seed(7, 9));
  std::normal_distribution<double> gauss;
  Eigen::VectorXd x1(4), x2(4);
  for (int i = 0; i < 4; ++i) {
    x1[i] = gauss(rng);
    x2[i] = gauss(rng);
  }
  const Eigen::VectorXd y1 = forward(spec, params, x1);
  const Eigen::VectorXd y2 = forward(spec, params, x2);
  CHECK(y1 == y2);
}

TEST_CASE("identity network reproduces its input") {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.widths = {3};
  spec.output_dim = 3;
  spec.hidden_act = Activation::Identity;
  spec.output_act = Activation::Identity;
  NetworkParams params = init_params(spec, 0);
  params.first_weights = Eigen::MatrixXd::Identity(3, 3);
  params.rest[0].weights = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd x(3);
  x << -1.5, 0.25, 3.0;
  CHECK(forward(spec, params, x) == x);
}

TEST_CASE("forward matches an independent scalar recomputation") {
  std::mt19937_64 rng(derive_seed(21, 0));
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    NetworkSpec spec;
    spec.input_dim = 1 + trial % 4;
    spec.widths = {3 + trial % 5, 2 + trial % 3};
    spec.output_dim = 1 + trial % 2;
    spec.hidden_act = trial % 2 ? Activation::ReLU : Activation::Tanh;
    spec.output_act = trial % 3 ? Activation::Identity : Activation::Sigmoid;
    const NetworkParams params = init_params(spec, 100 + trial);
    Eigen::VectorXd x(spec.input_dim);
    for (int i = 0; i < spec.input_dim; ++i) x[i] = gauss(rng);
    const Eigen::VectorXd got = forward(spec, params, x);
    const Eigen::VectorXd want = forward_by_hand(spec, params, x);
    REQUIRE(got.size() == want.size());
    for (Eigen::Index i = 0; i < got.size(); ++i)
      CHECK(std::abs(got[i] - want[i]) <= 1e-14 * std::max(1.0, std::abs(want[i])));
  }
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(derive_seed(22, 0));
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.widths = {8};
  spec.output_dim = 1;
  const NetworkParams params = init_params(spec, 5);
  Eigen::MatrixXd inputs(4, 2), targets(4, 1);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = gauss(rng);
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = uni(rng);
  CHECK(fd_gradient_max_err(spec, params, LossFamily::Squared, inputs, targets) <= 1e-5);

  spec.output_act = Activation::Sigmoid;
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = i % 2 ? 1.0 : 0.0;
  CHECK(fd_gradient_max_err(spec, init_params(spec, 6), LossFamily::BinaryCrossEntropy, inputs,
                            targets) <= 1e-5);
}

TEST_CASE("gradient is zero when predictions equal targets") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 3);
  params.first_weights.setZero();
  Eigen::MatrixXd inputs(5, 2);
  inputs.setRandom();
  const Eigen::MatrixXd pred = forward_batch(spec, params, inputs);
  const BatchGradient bg = batch_gradient(spec, params, inputs, pred, LossFamily::Squared);
  CHECK(bg.loss == 0.0);
  CHECK((bg.grad.first_biases.array() == 0.0).all());
  for (const auto& layer : bg.grad.rest) {
    CHECK((layer.weights.array() == 0.0).all());
    CHECK((layer.biases.array() == 0.0).all());
  }
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
  NetworkSpec spec = small_spec();
  const NetworkParams params = init_params(spec, 9);
  Eigen::MatrixXd inputs(3, 2), targets(3, 1);
  inputs.setRandom();
  targets.setRandom();
  Eigen::MatrixXd inputs2(6, 2), targets2(6, 1);
  inputs2 << inputs, inputs;
  targets2 << targets, targets;
  const BatchGradient one = batch_gradient(spec, params, inputs, targets, LossFamily::Squared);
  const BatchGradient two = batch_gradient(spec, params, inputs2, targets2, LossFamily::Squared);
  CHECK(std::abs(one.loss - two.loss) <= 1e-13);
  CHECK((one.grad.first_weights - two.grad.first_weights).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((one.grad.rest[0].weights - two.grad.rest[0].weights).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("sgd step") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 1);
  params.rest[0].biases[0] = 1.0;
  NetworkParams grad = zero_like(params);
  grad.rest[0].biases[0] = 2.0;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  cfg.lr = 0.1;
  OptimizerState opt = make_optimizer(cfg, params);
  optimizer_step(opt, params, grad);
  CHECK(params.rest[0].biases[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 2);
  const NetworkParams before = params;
  const NetworkParams grad = zero_like(params);
  OptimizerConfig cfg;
  OptimizerState opt = make_optimizer(cfg, params);
  optimizer_step(opt, params, grad);
  CHECK(opt.step == 1);
  CHECK(params.first_weights == before.first_weights);
  CHECK(params.rest[0].weights == before.rest[0].weights);
  CHECK(params.rest[0].biases == before.rest[0].biases);
}

TEST_CASE("adam matches the textbook recurrence") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.widths = {2};
  spec.output_dim = 1;
  NetworkParams params = init_params(spec, 4);
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  OptimizerState opt = make_optimizer(cfg, params);

  // First step moves each coordinate by about -lr * sign(g).
  NetworkParams grad = zero_like(params);
  grad.first_weights(0, 0) = 3.0;
  grad.first_weights(0, 1) = -0.5;
  NetworkParams stepped = params;
  optimizer_step(opt, stepped, grad);
  const double d0 = stepped.first_weights(0, 0) - params.first_weights(0, 0);
  const double d1 = stepped.first_weights(0, 1) - params.first_weights(0, 1);
  CHECK(d0 == doctest::Approx(-cfg.lr).epsilon(1e-6));
  CHECK(d1 == doctest::Approx(cfg.lr).epsilon(1e-6));

  // Several steps against a hand-rolled scalar recurrence.
  double m = 0.0, v = 0.0, x = params.first_weights(0, 0);
  params = init_params(spec, 4);
  opt = make_optimizer(cfg, params);
  std::mt19937_64 rng(derive_seed(23, 0));
  std::normal_distribution<double> gauss;
  for (int t = 1; t <= 20; ++t) {
    const double g = gauss(rng);
    grad = zero_like(params);
    grad.first_weights(0, 0) = g;
    optimizer_step(opt, params, grad);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(cfg.beta1, t));
    const double vhat = v / (1.0 - std::pow(cfg.beta2, t));
    x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(std::abs(params.first_weights(0, 0) - x) <= 5e-14);
  }
}

TEST_CASE("freeze masks pin parameters bitwise") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 11);
  FreezeMask mask = no_freeze(spec);
  mask.first_weights.setConstant(true);
  mask.first_biases.setConstant(true);
  const Eigen::MatrixXd w0 = params.first_weights;
  const Eigen::VectorXd b0 = params.first_biases;

  std::mt19937_64 rng(derive_seed(24, 0));
  std::normal_distribution<double> gauss;
  OptimizerConfig cfg;
  OptimizerState opt = make_optimizer(cfg, params);
  Eigen::MatrixXd inputs(8, 2), targets(8, 1);
  for (int step = 0; step < 100; ++step) {
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = gauss(rng);
    BatchGradient bg = batch_gradient(spec, params, inputs, targets, LossFamily::Squared);
    apply_freeze(mask, bg.grad);
    optimizer_step(opt, params, bg.grad);
  }
  CHECK(params.first_weights == w0);
  CHECK(params.first_biases == b0);
}

TEST_CASE("empty freeze mask is the identity") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 12);
  Eigen::MatrixXd inputs(4, 2), targets(4, 1);
  inputs.setRandom();
  targets.setRandom();
  BatchGradient bg = batch_gradient(spec, params, inputs, targets, LossFamily::Squared);
  const Eigen::MatrixXd gw = bg.grad.first_weights;
  const Eigen::VectorXd gb = bg.grad.first_biases;
  apply_freeze(no_freeze(spec), bg.grad);
  CHECK(bg.grad.first_weights == gw);
  CHECK(bg.grad.first_biases == gb);
}

TEST_CASE("column freeze keeps selected columns bitwise stable") {
  NetworkSpec spec = small_spec();
  NetworkParams params = init_params(spec, 13);
  FreezeMask mask = no_freeze(spec);
  mask.first_weights.col(0).setConstant(true);
  mask.first_weights.col(1).setConstant(true);
  const Eigen::VectorXd c0 = params.first_weights.col(0);
  const Eigen::VectorXd c1 = params.first_weights.col(1);
  const Eigen::VectorXd c2 = params.first_weights.col(2);
  Eigen::MatrixXd inputs(16, 2), targets(16, 1);
  inputs.setRandom();
  targets.setRandom();
  OptimizerConfig cfg;
  OptimizerState opt = make_optimizer(cfg, params);
  for (int step = 0; step < 25; ++step) {
    BatchGradient bg = batch_gradient(spec, params, inputs, targets, LossFamily::Squared);
    apply_freeze(mask, bg.grad);
    optimizer_step(opt, params, bg.grad);
  }
  CHECK(params.first_weights.col(0) == c0);
  CHECK(params.first_weights.col(1) == c1);
  CHECK(params.first_weights.col(2) != c2);
}

TEST_CASE("checkpoint round trip is bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(LP_BINARY_DIR) / "scratch" / "nn";
  fs::create_directories(dir);
  const std::string path = (dir / "net.lpnet").string();

  NetworkSpec spec;
  spec.input_dim = 5;
  spec.widths = {7, 3};
  spec.output_dim = 2;
  spec.hidden_act = Activation::ReLU;
  spec.output_act = Activation::Sigmoid;
  const NetworkParams params = init_params(spec, 77);
  save_checkpoint(path, spec, params);

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.spec.input_dim == spec.input_dim);
  CHECK(loaded.spec.widths == spec.widths);
  CHECK(loaded.spec.output_dim == spec.output_dim);
  CHECK(loaded.spec.hidden_act == spec.hidden_act);
  CHECK(loaded.spec.output_act == spec.output_act);
  CHECK(loaded.params.first_weights == params.first_weights);
  CHECK(loaded.params.first_biases == params.first_biases);
  REQUIRE(loaded.params.rest.size() == params.rest.size());
  for (size_t l = 0; l < params.rest.size(); ++l) {
    CHECK(loaded.params.rest[l].weights == params.rest[l].weights);
    CHECK(loaded.params.rest[l].biases == params.rest[l].biases);
  }

  const std::string bad = (dir / "bad.lpnet").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOTNET junk";
  }
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);

  const std::string cut = (dir / "cut.lpnet").string();
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(cut), std::runtime_error);
}

TEST_CASE("parameter count") {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.widths = {4, 5};
  spec.output_dim = 2;
  const NetworkParams params = init_params(spec, 0);
  CHECK(params.parameter_count() == 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
}

TEST_CASE("spec validation") {
  NetworkSpec spec;
  spec.input_dim = 0;
  spec.widths = {4};
  spec.output_dim = 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.input_dim = 2;
  spec.widths = {};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.widths = {4};
  spec.output_dim = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  CHECK(parse_activation("identity") == Activation::Identity);
  CHECK(parse_activation("linear") == Activation::Identity);
  CHECK(parse_activation("relu") == Activation::ReLU);
  CHECK_THROWS_AS(parse_activation("swish"), std::invalid_argument);
  CHECK(parse_optimizer("sgd") == OptimizerKind::Sgd);
  CHECK(parse_optimizer("adam") == OptimizerKind::Adam);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), std::invalid_argument);
}

}  // TEST_SUITE
