#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lp/losses.hpp"

namespace lp {

enum class Activation { Tanh, ReLU, Sigmoid, Identity };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);
double apply_activation(Activation a, double x);

// Fully connected architecture: input_dim -> widths... -> output_dim.
// Hidden layers share one activation, the output layer has its own.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> widths;
  int output_dim = 0;
  Activation hidden_act = Activation::Tanh;
  Activation output_act = Activation::Identity;

  int first_width() const;
  void validate() const;
};

struct LayerParams {
  Eigen::MatrixXd weights;  // in_dim x out_dim
  Eigen::VectorXd biases;   // out_dim
};

struct NetworkParams {
  Eigen::MatrixXd first_weights;  // input_dim x first_width
  Eigen::VectorXd first_biases;   // first_width
  std::vector<LayerParams> rest;

  long parameter_count() const;
};

using Gradient = NetworkParams;

// Entries set to true stay fixed during optimization.
struct FreezeMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> first_weights;
  Eigen::Array<bool, Eigen::Dynamic, 1> first_biases;
};

FreezeMask no_freeze(const NetworkSpec& spec);
void apply_freeze(const FreezeMask& mask, Gradient& grad);

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);
Gradient zero_like(const NetworkParams& params);

// Pre-activations of the first layer for a batch (rows are samples).
Eigen::MatrixXd first_preactivation(const NetworkSpec& spec, const NetworkParams& params,
                                    const Eigen::MatrixXd& inputs);

// Everything after the first pre-activation, with the intermediate
// activations kept for a subsequent backward pass.
struct ForwardCache {
  Eigen::MatrixXd first_pre;              // batch x first_width
  std::vector<Eigen::MatrixXd> hidden;    // activations per hidden layer
  Eigen::MatrixXd output;                 // batch x output_dim
};

ForwardCache forward_tail(const NetworkSpec& spec, const NetworkParams& params,
                          const Eigen::MatrixXd& first_pre);

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                              const Eigen::MatrixXd& inputs);
Eigen::VectorXd forward(const NetworkSpec& spec, const NetworkParams& params,
                        const Eigen::VectorXd& input);

// Mean per-example loss over a batch plus its gradient. Works from an
// already computed forward cache so callers can reuse the tail pass; the
// gradient with respect to first-layer parameters is derived from `inputs`
// (pass an empty matrix to skip it, e.g. when those parameters are frozen
// and the first pre-activation was assembled directly).
struct BatchGradient {
  double loss = 0.0;
  Gradient grad;
};

BatchGradient tail_backward(const NetworkSpec& spec, const NetworkParams& params,
                            const ForwardCache& cache, const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets, LossFamily family);

BatchGradient batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                             const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                             LossFamily family);

double batch_loss(const NetworkSpec& spec, const NetworkParams& params,
                  const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  LossFamily family);

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  long step = 0;
  Gradient m;
  Gradient v;
};

OptimizerState make_optimizer(const OptimizerConfig& config, const NetworkParams& params);
void optimizer_step(OptimizerState& state, NetworkParams& params, const Gradient& grad);

void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     const NetworkParams& params);
struct Checkpoint {
  NetworkSpec spec;
  NetworkParams params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lp
