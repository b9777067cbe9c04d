#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lp/data.hpp"
#include "lp/losses.hpp"
#include "lp/nn.hpp"
#include "lp/pattern.hpp"

namespace lp {

// Affine slice of parameter space: points theta0 + sum_i alpha_i * e_i where
// e_i is the unit vector on first-layer bias coordinate i. theta0 keeps its
// first z bias coordinates and first z weight columns at zero, so alpha acts
// directly as the first z pre-activation coordinates.
struct SliceSpec {
  NetworkParams theta0;
  int z = 0;
};

// Direction i materialized as a full parameter vector (zero except for a one
// on first-layer bias i).
NetworkParams direction_vector(const NetworkSpec& spec, int i);

// theta0 + sum alpha_i * direction_i, materialized.
NetworkParams slice_point(const SliceSpec& slice, const Eigen::VectorXd& alpha);

// Checks the slice layout invariants; when allow_embedding_columns is false
// the whole first weight matrix must be zero.
void validate_slice_layout(const NetworkSpec& spec, const SliceSpec& slice,
                           bool allow_embedding_columns);

struct TrainConfig {
  long samples_per_epoch = 1024;
  int epochs = 100;
  int batch = 128;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  HSampling h_mode = HSampling::UniformRandom;
  double margin = 1e-3;

  void validate() const;
};

struct ConstructionResult {
  SliceSpec slice;
  LossFamily family = LossFamily::Squared;
  Eigen::VectorXd offset;        // per pattern channel
  double final_objective = 0.0;  // regression objective on held-out slice coordinates
  std::vector<double> history;   // mean regression objective per epoch
};

struct Layout {
  NetworkParams params;
  FreezeMask mask;
};

// Input-independent construction: first-layer weights and biases all zero and
// frozen, the tail randomly initialized.
Layout build_paint_layout(const NetworkSpec& spec, int z, std::uint64_t seed);

// Network output as a function of the slice coordinate alone (valid once the
// first weight matrix is zero).
Eigen::VectorXd q_eval(const NetworkSpec& spec, const NetworkParams& params,
                       const Eigen::VectorXd& h);

// One implicit activation per pattern channel: the pooled activation over all
// label channels for single-channel patterns (a scalar prediction is scored
// against every label channel), per-label-channel activations otherwise.
std::vector<ImplicitActivation> pattern_activations(const Pattern& pattern, LossFamily family,
                                                    const LabelMoments& moments);

// Per-channel shift c making every T(h)+c representable as a loss value.
Eigen::VectorXd pattern_offsets(const Pattern& pattern,
                                const std::vector<ImplicitActivation>& acts, double margin);

// Trains the tail to regress sigma^{-1}(T(h)+c) over sampled slice
// coordinates. Requires spec.output_dim == pattern.channels.
ConstructionResult train_paint(const NetworkSpec& spec, const Pattern& pattern, LossFamily family,
                               const LabelMoments& moments, const TrainConfig& cfg);

// Anchored construction: first-layer weight columns before z are zero, the
// remaining columns hold a random embedding of the inputs, biases zero. The
// returned mask freezes the zero columns and the biases; the embedding
// columns stay trainable in the mask and are frozen by the trainer unless
// asked otherwise.
Layout build_anchor_layout(const NetworkSpec& spec, int z, std::uint64_t seed);

// Minimum pairwise distance between embedded inputs; +infinity for a single
// point. Callers should reject seeds giving values below 1e-6.
double check_shatter_injectivity(const Eigen::MatrixXd& first_weights, int z,
                                 const Eigen::MatrixXd& inputs);

// Cartesian product of slice coordinates and dataset examples with the
// per-example inverted loss targets: row r of targets pairs h row (r / N)
// with example (r % N).
struct AnchorTargets {
  Eigen::MatrixXd h;        // n_h x z
  Eigen::MatrixXd targets;  // (n_h * N) x channels
};
AnchorTargets build_anchor_targets(const Pattern& pattern, const Eigen::VectorXd& offsets,
                                   LossFamily family, const Eigen::MatrixXd& labels,
                                   const Eigen::MatrixXd& h_samples);

// Predictions of the network at slice coordinate h for every dataset input
// (rows), using the anchored layout's embedding columns.
Eigen::MatrixXd anchor_predictions(const NetworkSpec& spec, const NetworkParams& params, int z,
                                   const Eigen::MatrixXd& inputs, const Eigen::VectorXd& h);

ConstructionResult train_anchor(const NetworkSpec& spec, const Pattern& pattern, LossFamily family,
                                const Dataset& dataset, const TrainConfig& cfg,
                                bool train_embedding_columns = false);

}  // namespace lp
