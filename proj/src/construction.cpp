#include "lp/construction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lp/common.hpp"

namespace lp {

namespace {

constexpr long kFullProductCap = 1000000;

bool all_zero(const Eigen::MatrixXd& m) {
  return m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

NetworkParams direction_vector(const NetworkSpec& spec, int i) {
  if (i < 0 || i >= spec.first_width())
    throw std::invalid_argument("direction index outside first layer width");
  NetworkParams dir = zero_like(init_params(spec, 0));
  dir.first_biases[i] = 1.0;
  return dir;
}

NetworkParams slice_point(const SliceSpec& slice, const Eigen::VectorXd& alpha) {
  if (alpha.size() != slice.z) throw std::invalid_argument("slice_point: alpha dimension mismatch");
  NetworkParams p = slice.theta0;
  p.first_biases.head(slice.z) += alpha;
  return p;
}

void validate_slice_layout(const NetworkSpec& spec, const SliceSpec& slice,
                           bool allow_embedding_columns) {
  if (slice.z < 1 || slice.z > spec.first_width())
    throw std::logic_error("slice dimensionality outside [1, first layer width]");
  const NetworkParams& p = slice.theta0;
  if (p.first_weights.rows() != spec.input_dim || p.first_weights.cols() != spec.first_width())
    throw std::logic_error("slice parameter shapes do not match the network");
  if (!all_zero(p.first_weights.leftCols(slice.z)))
    throw std::logic_error("slice requires zero weight columns on the slice coordinates");
  if (p.first_biases.head(slice.z).cwiseAbs().maxCoeff() != 0.0)
    throw std::logic_error("slice requires zero biases on the slice coordinates");
  if (!allow_embedding_columns) {
    if (!all_zero(p.first_weights))
      throw std::logic_error("input-independent slice requires a zero first weight matrix");
    if (p.first_biases.size() > 0 && p.first_biases.cwiseAbs().maxCoeff() != 0.0)
      throw std::logic_error("input-independent slice requires zero first-layer biases");
  }
}

void TrainConfig::validate() const {
  if (samples_per_epoch < 1) throw std::invalid_argument("samples_per_epoch must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  if (!(optimizer.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (margin < 0.0) throw std::invalid_argument("margin must be non-negative");
}

Layout build_paint_layout(const NetworkSpec& spec, int z, std::uint64_t seed) {
  spec.validate();
  if (z < 1) throw std::invalid_argument("slice dimensionality must be positive");
  if (spec.first_width() < z)
    throw std::invalid_argument("first layer width " + std::to_string(spec.first_width()) +
                                " is smaller than slice dimensionality " + std::to_string(z));
  Layout layout;
  layout.params = init_params(spec, seed);
  layout.params.first_weights.setZero();
  layout.params.first_biases.setZero();
  layout.mask = no_freeze(spec);
  layout.mask.first_weights.setConstant(true);
  layout.mask.first_biases.setConstant(true);
  return layout;
}

Eigen::VectorXd q_eval(const NetworkSpec& spec, const NetworkParams& params,
                       const Eigen::VectorXd& h) {
  if (!all_zero(params.first_weights))
    throw std::invalid_argument("q_eval needs a zero first weight matrix");
  if (h.size() > spec.first_width())
    throw std::invalid_argument("q_eval: more slice coordinates than first-layer units");
  Eigen::MatrixXd first_pre = params.first_biases.transpose();
  first_pre.leftCols(h.size()) += h.transpose();
  return forward_tail(spec, params, first_pre).output.row(0).transpose();
}

std::vector<ImplicitActivation> pattern_activations(const Pattern& pattern, LossFamily family,
                                                    const LabelMoments& moments) {
  std::vector<ImplicitActivation> acts;
  if (pattern.channels == 1) {
    acts.push_back(implicit_activation(family, moments));
    return acts;
  }
  if (static_cast<int>(moments.channels.size()) != pattern.channels)
    throw std::invalid_argument("multi-channel pattern needs one label channel per pattern channel");
  for (int c = 0; c < pattern.channels; ++c) acts.push_back(channel_activation(family, moments, c));
  return acts;
}

Eigen::VectorXd pattern_offsets(const Pattern& pattern, const std::vector<ImplicitActivation>& acts,
                                double margin) {
  if (static_cast<int>(acts.size()) != pattern.channels)
    throw std::invalid_argument("need one activation per pattern channel");
  const PatternRange range = pattern_range(pattern);
  Eigen::VectorXd offsets(pattern.channels);
  for (int c = 0; c < pattern.channels; ++c)
    offsets[c] = coverage_offset(acts[static_cast<std::size_t>(c)], range.min[c], range.max[c],
                                 margin);
  return offsets;
}

namespace {

// sigma^{-1}(T(h) + c) per channel for a block of slice coordinates.
Eigen::MatrixXd paint_targets(const Pattern& pattern, const std::vector<ImplicitActivation>& acts,
                              const Eigen::VectorXd& offsets, const Eigen::MatrixXd& h) {
  Eigen::MatrixXd t(h.rows(), pattern.channels);
  for (long i = 0; i < h.rows(); ++i) {
    const Eigen::VectorXd tv = eval_pattern(pattern, h.row(i).transpose());
    for (int c = 0; c < pattern.channels; ++c)
      t(i, c) = sigma_inverse(acts[static_cast<std::size_t>(c)], tv[c] + offsets[c]);
  }
  return t;
}

double tail_regression_loss(const NetworkSpec& spec, const NetworkParams& params,
                            const Eigen::MatrixXd& first_pre, const Eigen::MatrixXd& targets) {
  const Eigen::MatrixXd pred = forward_tail(spec, params, first_pre).output;
  return (pred - targets).array().square().rowwise().sum().mean();
}

}  // namespace

ConstructionResult train_paint(const NetworkSpec& spec, const Pattern& pattern, LossFamily family,
                               const LabelMoments& moments, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (spec.output_dim != pattern.channels)
    throw std::invalid_argument("network output dimension must equal pattern channels");
  const int z = pattern.z;
  const int k = spec.first_width();
  Layout layout = build_paint_layout(spec, z, derive_seed(cfg.seed, 1));
  const auto acts = pattern_activations(pattern, family, moments);
  const Eigen::VectorXd offsets = pattern_offsets(pattern, acts, cfg.margin);

  NetworkParams params = layout.params;
  OptimizerState opt = make_optimizer(cfg.optimizer, params);

  ConstructionResult res;
  res.family = family;
  res.offset = offsets;
  for (int e = 0; e < cfg.epochs; ++e) {
    const Eigen::MatrixXd h =
        sample_h(z, cfg.samples_per_epoch, cfg.h_mode, derive_seed(cfg.seed, 1000 + e));
    const Eigen::MatrixXd targets = paint_targets(pattern, acts, offsets, h);
    double epoch_loss = 0.0;
    long seen = 0;
    for (long start = 0; start < h.rows(); start += cfg.batch) {
      const long b = std::min<long>(cfg.batch, h.rows() - start);
      Eigen::MatrixXd first_pre = Eigen::MatrixXd::Zero(b, k);
      first_pre.leftCols(z) = h.middleRows(start, b);
      const ForwardCache cache = forward_tail(spec, params, first_pre);
      BatchGradient bg = tail_backward(spec, params, cache, Eigen::MatrixXd(),
                                       targets.middleRows(start, b), LossFamily::Squared);
      apply_freeze(layout.mask, bg.grad);
      optimizer_step(opt, params, bg.grad);
      epoch_loss += bg.loss * static_cast<double>(b);
      seen += b;
    }
    const double mean_loss = epoch_loss / static_cast<double>(seen);
    if (!std::isfinite(mean_loss)) throw std::runtime_error("training objective became non-finite");
    res.history.push_back(mean_loss);
  }

  {
    const Eigen::MatrixXd h_eval =
        sample_h(z, 2048, HSampling::UniformRandom, derive_seed(cfg.seed, 2));
    const Eigen::MatrixXd t_eval = paint_targets(pattern, acts, offsets, h_eval);
    Eigen::MatrixXd first_pre = Eigen::MatrixXd::Zero(h_eval.rows(), k);
    first_pre.leftCols(z) = h_eval;
    res.final_objective = tail_regression_loss(spec, params, first_pre, t_eval);
  }
  if (!std::isfinite(res.final_objective))
    throw std::runtime_error("final objective is non-finite");

  res.slice = SliceSpec{params, z};
  validate_slice_layout(spec, res.slice, false);
  return res;
}

Layout build_anchor_layout(const NetworkSpec& spec, int z, std::uint64_t seed) {
  spec.validate();
  if (z < 1) throw std::invalid_argument("slice dimensionality must be positive");
  if (spec.first_width() <= z)
    throw std::invalid_argument("anchored layout needs first layer width strictly above z");
  Layout layout;
  layout.params = init_params(spec, seed);
  layout.params.first_weights.leftCols(z).setZero();
  layout.params.first_biases.setZero();
  layout.mask = no_freeze(spec);
  layout.mask.first_weights.leftCols(z).setConstant(true);
  layout.mask.first_biases.setConstant(true);
  return layout;
}

double check_shatter_injectivity(const Eigen::MatrixXd& first_weights, int z,
                                 const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw std::invalid_argument("injectivity check needs data");
  if (z < 0 || z >= first_weights.cols())
    throw std::invalid_argument("injectivity check needs embedding columns past z");
  const Eigen::MatrixXd phi = inputs * first_weights.rightCols(first_weights.cols() - z);
  const long n = phi.rows();
  if (n == 1) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j)
      best = std::min(best, (phi.row(i) - phi.row(j)).norm());
  return best;
}

AnchorTargets build_anchor_targets(const Pattern& pattern, const Eigen::VectorXd& offsets,
                                   LossFamily family, const Eigen::MatrixXd& labels,
                                   const Eigen::MatrixXd& h_samples) {
  if (labels.cols() != pattern.channels)
    throw std::invalid_argument("anchored targets need one label channel per pattern channel");
  if (offsets.size() != pattern.channels)
    throw std::invalid_argument("need one offset per pattern channel");
  const long n_h = h_samples.rows();
  const long n = labels.rows();
  AnchorTargets out;
  out.h = h_samples;
  out.targets.resize(n_h * n, pattern.channels);
  for (long hi = 0; hi < n_h; ++hi) {
    const Eigen::VectorXd tv = eval_pattern(pattern, h_samples.row(hi).transpose());
    for (long i = 0; i < n; ++i)
      for (int c = 0; c < pattern.channels; ++c)
        out.targets(hi * n + i, c) = per_example_inverse(family, labels(i, c), tv[c] + offsets[c]);
  }
  return out;
}

Eigen::MatrixXd anchor_predictions(const NetworkSpec& spec, const NetworkParams& params, int z,
                                   const Eigen::MatrixXd& inputs, const Eigen::VectorXd& h) {
  if (h.size() != z) throw std::invalid_argument("anchor_predictions: coordinate dimension mismatch");
  Eigen::MatrixXd first_pre = first_preactivation(spec, params, inputs);
  first_pre.leftCols(z).rowwise() += h.transpose();
  return forward_tail(spec, params, first_pre).output;
}

ConstructionResult train_anchor(const NetworkSpec& spec, const Pattern& pattern, LossFamily family,
                                const Dataset& dataset, const TrainConfig& cfg,
                                bool train_embedding_columns) {
  spec.validate();
  cfg.validate();
  const int z = pattern.z;
  const int k = spec.first_width();
  const int emb = k - z;
  if (spec.output_dim != pattern.channels)
    throw std::invalid_argument("network output dimension must equal pattern channels");
  if (dataset.targets.cols() != pattern.channels)
    throw std::invalid_argument("anchored construction needs one label channel per pattern channel");
  if (dataset.inputs.cols() != spec.input_dim)
    throw std::invalid_argument("dataset input dimension does not match the network");

  Layout layout = build_anchor_layout(spec, z, derive_seed(cfg.seed, 1));
  FreezeMask mask = layout.mask;
  if (!train_embedding_columns) mask.first_weights.setConstant(true);

  const LabelMoments moments = label_moments(dataset.targets);
  const auto acts = pattern_activations(pattern, family, moments);
  const Eigen::VectorXd offsets = pattern_offsets(pattern, acts, cfg.margin);

  NetworkParams params = layout.params;
  OptimizerState opt = make_optimizer(cfg.optimizer, params);
  const Eigen::MatrixXd& X = dataset.inputs;
  const Eigen::MatrixXd& Y = dataset.targets;
  const long n = X.rows();
  const int channels = pattern.channels;

  Eigen::MatrixXd psi_frozen;
  if (!train_embedding_columns) psi_frozen = X * params.first_weights.rightCols(emb);

  // One gradient step on rows (h index, example index) of the product set.
  auto step_on = [&](const Eigen::MatrixXd& h, const Eigen::MatrixXd& shifted_pattern,
                     const std::vector<std::pair<long, long>>& rows) {
    const long b = static_cast<long>(rows.size());
    Eigen::MatrixXd first_pre(b, k);
    Eigen::MatrixXd targets(b, channels);
    Eigen::MatrixXd xb;
    if (train_embedding_columns) xb.resize(b, spec.input_dim);
    for (long r = 0; r < b; ++r) {
      const auto [hi, i] = rows[static_cast<std::size_t>(r)];
      first_pre.row(r).head(z) = h.row(hi);
      if (train_embedding_columns) {
        xb.row(r) = X.row(i);
        first_pre.row(r).tail(emb) = X.row(i) * params.first_weights.rightCols(emb);
      } else {
        first_pre.row(r).tail(emb) = psi_frozen.row(i);
      }
      for (int c = 0; c < channels; ++c)
        targets(r, c) = per_example_inverse(family, Y(i, c), shifted_pattern(hi, c));
    }
    const ForwardCache cache = forward_tail(spec, params, first_pre);
    BatchGradient bg = tail_backward(spec, params, cache,
                                     train_embedding_columns ? xb : Eigen::MatrixXd(), targets,
                                     LossFamily::Squared);
    apply_freeze(mask, bg.grad);
    optimizer_step(opt, params, bg.grad);
    return bg.loss;
  };

  auto shifted_pattern_for = [&](const Eigen::MatrixXd& h) {
    Eigen::MatrixXd p(h.rows(), channels);
    for (long hi = 0; hi < h.rows(); ++hi) {
      const Eigen::VectorXd tv = eval_pattern(pattern, h.row(hi).transpose());
      for (int c = 0; c < channels; ++c) p(hi, c) = tv[c] + offsets[c];
    }
    return p;
  };

  ConstructionResult res;
  res.family = family;
  res.offset = offsets;
  for (int e = 0; e < cfg.epochs; ++e) {
    const Eigen::MatrixXd h =
        sample_h(z, cfg.samples_per_epoch, cfg.h_mode, derive_seed(cfg.seed, 1000 + e));
    const Eigen::MatrixXd shifted = shifted_pattern_for(h);
    const long n_h = h.rows();
    double epoch_loss = 0.0;
    long seen = 0;
    if (n_h * n <= kFullProductCap) {
      std::vector<long> perm(static_cast<std::size_t>(n_h * n));
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(e)));
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<std::pair<long, long>> rows;
      for (long start = 0; start < static_cast<long>(perm.size()); start += cfg.batch) {
        const long b = std::min<long>(cfg.batch, static_cast<long>(perm.size()) - start);
        rows.clear();
        for (long r = 0; r < b; ++r) {
          const long flat = perm[static_cast<std::size_t>(start + r)];
          rows.emplace_back(flat / n, flat % n);
        }
        epoch_loss += step_on(h, shifted, rows) * static_cast<double>(b);
        seen += b;
      }
    } else {
      // Product set too large: pair each sampled coordinate with a random
      // data minibatch instead.
      std::mt19937_64 rng(derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(e)));
      std::uniform_int_distribution<long> pick(0, n - 1);
      std::vector<std::pair<long, long>> rows;
      for (long hi = 0; hi < n_h; ++hi) {
        rows.clear();
        const long b = std::min<long>(cfg.batch, n);
        for (long r = 0; r < b; ++r) rows.emplace_back(hi, pick(rng));
        epoch_loss += step_on(h, shifted, rows) * static_cast<double>(b);
        seen += b;
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(seen);
    if (!std::isfinite(mean_loss)) throw std::runtime_error("training objective became non-finite");
    res.history.push_back(mean_loss);
  }

  {
    const long eval_h = std::min<long>(256, std::max<long>(16, kFullProductCap / std::max<long>(n, 1)));
    const Eigen::MatrixXd h_eval =
        sample_h(z, eval_h, HSampling::UniformRandom, derive_seed(cfg.seed, 2));
    const Eigen::MatrixXd shifted = shifted_pattern_for(h_eval);
    double total = 0.0;
    long rows_total = 0;
    Eigen::MatrixXd psi = X * params.first_weights.rightCols(emb);
    for (long hi = 0; hi < h_eval.rows(); ++hi) {
      Eigen::MatrixXd first_pre(n, k);
      first_pre.leftCols(z) = h_eval.row(hi).replicate(n, 1);
      first_pre.rightCols(emb) = psi;
      Eigen::MatrixXd targets(n, channels);
      for (long i = 0; i < n; ++i)
        for (int c = 0; c < channels; ++c)
          targets(i, c) = per_example_inverse(family, Y(i, c), shifted(hi, c));
      total += tail_regression_loss(spec, params, first_pre, targets) * static_cast<double>(n);
      rows_total += n;
    }
    res.final_objective = total / static_cast<double>(rows_total);
  }
  if (!std::isfinite(res.final_objective))
    throw std::runtime_error("final objective is non-finite");

  res.slice = SliceSpec{params, z};
  validate_slice_layout(spec, res.slice, true);
  return res;
}

}  // namespace lp
