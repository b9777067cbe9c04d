#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace lp {

enum class LossFamily { Squared, BinaryCrossEntropy };

std::string loss_family_name(LossFamily f);
LossFamily parse_loss_family(const std::string& name);

// First and second empirical moments of one label channel.
struct ChannelMoments {
  double mean = 0.0;
  double mean_sq = 0.0;
};

// Empirical label statistics of a dataset, kept per channel. The pooled
// accessors average over channels; they fully determine the implicit
// activation of the squared and binary cross-entropy families.
struct LabelMoments {
  long count = 0;
  std::vector<ChannelMoments> channels;

  double mean_y() const;     // pooled over channels
  double mean_y_sq() const;  // pooled over channels
};

// Exact empirical moments of a label matrix (one row per example).
LabelMoments label_moments(const Eigen::MatrixXd& labels);

// The activation induced by a loss family and a label distribution:
// sigma(p) = mean over examples of the per-example loss at the constant
// prediction p, summed over the channels this activation covers. A
// single-head activation covers one channel; the scalar-broadcast one
// covers every label channel of the dataset.
struct ImplicitActivation {
  LossFamily family = LossFamily::Squared;
  std::vector<ChannelMoments> channels;
};

// Activation summing over all label channels (scalar prediction broadcast).
ImplicitActivation implicit_activation(LossFamily family, const LabelMoments& moments);
// Activation of a single label channel (one output head).
ImplicitActivation channel_activation(LossFamily family, const LabelMoments& moments, int channel);

// Per-example loss. Shapes must match (channel-wise sum) or the prediction
// must be a single value, which is then compared against every target
// channel. Binary cross-entropy requires p in (0,1) and y in {0,1}.
double per_example_loss(LossFamily family, const Eigen::VectorXd& p, const Eigen::VectorXd& y);

double sigma_eval(const ImplicitActivation& act, double p);
double sigma_derivative(const ImplicitActivation& act, double p);

struct SigmaMin {
  double p_star = 0.0;  // unique minimizer
  double v_star = 0.0;  // minimum value
};
SigmaMin sigma_min(const ImplicitActivation& act);

// Thrown when a requested loss value lies below the activation's minimum.
class UnrepresentableValue : public std::invalid_argument {
 public:
  UnrepresentableValue(double value, double v_star);
  double value;
  double v_star;
};

// Largest p with sigma(p) = v. Values within 1e-12 below the minimum are
// clamped to it; anything lower throws UnrepresentableValue.
double sigma_inverse(const ImplicitActivation& act, double v);

// Inverse of the single-example loss p -> loss(p, y), restricted to the
// branch with p >= y for the squared family. v must be >= 0 (squared)
// or > 0 (binary cross-entropy).
double per_example_inverse(LossFamily family, double y, double v);

// Additive constant c such that [pattern_min + c, pattern_max + c] lies in
// the image of sigma with the requested safety margin above its minimum.
double coverage_offset(const ImplicitActivation& act, double pattern_min, double pattern_max,
                       double margin = 1e-3);

// CSV profile p,sigma(p) over a uniform grid, for plotting.
void export_sigma_profile(const ImplicitActivation& act, double p_lo, double p_hi, int samples,
                          const std::string& path);

}  // namespace lp
