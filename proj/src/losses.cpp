#include "lp/losses.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "lp/common.hpp"

namespace lp {

namespace {

void check_bce_domain(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("binary cross-entropy needs p in (0,1), got p=" + format_double(p));
}

double scalar_loss(LossFamily family, double p, double y) {
  switch (family) {
    case LossFamily::Squared: {
      const double d = p - y;
      return d * d;
    }
    case LossFamily::BinaryCrossEntropy: {
      check_bce_domain(p);
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("binary cross-entropy needs labels in {0,1}, got y=" +
                                    format_double(y));
      return y == 1.0 ? -std::log(p) : -std::log1p(-p);
    }
  }
  throw std::logic_error("unknown loss family");
}

}  // namespace

std::string loss_family_name(LossFamily f) {
  return f == LossFamily::Squared ? "squared" : "bce";
}

LossFamily parse_loss_family(const std::string& name) {
  if (name == "squared") return LossFamily::Squared;
  if (name == "bce" || name == "binary_cross_entropy") return LossFamily::BinaryCrossEntropy;
  throw std::invalid_argument("unknown loss family '" + name + "' (expected squared|bce)");
}

double LabelMoments::mean_y() const {
  double s = 0.0;
  for (const auto& c : channels) s += c.mean;
  return channels.empty() ? 0.0 : s / static_cast<double>(channels.size());
}

double LabelMoments::mean_y_sq() const {
  double s = 0.0;
  for (const auto& c : channels) s += c.mean_sq;
  return channels.empty() ? 0.0 : s / static_cast<double>(channels.size());
}

LabelMoments label_moments(const Eigen::MatrixXd& labels) {
  if (labels.rows() == 0) throw std::invalid_argument("label_moments: empty label list");
  LabelMoments m;
  m.count = labels.rows();
  m.channels.resize(static_cast<std::size_t>(labels.cols()));
  for (Eigen::Index c = 0; c < labels.cols(); ++c) {
    m.channels[static_cast<std::size_t>(c)].mean = labels.col(c).mean();
    m.channels[static_cast<std::size_t>(c)].mean_sq = labels.col(c).array().square().mean();
  }
  return m;
}

ImplicitActivation implicit_activation(LossFamily family, const LabelMoments& moments) {
  return ImplicitActivation{family, moments.channels};
}

ImplicitActivation channel_activation(LossFamily family, const LabelMoments& moments, int channel) {
  if (channel < 0 || static_cast<std::size_t>(channel) >= moments.channels.size())
    throw std::invalid_argument("channel_activation: channel out of range");
  return ImplicitActivation{family, {moments.channels[static_cast<std::size_t>(channel)]}};
}

double per_example_loss(LossFamily family, const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
  double total = 0.0;
  if (p.size() == y.size()) {
    for (Eigen::Index c = 0; c < y.size(); ++c) total += scalar_loss(family, p[c], y[c]);
  } else if (p.size() == 1) {
    for (Eigen::Index c = 0; c < y.size(); ++c) total += scalar_loss(family, p[0], y[c]);
  } else {
    throw std::invalid_argument("per_example_loss: prediction/target size mismatch");
  }
  return total;
}

double sigma_eval(const ImplicitActivation& act, double p) {
  double total = 0.0;
  switch (act.family) {
    case LossFamily::Squared:
      for (const auto& c : act.channels) {
        const double d = p - c.mean;
        total += d * d + (c.mean_sq - c.mean * c.mean);
      }
      return total;
    case LossFamily::BinaryCrossEntropy:
      for (const auto& c : act.channels) {
        // Terms with zero weight are skipped so degenerate label sets
        // (all zeros or all ones) stay evaluable at their minimizer.
        if (c.mean > 0.0) {
          if (!(p > 0.0)) check_bce_domain(p);
          total -= c.mean * std::log(p);
        }
        if (c.mean < 1.0) {
          if (!(p < 1.0)) check_bce_domain(p);
          total -= (1.0 - c.mean) * std::log1p(-p);
        }
      }
      return total;
  }
  throw std::logic_error("unknown loss family");
}

double sigma_derivative(const ImplicitActivation& act, double p) {
  double total = 0.0;
  switch (act.family) {
    case LossFamily::Squared:
      for (const auto& c : act.channels) total += 2.0 * (p - c.mean);
      return total;
    case LossFamily::BinaryCrossEntropy:
      check_bce_domain(p);
      for (const auto& c : act.channels) total += -c.mean / p + (1.0 - c.mean) / (1.0 - p);
      return total;
  }
  throw std::logic_error("unknown loss family");
}

SigmaMin sigma_min(const ImplicitActivation& act) {
  if (act.channels.empty()) throw std::invalid_argument("sigma_min: activation has no channels");
  double mean_sum = 0.0;
  for (const auto& c : act.channels) mean_sum += c.mean;
  const double p_star = mean_sum / static_cast<double>(act.channels.size());
  return SigmaMin{p_star, sigma_eval(act, p_star)};
}

UnrepresentableValue::UnrepresentableValue(double value_, double v_star_)
    : std::invalid_argument("loss value " + format_double(value_) +
                            " is below the activation minimum v_star=" + format_double(v_star_)),
      value(value_),
      v_star(v_star_) {}

double sigma_inverse(const ImplicitActivation& act, double v) {
  const SigmaMin mn = sigma_min(act);
  if (v < mn.v_star - 1e-12) throw UnrepresentableValue(v, mn.v_star);
  if (v <= mn.v_star) return mn.p_star;
  const double m = static_cast<double>(act.channels.size());
  if (act.family == LossFamily::Squared) return mn.p_star + std::sqrt((v - mn.v_star) / m);

  // Binary cross-entropy. Degenerate label means give a closed form; the
  // general case bisects the increasing branch [p_star, 1) down to adjacent
  // doubles, which keeps the round trip tight even where sigma is steep.
  if (mn.p_star >= 1.0) return std::exp(-v / m);
  if (mn.p_star <= 0.0) return -std::expm1(-v / m);
  double lo = mn.p_star;
  double hi = 1.0 - (1.0 - mn.p_star) * 0.5;
  int guard = 0;
  while (sigma_eval(act, hi) < v) {
    hi = 1.0 - (1.0 - hi) / 16.0;
    if (++guard > 256 || hi >= 1.0) {
      hi = std::nextafter(1.0, 0.0);
      break;
    }
  }
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (sigma_eval(act, mid) < v ? lo : hi) = mid;
  }
  return std::abs(sigma_eval(act, hi) - v) < std::abs(sigma_eval(act, lo) - v) ? hi : lo;
}

double per_example_inverse(LossFamily family, double y, double v) {
  switch (family) {
    case LossFamily::Squared:
      if (v < 0.0) throw std::invalid_argument("per_example_inverse: negative loss value v=" +
                                               format_double(v));
      return y + std::sqrt(v);
    case LossFamily::BinaryCrossEntropy:
      if (!(v > 0.0))
        throw std::invalid_argument("per_example_inverse: bce needs v > 0, got v=" +
                                    format_double(v));
      if (y == 1.0) return std::exp(-v);
      if (y == 0.0) return -std::expm1(-v);
      throw std::invalid_argument("per_example_inverse: bce needs labels in {0,1}");
  }
  throw std::logic_error("unknown loss family");
}

double coverage_offset(const ImplicitActivation& act, double pattern_min, double pattern_max,
                       double margin) {
  if (pattern_min > pattern_max)
    throw std::invalid_argument("coverage_offset: pattern_min > pattern_max");
  if (margin < 0.0) throw std::invalid_argument("coverage_offset: negative margin");
  return sigma_min(act).v_star + margin - pattern_min;
}

void export_sigma_profile(const ImplicitActivation& act, double p_lo, double p_hi, int samples,
                          const std::string& path) {
  if (samples < 2) throw std::invalid_argument("export_sigma_profile: need at least 2 samples");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_sigma_profile: cannot open " + path);
  out << "p,sigma\n";
  for (int i = 0; i < samples; ++i) {
    const double p = p_lo + (p_hi - p_lo) * static_cast<double>(i) / (samples - 1);
    out << format_double(p) << ',' << format_double(sigma_eval(act, p)) << '\n';
  }
}

}  // namespace lp
