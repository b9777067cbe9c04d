#include "lp/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lp/common.hpp"
#include "lp/netpbm.hpp"

namespace lp {

namespace {

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double v) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

long check_resolution(int z, const std::vector<int>& resolution) {
  if (z < 1) throw std::invalid_argument("grid needs z >= 1");
  if (static_cast<int>(resolution.size()) != z)
    throw std::invalid_argument("need one resolution per slice axis");
  long nodes = 1;
  for (int r : resolution) {
    if (r < 2) throw std::invalid_argument("grid resolution must be at least 2 per axis");
    nodes *= r;
  }
  return nodes;
}

Eigen::VectorXd node_alpha(const std::vector<int>& resolution, long node) {
  Eigen::VectorXd alpha(static_cast<long>(resolution.size()));
  long r = node;
  for (std::size_t a = 0; a < resolution.size(); ++a) {
    const int res = resolution[a];
    alpha[static_cast<long>(a)] = static_cast<double>(r % res) / (res - 1);
    r /= res;
  }
  return alpha;
}

// Mean per-example loss for fixed predictions, channel-wise when the network
// has several heads, pooled over label channels for a single head.
Eigen::VectorXd mean_losses(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                            LossFamily family) {
  const long n = labels.rows();
  if (pred.cols() > 1) {
    Eigen::VectorXd out(pred.cols());
    for (long c = 0; c < pred.cols(); ++c) {
      KahanSum acc;
      Eigen::VectorXd p1(1), y1(1);
      for (long i = 0; i < n; ++i) {
        p1[0] = pred(pred.rows() == 1 ? 0 : i, c);
        y1[0] = labels(i, c);
        acc.add(per_example_loss(family, p1, y1));
      }
      out[c] = acc.sum / static_cast<double>(n);
    }
    return out;
  }
  KahanSum acc;
  for (long i = 0; i < n; ++i) {
    const Eigen::VectorXd p = pred.row(pred.rows() == 1 ? 0 : i).transpose();
    acc.add(per_example_loss(family, p, labels.row(i).transpose()));
  }
  Eigen::VectorXd out(1);
  out[0] = acc.sum / static_cast<double>(n);
  return out;
}

}  // namespace

long grid_node_count(const SurfaceGrid& g) {
  long nodes = 1;
  for (int r : g.resolution) nodes *= r;
  return nodes;
}

Eigen::VectorXd grid_alpha(const SurfaceGrid& g, long node) {
  return node_alpha(g.resolution, node);
}

Eigen::VectorXd slice_loss_at(const NetworkSpec& spec, const SliceSpec& slice, const Dataset& data,
                              LossFamily family, const Eigen::VectorXd& alpha) {
  if (alpha.size() != slice.z) throw std::invalid_argument("slice_loss_at: alpha dimension mismatch");
  const bool input_free = slice.theta0.first_weights.cwiseAbs().maxCoeff() == 0.0;
  Eigen::MatrixXd first_pre;
  if (input_free) {
    first_pre = slice.theta0.first_biases.transpose();
  } else {
    first_pre = first_preactivation(spec, slice.theta0, data.inputs);
  }
  first_pre.leftCols(slice.z).rowwise() += alpha.transpose();
  const Eigen::MatrixXd pred = forward_tail(spec, slice.theta0, first_pre).output;
  return mean_losses(pred, data.targets, family);
}

SurfaceGrid evaluate_slice(const NetworkSpec& spec, const SliceSpec& slice, const Dataset& data,
                           LossFamily family, const std::vector<int>& resolution) {
  validate_slice_layout(spec, slice, true);
  const long nodes = check_resolution(slice.z, resolution);
  if (data.targets.cols() != spec.output_dim && spec.output_dim != 1)
    throw std::invalid_argument("multi-head evaluation needs one label channel per head");

  SurfaceGrid grid;
  grid.z = slice.z;
  grid.resolution = resolution;
  grid.channels = spec.output_dim;
  grid.dataset_name = data.name;
  grid.values.resize(static_cast<std::size_t>(nodes * grid.channels));

  const bool input_free = slice.theta0.first_weights.cwiseAbs().maxCoeff() == 0.0;
  Eigen::MatrixXd base;
  if (input_free) {
    base = slice.theta0.first_biases.transpose();
  } else {
    base = first_preactivation(spec, slice.theta0, data.inputs);
  }

  for (long node = 0; node < nodes; ++node) {
    const Eigen::VectorXd alpha = node_alpha(resolution, node);
    Eigen::MatrixXd first_pre = base;
    first_pre.leftCols(slice.z).rowwise() += alpha.transpose();
    const Eigen::MatrixXd pred = forward_tail(spec, slice.theta0, first_pre).output;
    const Eigen::VectorXd losses = mean_losses(pred, data.targets, family);
    for (int c = 0; c < grid.channels; ++c) {
      const double v = losses[c];
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite loss at alpha=(";
        for (long a = 0; a < alpha.size(); ++a) msg << (a ? "," : "") << format_double(alpha[a]);
        msg << ")";
        throw std::runtime_error(msg.str());
      }
      grid.values[static_cast<std::size_t>(node * grid.channels + c)] = v;
    }
  }
  return grid;
}

ReconstructionReport reconstruction_error(const SurfaceGrid& grid, const Pattern& pattern,
                                          const Eigen::VectorXd& offset) {
  if (grid.z != pattern.z) throw std::invalid_argument("grid and pattern dimensionality differ");
  if (grid.channels != pattern.channels)
    throw std::invalid_argument("grid and pattern channel counts differ");
  if (offset.size() != grid.channels)
    throw std::invalid_argument("need one offset per channel");
  const long nodes = grid_node_count(grid);
  const int ch = grid.channels;

  Eigen::MatrixXd target(nodes, ch);
  Eigen::MatrixXd surface(nodes, ch);
  for (long node = 0; node < nodes; ++node) {
    const Eigen::VectorXd tv = eval_pattern(pattern, grid_alpha(grid, node));
    for (int c = 0; c < ch; ++c) {
      target(node, c) = tv[c] + offset[c];
      surface(node, c) = grid.values[static_cast<std::size_t>(node * ch + c)];
    }
  }

  ReconstructionReport rep;
  rep.a_star.resize(ch);
  rep.mse_per_channel.resize(ch);
  double pooled = 0.0;
  double max_abs = 0.0;
  for (int c = 0; c < ch; ++c) {
    const Eigen::VectorXd residual = surface.col(c) - target.col(c);
    rep.a_star[c] = residual.mean();
    const Eigen::VectorXd aligned = residual.array() - rep.a_star[c];
    rep.mse_per_channel[c] = aligned.array().square().mean();
    pooled += rep.mse_per_channel[c];
    max_abs = std::max(max_abs, aligned.cwiseAbs().maxCoeff());
  }
  rep.mse = pooled / ch;
  rep.max_abs = max_abs;

  long arg_surface = 0;
  long arg_pattern = 0;
  for (long node = 1; node < nodes; ++node) {
    if (surface.row(node).sum() < surface.row(arg_surface).sum()) arg_surface = node;
    if (target.row(node).sum() < target.row(arg_pattern).sum()) arg_pattern = node;
  }
  rep.surface_argmin = grid_alpha(grid, arg_surface);
  rep.pattern_argmin = grid_alpha(grid, arg_pattern);
  rep.argmin_distance = (rep.surface_argmin - rep.pattern_argmin).norm();
  return rep;
}

MinimumLocation locate_minimum(const SurfaceGrid& grid) {
  const long nodes = grid_node_count(grid);
  if (nodes == 0) throw std::invalid_argument("empty grid");
  const int ch = grid.channels;
  auto pooled = [&](long node) {
    double s = 0.0;
    for (int c = 0; c < ch; ++c) s += grid.values[static_cast<std::size_t>(node * ch + c)];
    return s;
  };
  MinimumLocation loc;
  long best = 0;
  double best_v = pooled(0);
  for (long node = 1; node < nodes; ++node) {
    const double v = pooled(node);
    if (v < best_v) {
      best = node;
      best_v = v;
    }
  }
  loc.node = best;
  loc.value = best_v;
  loc.alpha = grid_alpha(grid, best);
  for (long node = 0; node < nodes; ++node)
    if (pooled(node) == best_v) loc.ties.push_back(grid_alpha(grid, node));
  return loc;
}

std::vector<long> local_minima_1d(const SurfaceGrid& grid) {
  if (grid.z != 1) throw std::invalid_argument("local minima scan expects a 1D grid");
  const long nodes = grid_node_count(grid);
  const int ch = grid.channels;
  std::vector<double> v(static_cast<std::size_t>(nodes));
  for (long node = 0; node < nodes; ++node) {
    double s = 0.0;
    for (int c = 0; c < ch; ++c) s += grid.values[static_cast<std::size_t>(node * ch + c)];
    v[static_cast<std::size_t>(node)] = s;
  }
  std::vector<long> minima;
  long i = 0;
  while (i < nodes) {
    long j = i;
    while (j + 1 < nodes && v[static_cast<std::size_t>(j + 1)] == v[static_cast<std::size_t>(i)])
      ++j;
    const bool left_ok = i == 0 || v[static_cast<std::size_t>(i - 1)] > v[static_cast<std::size_t>(i)];
    const bool right_ok =
        j == nodes - 1 || v[static_cast<std::size_t>(j + 1)] > v[static_cast<std::size_t>(i)];
    const bool interior = i > 0 || j < nodes - 1;
    if (left_ok && right_ok && interior) minima.push_back(i);
    i = j + 1;
  }
  return minima;
}

TransferReport transfer_compare(const NetworkSpec& spec, const SliceSpec& slice, LossFamily family,
                                const Dataset& a, const Dataset& b,
                                const std::vector<int>& resolution) {
  TransferReport rep;
  rep.grid_a = evaluate_slice(spec, slice, a, family, resolution);
  rep.grid_b = evaluate_slice(spec, slice, b, family, resolution);
  rep.moments_a = label_moments(a.targets);
  rep.moments_b = label_moments(b.targets);
  double worst = 0.0;
  for (std::size_t i = 0; i < rep.grid_a.values.size(); ++i)
    worst = std::max(worst, std::abs(rep.grid_a.values[i] - rep.grid_b.values[i]));
  rep.max_abs_diff = worst;
  return rep;
}

void export_grid_csv(const SurfaceGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open grid csv for writing: " + path);
  for (int a = 0; a < grid.z; ++a) out << "alpha" << (a + 1) << ',';
  for (int c = 0; c < grid.channels; ++c) out << "value" << (c + 1) << (c + 1 < grid.channels ? "," : "");
  out << '\n';
  const long nodes = grid_node_count(grid);
  for (long node = 0; node < nodes; ++node) {
    const Eigen::VectorXd alpha = grid_alpha(grid, node);
    for (long a = 0; a < alpha.size(); ++a) out << format_double(alpha[a]) << ',';
    for (int c = 0; c < grid.channels; ++c)
      out << format_double(grid.values[static_cast<std::size_t>(node * grid.channels + c)])
          << (c + 1 < grid.channels ? "," : "");
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing grid csv: " + path);
}

SurfaceGrid load_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int z = 0;
  while (z < static_cast<int>(header.size()) &&
         header[static_cast<std::size_t>(z)].rfind("alpha", 0) == 0)
    ++z;
  const int channels = static_cast<int>(header.size()) - z;
  if (z < 1 || channels < 1) throw std::runtime_error(path + ": malformed grid header");

  std::vector<std::vector<double>> coords(static_cast<std::size_t>(z));
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != z + channels)
      throw std::runtime_error(path + ": row width does not match header");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  for (const auto& row : rows)
    for (int a = 0; a < z; ++a) coords[static_cast<std::size_t>(a)].push_back(row[static_cast<std::size_t>(a)]);
  SurfaceGrid grid;
  grid.z = z;
  grid.channels = channels;
  for (int a = 0; a < z; ++a) {
    auto& c = coords[static_cast<std::size_t>(a)];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    grid.resolution.push_back(static_cast<int>(c.size()));
  }
  const long nodes = grid_node_count(grid);
  if (static_cast<long>(rows.size()) != nodes)
    throw std::runtime_error(path + ": row count does not form a full lattice");
  grid.values.assign(static_cast<std::size_t>(nodes * channels), 0.0);
  for (const auto& row : rows) {
    long node = 0;
    long stride = 1;
    for (int a = 0; a < z; ++a) {
      const auto& c = coords[static_cast<std::size_t>(a)];
      const auto it = std::lower_bound(c.begin(), c.end(), row[static_cast<std::size_t>(a)]);
      if (it == c.end() || *it != row[static_cast<std::size_t>(a)])
        throw std::runtime_error(path + ": inconsistent lattice coordinate");
      node += stride * static_cast<long>(it - c.begin());
      stride *= grid.resolution[static_cast<std::size_t>(a)];
    }
    for (int c = 0; c < channels; ++c)
      grid.values[static_cast<std::size_t>(node * channels + c)] =
          row[static_cast<std::size_t>(z + c)];
  }
  return grid;
}

void render_grid(const SurfaceGrid& grid, const std::string& path) {
  if (grid.z != 2) throw std::invalid_argument("rendering needs a 2D grid");
  if (grid.channels != 1 && grid.channels != 3)
    throw std::invalid_argument("rendering supports 1 or 3 channels");
  const long nodes = grid_node_count(grid);
  const int ch = grid.channels;

  // Per-channel normalization to [0,1]; multi-channel values pass through a
  // sigmoid first so unbounded losses share a common scale.
  std::vector<double> norm(static_cast<std::size_t>(nodes * ch));
  for (int c = 0; c < ch; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (long node = 0; node < nodes; ++node) {
      double v = grid.values[static_cast<std::size_t>(node * ch + c)];
      if (ch == 3) v = 1.0 / (1.0 + std::exp(-v));
      norm[static_cast<std::size_t>(node * ch + c)] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (long node = 0; node < nodes; ++node) {
      double& v = norm[static_cast<std::size_t>(node * ch + c)];
      v = span > 0.0 ? (v - lo) / span : 0.0;
    }
  }

  NetpbmImage img;
  img.width = grid.resolution[0];
  img.height = grid.resolution[1];
  img.maxval = 255;
  img.channels = ch;
  img.pixels.resize(static_cast<std::size_t>(nodes * ch));
  for (long node = 0; node < nodes; ++node)
    for (int c = 0; c < ch; ++c)
      img.pixels[static_cast<std::size_t>(node * ch + c)] = static_cast<std::uint16_t>(
          std::lround(norm[static_cast<std::size_t>(node * ch + c)] * 255.0));
  if (ch == 1) write_pgm(path, img);
  else write_ppm(path, img);
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("pearson needs two equal-length series");
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) return 0.0;
  return da.dot(db) / denom;
}

}  // namespace lp
