#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lp/construction.hpp"
#include "lp/data.hpp"
#include "lp/losses.hpp"
#include "lp/nn.hpp"
#include "lp/pattern.hpp"

namespace lp {

// Empirical loss evaluated on a lattice over the slice hypercube. Values are
// node-major with the first axis fastest, channels interleaved; one channel
// per network output head (a single head scores against all label channels).
struct SurfaceGrid {
  int z = 0;
  std::vector<int> resolution;
  int channels = 1;
  std::vector<double> values;
  Eigen::VectorXd a_star;  // alignment offsets once computed, else empty
  std::string dataset_name;
};

long grid_node_count(const SurfaceGrid& g);
Eigen::VectorXd grid_alpha(const SurfaceGrid& g, long node);

// Mean per-example loss at one slice coordinate, per channel.
Eigen::VectorXd slice_loss_at(const NetworkSpec& spec, const SliceSpec& slice, const Dataset& data,
                              LossFamily family, const Eigen::VectorXd& alpha);

SurfaceGrid evaluate_slice(const NetworkSpec& spec, const SliceSpec& slice, const Dataset& data,
                           LossFamily family, const std::vector<int>& resolution);

struct ReconstructionReport {
  Eigen::VectorXd a_star;           // per channel, mean of L - (T + c)
  Eigen::VectorXd mse_per_channel;  // after subtracting a_star
  double mse = 0.0;                 // pooled over channels
  double max_abs = 0.0;             // largest aligned residual
  Eigen::VectorXd pattern_argmin;
  Eigen::VectorXd surface_argmin;
  double argmin_distance = 0.0;
};

ReconstructionReport reconstruction_error(const SurfaceGrid& grid, const Pattern& pattern,
                                          const Eigen::VectorXd& offset);

struct MinimumLocation {
  Eigen::VectorXd alpha;
  double value = 0.0;
  long node = 0;
  std::vector<Eigen::VectorXd> ties;  // every node holding the same minimum
};

// Lattice argmin over channel-summed values, first node in storage order on
// exact ties.
MinimumLocation locate_minimum(const SurfaceGrid& grid);

// Indices of strict local minima of a 1D grid (channel-summed), plateau runs
// collapsed to their first node.
std::vector<long> local_minima_1d(const SurfaceGrid& grid);

struct TransferReport {
  SurfaceGrid grid_a;
  SurfaceGrid grid_b;
  double max_abs_diff = 0.0;
  LabelMoments moments_a;
  LabelMoments moments_b;
};

TransferReport transfer_compare(const NetworkSpec& spec, const SliceSpec& slice, LossFamily family,
                                const Dataset& a, const Dataset& b,
                                const std::vector<int>& resolution);

void export_grid_csv(const SurfaceGrid& grid, const std::string& path);
SurfaceGrid load_grid_csv(const std::string& path);

// z=2 only: PGM for one channel, PPM (after a sigmoid squash) for three, with
// per-channel min-max normalization; row 0 is the h2=0 edge.
void render_grid(const SurfaceGrid& grid, const std::string& path);

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace lp
