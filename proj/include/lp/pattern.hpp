#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lp {

enum class AnalyticKind { Bimodal, Constant, Ramp };

// Target function T: [0,1]^z -> [0,1]^channels, either a dense grid with
// multilinear interpolation or a named analytic formula.
struct Pattern {
  enum class Source { Grid, Analytic };

  int z = 1;
  int channels = 1;
  Source source = Source::Grid;

  // Grid source: resolution per axis, values node-major with the first axis
  // fastest and channels interleaved.
  std::vector<int> resolution;
  std::vector<double> values;
  int source_maxval = 255;

  // Analytic source.
  AnalyticKind kind = AnalyticKind::Constant;
  std::vector<double> params;
};

Pattern load_pattern_pgm(const std::string& path);
Pattern load_pattern_ppm(const std::string& path);
Pattern load_pattern_csv(const std::string& path, int z);
void save_pattern_pgm(const std::string& path, const Pattern& p);

Pattern make_analytic(AnalyticKind kind, std::vector<double> params = {});

// Two equal wells at h = 0.25 and 0.75 once [0,1] is mapped onto [-1,1].
double analytic_bimodal(double h);

// Descriptor strings: "pgm:file", "ppm:file", "csv:file,z=2",
// "analytic:bimodal", "analytic:ramp", "analytic:constant,value=0.4".
Pattern parse_pattern_descriptor(const std::string& descriptor);

// Multilinear interpolation; h clamped into [0,1]^z; exact stored values at
// grid nodes.
Eigen::VectorXd eval_pattern(const Pattern& p, const Eigen::VectorXd& h);

struct PatternRange {
  Eigen::VectorXd min;
  Eigen::VectorXd max;
};
PatternRange pattern_range(const Pattern& p);

enum class HSampling { UniformRandom, Lattice };

HSampling parse_h_sampling(const std::string& name);

// count x z matrix of slice coordinates. Lattice mode needs count to be a
// perfect z-th power and ignores the seed.
Eigen::MatrixXd sample_h(int z, long count, HSampling mode, std::uint64_t seed);

}  // namespace lp
