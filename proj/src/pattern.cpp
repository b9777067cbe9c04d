#include "lp/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lp/common.hpp"
#include "lp/netpbm.hpp"

namespace lp {

namespace {

long node_count(const Pattern& p) {
  long n = 1;
  for (int r : p.resolution) n *= r;
  return n;
}

void validate_grid(const Pattern& p) {
  if (p.z < 1) throw std::invalid_argument("pattern needs z >= 1");
  if (p.channels != 1 && p.channels != 3)
    throw std::invalid_argument("pattern supports 1 or 3 channels");
  if (static_cast<int>(p.resolution.size()) != p.z)
    throw std::invalid_argument("pattern resolution list must have one entry per axis");
  for (int r : p.resolution)
    if (r < 1) throw std::invalid_argument("pattern resolution must be positive");
  if (static_cast<long>(p.values.size()) != node_count(p) * p.channels)
    throw std::invalid_argument("pattern value count does not match resolution");
  for (double v : p.values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("pattern value " + format_double(v) + " outside [0,1]");
}

std::vector<double> split_csv_line(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace

Pattern load_pattern_pgm(const std::string& path) {
  const NetpbmImage img = read_netpbm(path);
  if (img.channels != 1) throw std::runtime_error(path + ": expected a grayscale image");
  Pattern p;
  p.z = 2;
  p.channels = 1;
  p.source = Pattern::Source::Grid;
  p.resolution = {img.width, img.height};
  p.source_maxval = img.maxval;
  p.values.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    p.values[i] = static_cast<double>(img.pixels[i]) / img.maxval;
  validate_grid(p);
  return p;
}

Pattern load_pattern_ppm(const std::string& path) {
  const NetpbmImage img = read_netpbm(path);
  if (img.channels != 3) throw std::runtime_error(path + ": expected an RGB image");
  Pattern p;
  p.z = 2;
  p.channels = 3;
  p.source = Pattern::Source::Grid;
  p.resolution = {img.width, img.height};
  p.source_maxval = img.maxval;
  p.values.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    p.values[i] = static_cast<double>(img.pixels[i]) / img.maxval;
  validate_grid(p);
  return p;
}

void save_pattern_pgm(const std::string& path, const Pattern& p) {
  if (p.source != Pattern::Source::Grid || p.z != 2 || p.channels != 1)
    throw std::invalid_argument("only 2D single-channel grid patterns can be saved as PGM");
  NetpbmImage img;
  img.width = p.resolution[0];
  img.height = p.resolution[1];
  img.maxval = p.source_maxval;
  img.channels = 1;
  img.pixels.resize(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i)
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(p.values[i] * img.maxval));
  write_pgm(path, img);
}

Pattern load_pattern_csv(const std::string& path, int z) {
  if (z < 1 || z > 3) throw std::invalid_argument("csv patterns support z in {1,2,3}");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pattern csv: " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> declared;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (first && line.rfind("res", 0) == 0) {
      std::stringstream ss(line.substr(3));
      std::string cell;
      while (std::getline(ss, cell, ','))
        if (cell.find_first_not_of(" \t\r") != std::string::npos)
          declared.push_back(std::stoi(cell));
      first = false;
      continue;
    }
    first = false;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  Pattern p;
  p.z = z;
  p.channels = 1;
  p.source = Pattern::Source::Grid;
  if (z == 3) {
    if (declared.size() != 3) throw std::runtime_error(path + ": z=3 needs a 'res,r1,r2,r3' header");
    p.resolution = declared;
    for (const auto& row : rows) p.values.insert(p.values.end(), row.begin(), row.end());
  } else {
    if (!declared.empty()) throw std::runtime_error(path + ": res header is only for z=3");
    const std::size_t cols = rows[0].size();
    for (const auto& row : rows)
      if (row.size() != cols) throw std::runtime_error(path + ": ragged rows");
    if (z == 1) {
      if (rows.size() != 1) throw std::runtime_error(path + ": z=1 expects a single row");
      p.resolution = {static_cast<int>(cols)};
      p.values = rows[0];
    } else {
      p.resolution = {static_cast<int>(cols), static_cast<int>(rows.size())};
      for (const auto& row : rows) p.values.insert(p.values.end(), row.begin(), row.end());
    }
  }
  validate_grid(p);
  return p;
}

double analytic_bimodal(double h) {
  const double u = 2.0 * h - 1.0;
  const double a = u - 0.5;
  const double b = u + 0.5;
  const double raw = 1.0 - (std::exp(-a * a / 0.1) + std::exp(-b * b / 0.1));
  return std::clamp(raw, 0.0, 1.0);
}

Pattern make_analytic(AnalyticKind kind, std::vector<double> params) {
  Pattern p;
  p.source = Pattern::Source::Analytic;
  p.kind = kind;
  p.params = std::move(params);
  p.z = 1;
  p.channels = 1;
  if (kind == AnalyticKind::Constant) {
    if (p.params.size() != 1 || !(p.params[0] >= 0.0 && p.params[0] <= 1.0))
      throw std::invalid_argument("constant pattern needs one value in [0,1]");
  } else if (!p.params.empty()) {
    throw std::invalid_argument("this analytic pattern takes no parameters");
  }
  return p;
}

namespace {

double eval_analytic(const Pattern& p, double h) {
  switch (p.kind) {
    case AnalyticKind::Bimodal: return analytic_bimodal(h);
    case AnalyticKind::Constant: return p.params[0];
    case AnalyticKind::Ramp: return h;
  }
  throw std::logic_error("unknown analytic pattern");
}

}  // namespace

Eigen::VectorXd eval_pattern(const Pattern& p, const Eigen::VectorXd& h) {
  if (h.size() != p.z) throw std::invalid_argument("eval_pattern: coordinate dimension mismatch");
  Eigen::VectorXd hc = h.cwiseMax(0.0).cwiseMin(1.0);

  if (p.source == Pattern::Source::Analytic)
    return Eigen::VectorXd::Constant(1, eval_analytic(p, hc[0]));

  // Per-axis cell index and interpolation weight, snapping to the node when
  // the coordinate is within 1e-9 cells so node lookups are bit-exact.
  std::vector<int> base(static_cast<std::size_t>(p.z));
  std::vector<double> frac(static_cast<std::size_t>(p.z));
  for (int a = 0; a < p.z; ++a) {
    const int res = p.resolution[static_cast<std::size_t>(a)];
    if (res == 1) {
      base[static_cast<std::size_t>(a)] = 0;
      frac[static_cast<std::size_t>(a)] = 0.0;
      continue;
    }
    const double t = hc[a] * (res - 1);
    const double snapped = std::round(t);
    if (std::abs(t - snapped) <= 1e-9) {
      base[static_cast<std::size_t>(a)] = static_cast<int>(snapped);
      frac[static_cast<std::size_t>(a)] = 0.0;
    } else {
      int i = static_cast<int>(std::floor(t));
      i = std::clamp(i, 0, res - 2);
      base[static_cast<std::size_t>(a)] = i;
      frac[static_cast<std::size_t>(a)] = t - i;
    }
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.channels);
  const int corners = 1 << p.z;
  for (int corner = 0; corner < corners; ++corner) {
    double w = 1.0;
    long flat = 0;
    long stride = 1;
    for (int a = 0; a < p.z; ++a) {
      const int res = p.resolution[static_cast<std::size_t>(a)];
      const bool hi = (corner >> a) & 1;
      int idx = base[static_cast<std::size_t>(a)];
      if (hi) {
        w *= frac[static_cast<std::size_t>(a)];
        idx += 1;
      } else {
        w *= 1.0 - frac[static_cast<std::size_t>(a)];
      }
      if (idx >= res) { w = 0.0; idx = res - 1; }
      flat += stride * idx;
      stride *= res;
    }
    if (w == 0.0) continue;
    for (int c = 0; c < p.channels; ++c)
      out[c] += w * p.values[static_cast<std::size_t>(flat * p.channels + c)];
  }
  return out;
}

PatternRange pattern_range(const Pattern& p) {
  PatternRange r;
  r.min = Eigen::VectorXd::Constant(p.channels, std::numeric_limits<double>::infinity());
  r.max = Eigen::VectorXd::Constant(p.channels, -std::numeric_limits<double>::infinity());
  if (p.source == Pattern::Source::Grid) {
    const long nodes = node_count(p);
    for (long n = 0; n < nodes; ++n)
      for (int c = 0; c < p.channels; ++c) {
        const double v = p.values[static_cast<std::size_t>(n * p.channels + c)];
        r.min[c] = std::min(r.min[c], v);
        r.max[c] = std::max(r.max[c], v);
      }
    return r;
  }
  // Dense scan; 4096 intervals land exactly on the quarter points where the
  // built-in bimodal formula attains its minimum.
  for (int i = 0; i <= 4096; ++i) {
    const double v = eval_analytic(p, static_cast<double>(i) / 4096.0);
    r.min[0] = std::min(r.min[0], v);
    r.max[0] = std::max(r.max[0], v);
  }
  return r;
}

HSampling parse_h_sampling(const std::string& name) {
  if (name == "uniform") return HSampling::UniformRandom;
  if (name == "lattice") return HSampling::Lattice;
  throw std::invalid_argument("unknown h sampling mode '" + name + "' (expected uniform|lattice)");
}

Eigen::MatrixXd sample_h(int z, long count, HSampling mode, std::uint64_t seed) {
  if (z < 1) throw std::invalid_argument("sample_h: z must be positive");
  if (count < 1) throw std::invalid_argument("sample_h: count must be positive");
  Eigen::MatrixXd out(count, z);
  if (mode == HSampling::UniformRandom) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (long i = 0; i < count; ++i)
      for (int a = 0; a < z; ++a) out(i, a) = uni(rng);
    return out;
  }
  long n = std::llround(std::pow(static_cast<double>(count), 1.0 / z));
  bool found = false;
  for (long cand = std::max<long>(1, n - 1); cand <= n + 1 && !found; ++cand) {
    long prod = 1;
    for (int a = 0; a < z; ++a) prod *= cand;
    if (prod == count) { n = cand; found = true; }
  }
  if (!found)
    throw std::invalid_argument("lattice sampling needs count to be a perfect z-th power");
  for (long i = 0; i < count; ++i) {
    long r = i;
    for (int a = 0; a < z; ++a) {
      const long idx = r % n;
      r /= n;
      out(i, a) = n == 1 ? 0.0 : static_cast<double>(idx) / static_cast<double>(n - 1);
    }
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(part);
  return parts;
}

}  // namespace

Pattern parse_pattern_descriptor(const std::string& descriptor) {
  const std::size_t colon = descriptor.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("pattern descriptor needs a 'kind:...' prefix: " + descriptor);
  const std::string kind = descriptor.substr(0, colon);
  const std::string rest = descriptor.substr(colon + 1);
  if (kind == "pgm") return load_pattern_pgm(rest);
  if (kind == "ppm") return load_pattern_ppm(rest);
  if (kind == "csv") {
    const auto parts = split(rest, ',');
    if (parts.empty()) throw std::invalid_argument("csv pattern descriptor needs a path");
    int z = 2;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i].rfind("z=", 0) == 0) z = std::stoi(parts[i].substr(2));
      else throw std::invalid_argument("unknown csv pattern option: " + parts[i]);
    }
    return load_pattern_csv(parts[0], z);
  }
  if (kind == "analytic") {
    const auto parts = split(rest, ',');
    if (parts.empty()) throw std::invalid_argument("analytic pattern descriptor needs a name");
    if (parts[0] == "bimodal") return make_analytic(AnalyticKind::Bimodal);
    if (parts[0] == "ramp") return make_analytic(AnalyticKind::Ramp);
    if (parts[0] == "constant") {
      double value = 0.5;
      bool have = false;
      for (std::size_t i = 1; i < parts.size(); ++i)
        if (parts[i].rfind("value=", 0) == 0) { value = std::stod(parts[i].substr(6)); have = true; }
      if (!have) throw std::invalid_argument("constant pattern needs value=...");
      return make_analytic(AnalyticKind::Constant, {value});
    }
    throw std::invalid_argument("unknown analytic pattern: " + parts[0]);
  }
  throw std::invalid_argument("unknown pattern kind '" + kind + "' (expected pgm|ppm|csv|analytic)");
}

}  // namespace lp
