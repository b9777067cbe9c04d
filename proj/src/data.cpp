#include "lp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lp/common.hpp"

namespace lp {

Dataset synth_balanced_classification(int classes, int per_class, int d, std::uint64_t seed,
                                      double spread, double noise) {
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (per_class < 1) throw std::invalid_argument("need at least 1 sample per class");
  if (d < 1) throw std::invalid_argument("need input dimension >= 1");

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(classes, d);
  {
    std::mt19937_64 rng(derive_seed(seed, 0));
    for (int c = 0; c < classes; ++c)
      for (int j = 0; j < d; ++j) centers(c, j) = spread * normal(rng);
  }

  const long n = static_cast<long>(classes) * per_class;
  Dataset ds;
  ds.task = TaskKind::MulticlassOnehot;
  ds.inputs.resize(n, d);
  ds.targets = Eigen::MatrixXd::Zero(n, classes);
  for (int c = 0; c < classes; ++c) {
    std::mt19937_64 rng(derive_seed(seed, 1 + static_cast<std::uint64_t>(c)));
    for (int s = 0; s < per_class; ++s) {
      const long row = static_cast<long>(c) * per_class + s;
      for (int j = 0; j < d; ++j) ds.inputs(row, j) = centers(c, j) + noise * normal(rng);
      ds.targets(row, c) = 1.0;
    }
  }
  std::ostringstream name;
  name << "synth:classes=" << classes << ",per_class=" << per_class << ",d=" << d
       << ",seed=" << seed;
  ds.name = name.str();
  return ds;
}

double toy_wave_target(double x) { return -x * x + std::sin(20.0 * x) / 5.0 + 1.2; }

Dataset toy_wave_regression(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("toy regression needs n >= 2");
  Dataset ds;
  ds.task = TaskKind::Regression;
  ds.inputs.resize(n, 1);
  ds.targets.resize(n, 1);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double x = uni(rng);
    ds.inputs(i, 0) = x;
    ds.targets(i, 0) = toy_wave_target(x);
  }
  std::ostringstream name;
  name << "toy:n=" << n << ",seed=" << seed;
  ds.name = name.str();
  return ds;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path, long offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error(path + ": truncated at offset " + std::to_string(offset));
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       long limit) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open " + labels_path);

  const std::uint32_t img_magic = read_be_u32(imgs, images_path, 0);
  if (img_magic != 0x00000803)
    throw std::runtime_error(images_path + ": bad magic at offset 0 (expected 0x00000803)");
  const long img_count = read_be_u32(imgs, images_path, 4);
  const long rows = read_be_u32(imgs, images_path, 8);
  const long cols = read_be_u32(imgs, images_path, 12);

  const std::uint32_t lab_magic = read_be_u32(labs, labels_path, 0);
  if (lab_magic != 0x00000801)
    throw std::runtime_error(labels_path + ": bad magic at offset 0 (expected 0x00000801)");
  const long lab_count = read_be_u32(labs, labels_path, 4);
  if (img_count != lab_count)
    throw std::runtime_error("image/label count mismatch: " + std::to_string(img_count) + " vs " +
                             std::to_string(lab_count));

  const long n = limit > 0 ? std::min(limit, img_count) : img_count;
  const long d = rows * cols;
  Dataset ds;
  ds.task = TaskKind::MulticlassOnehot;
  ds.inputs.resize(n, d);
  ds.targets = Eigen::MatrixXd::Zero(n, 10);
  std::vector<unsigned char> pixel_row(static_cast<std::size_t>(d));
  for (long i = 0; i < n; ++i) {
    imgs.read(reinterpret_cast<char*>(pixel_row.data()), d);
    if (!imgs)
      throw std::runtime_error(images_path + ": truncated at offset " +
                               std::to_string(16 + i * d));
    for (long j = 0; j < d; ++j)
      ds.inputs(i, j) = static_cast<double>(pixel_row[static_cast<std::size_t>(j)]) / 255.0;
    const int label = labs.get();
    if (label == std::ifstream::traits_type::eof())
      throw std::runtime_error(labels_path + ": truncated at offset " + std::to_string(8 + i));
    if (label > 9) throw std::runtime_error(labels_path + ": label out of range");
    ds.targets(i, label) = 1.0;
  }
  ds.name = "mnist:n=" + std::to_string(n);
  return ds;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<long>& rows, const std::string& suffix) {
  Dataset out;
  out.name = ds.name + suffix;
  out.task = ds.task;
  out.inputs.resize(static_cast<long>(rows.size()), ds.inputs.cols());
  out.targets.resize(static_cast<long>(rows.size()), ds.targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<long>(i)) = ds.inputs.row(rows[i]);
    out.targets.row(static_cast<long>(i)) = ds.targets.row(rows[i]);
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_matched_marginals(const Dataset& ds, double fraction,
                                                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split fraction must lie strictly between 0 and 1");
  const long n = ds.inputs.rows();
  if (n < 2) throw std::invalid_argument("cannot split fewer than 2 samples");

  // Strata: class id for classification, target quantile bin for regression.
  std::vector<std::vector<long>> strata;
  if (ds.task == TaskKind::Regression) {
    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return ds.targets(a, 0) < ds.targets(b, 0); });
    const int bins = static_cast<int>(std::min<long>(10, n / 2));
    strata.resize(static_cast<std::size_t>(bins));
    for (long i = 0; i < n; ++i) {
      const int b = static_cast<int>(i * bins / n);
      strata[static_cast<std::size_t>(b)].push_back(order[static_cast<std::size_t>(i)]);
    }
  } else {
    const long classes = ds.targets.cols() > 1 ? ds.targets.cols() : 2;
    strata.resize(static_cast<std::size_t>(classes));
    for (long i = 0; i < n; ++i) {
      long cls;
      if (ds.targets.cols() > 1) {
        ds.targets.row(i).maxCoeff(&cls);
      } else {
        cls = ds.targets(i, 0) > 0.5 ? 1 : 0;
      }
      strata[static_cast<std::size_t>(cls)].push_back(i);
    }
  }

  std::vector<long> rows_a;
  std::vector<long> rows_b;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& members = strata[s];
    if (members.empty()) continue;
    if (members.size() < 2)
      throw std::invalid_argument("stratum " + std::to_string(s) +
                                  " has fewer than 2 samples, cannot match marginals");
    std::mt19937_64 rng(derive_seed(seed, s));
    std::shuffle(members.begin(), members.end(), rng);
    const long take = std::llround(fraction * static_cast<double>(members.size()));
    const long capped = std::clamp<long>(take, 1, static_cast<long>(members.size()) - 1);
    for (std::size_t i = 0; i < members.size(); ++i)
      (static_cast<long>(i) < capped ? rows_a : rows_b).push_back(members[i]);
  }
  std::sort(rows_a.begin(), rows_a.end());
  std::sort(rows_b.begin(), rows_b.end());
  return {take_rows(ds, rows_a, "/a"), take_rows(ds, rows_b, "/b")};
}

namespace {

std::vector<std::pair<std::string, std::string>> parse_kv_list(const std::string& s) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("expected key=value in descriptor, got '" + part + "'");
    out.emplace_back(part.substr(0, eq), part.substr(eq + 1));
  }
  return out;
}

}  // namespace

Dataset parse_dataset_descriptor(const std::string& descriptor) {
  const std::size_t colon = descriptor.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("dataset descriptor needs a 'kind:...' prefix: " + descriptor);
  const std::string kind = descriptor.substr(0, colon);
  const auto kv = parse_kv_list(descriptor.substr(colon + 1));

  if (kind == "synth") {
    int classes = 0, per_class = 0, d = 0;
    std::uint64_t seed = 0;
    double spread = 4.0, noise = 1.0;
    for (const auto& [k, v] : kv) {
      if (k == "classes") classes = std::stoi(v);
      else if (k == "per_class") per_class = std::stoi(v);
      else if (k == "d") d = std::stoi(v);
      else if (k == "seed") seed = std::stoull(v);
      else if (k == "spread") spread = std::stod(v);
      else if (k == "noise") noise = std::stod(v);
      else throw std::invalid_argument("unknown synth dataset key: " + k);
    }
    return synth_balanced_classification(classes, per_class, d, seed, spread, noise);
  }
  if (kind == "toy") {
    int n = 0;
    std::uint64_t seed = 0;
    for (const auto& [k, v] : kv) {
      if (k == "n") n = std::stoi(v);
      else if (k == "seed") seed = std::stoull(v);
      else throw std::invalid_argument("unknown toy dataset key: " + k);
    }
    return toy_wave_regression(n, seed);
  }
  if (kind == "mnist") {
    std::string images, labels;
    long limit = 0;
    for (const auto& [k, v] : kv) {
      if (k == "images") images = v;
      else if (k == "labels") labels = v;
      else if (k == "limit") limit = std::stol(v);
      else throw std::invalid_argument("unknown mnist dataset key: " + k);
    }
    if (images.empty() || labels.empty())
      throw std::invalid_argument("mnist descriptor needs images=... and labels=...");
    return load_mnist_idx(images, labels, limit);
  }
  throw std::invalid_argument("unknown dataset kind '" + kind + "' (expected synth|toy|mnist)");
}

}  // namespace lp
