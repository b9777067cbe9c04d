#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>

namespace lp {

enum class TaskKind { Regression, BinaryClassification, MulticlassOnehot };

struct Dataset {
  std::string name;
  TaskKind task = TaskKind::Regression;
  Eigen::MatrixXd inputs;   // N x d
  Eigen::MatrixXd targets;  // N x l
};

// Gaussian blobs with exactly per_class samples per class and one-hot
// targets, so every label channel has mean 1/classes.
Dataset synth_balanced_classification(int classes, int per_class, int d, std::uint64_t seed,
                                      double spread = 4.0, double noise = 1.0);

// 1D regression toy task: x uniform on [-1,1], y = -x^2 + sin(20x)/5 + 1.2.
double toy_wave_target(double x);
Dataset toy_wave_regression(int n, std::uint64_t seed);

// IDX-format image/label pair (the MNIST container). limit <= 0 loads all.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, long limit);

// Stratified split keeping the empirical label distribution of both parts as
// close as integer counts allow: by class for classification, by target
// quantile (10 bins) for regression. fraction is part_a's share.
std::pair<Dataset, Dataset> split_matched_marginals(const Dataset& ds, double fraction,
                                                    std::uint64_t seed);

// Descriptor strings: "synth:classes=10,per_class=50,d=16,seed=7",
// "toy:n=256,seed=3", "mnist:images=...,labels=...,limit=1000".
Dataset parse_dataset_descriptor(const std::string& descriptor);

}  // namespace lp
