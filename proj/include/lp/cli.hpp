#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lp/losses.hpp"
#include "lp/nn.hpp"

namespace lp {

// Resolved run configuration: key=value file merged with command-line
// overrides. Exit codes across subcommands: 0 success, 1 configuration or
// I/O error, 2 quality threshold failed, 3 embedding injectivity failed.
struct RunConfig {
  std::string dataset;
  std::string dataset_b;
  std::string checkpoint;
  std::string pattern;
  std::vector<int> widths;
  std::string activation = "tanh";
  std::string loss = "squared";
  bool loss_set = false;
  int epochs = 100;
  long samples_per_epoch = 1024;
  int batch = 128;
  double lr = 1e-3;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  int resolution = 32;
  double threshold = 0.05;
  bool threshold_set = false;
  std::string outdir = "out";
  double margin = 1e-3;
  std::string h_mode = "uniform";
  bool train_shatter = false;
  bool untrained = false;
};

RunConfig parse_run_config(const std::string& path, const std::vector<std::string>& overrides);

int cmd_paint(const RunConfig& cfg);
int cmd_paint_min(const RunConfig& cfg);
int cmd_transfer(const RunConfig& cfg);
int cmd_verify(std::uint64_t seed, bool inject_sigma_bug);
int cmd_render(const std::string& grid_csv, const std::string& out_image);

int run_cli(int argc, char** argv);

}  // namespace lp
