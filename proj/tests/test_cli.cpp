#include <doctest.h>

#include <sys/wait.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path case_dir(const std::string& name) {
  const fs::path dir = fs::path(LP_BINARY_DIR) / "scratch" / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "stdout.log";
  const fs::path err_file = dir / "stderr.log";
  const std::string cmd = std::string(LP_BINARY_DIR) + "/losspaint " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  CliResult res;
  if (status != -1 && WIFEXITED(status)) res.code = WEXITSTATUS(status);
  res.out = slurp(out_file);
  res.err = slurp(err_file);
  return res;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

std::string paint_config(const fs::path& outdir) {
  return "# smoke run\n"
         "dataset = synth:classes=2,per_class=8,d=4,seed=1\n"
         "pattern = analytic:ramp\n"
         "widths = 16,16\n"
         "loss = squared\n"
         "epochs = 80\n"
         "samples_per_epoch = 256\n"
         "batch = 64\n"
         "lr = 0.01\n"
         "seed = 5\n"
         "resolution = 33\n"
         "threshold = 0.05\n"
         "outdir = " +
         outdir.string() + "\n";
}

void put_u32_be(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_duplicate_idx(const fs::path& images, const fs::path& labels) {
  std::ofstream img(images, std::ios::binary);
  put_u32_be(img, 0x00000803);
  put_u32_be(img, 3);
  put_u32_be(img, 2);
  put_u32_be(img, 2);
  const unsigned char a[4] = {10, 20, 30, 40};
  img.write(reinterpret_cast<const char*>(a), 4);
  img.write(reinterpret_cast<const char*>(a), 4);  // exact duplicate of row 0
  const unsigned char b[4] = {1, 2, 3, 4};
  img.write(reinterpret_cast<const char*>(b), 4);
  std::ofstream lab(labels, std::ios::binary);
  put_u32_be(lab, 0x00000801);
  put_u32_be(lab, 3);
  const unsigned char digits[3] = {0, 1, 2};
  lab.write(reinterpret_cast<const char*>(digits), 3);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("paint produces the full artifact set and passes its threshold") {
  const fs::path dir = case_dir("paint_smoke");
  const fs::path outdir = dir / "out";
  write_file(dir / "run.cfg", paint_config(outdir));
  const CliResult res = run_cli("paint --config " + (dir / "run.cfg").string(), dir);
  CHECK(res.code == 0);
  CHECK(res.out.find("status: pass") != std::string::npos);
  for (const char* artifact : {"config_resolved.cfg", "checkpoint.lpnet", "metadata.json",
                               "grid.csv", "report.json", "report.txt"})
    CHECK(fs::exists(outdir / artifact));
  CHECK(!fs::exists(outdir / "surface.pgm"));  // z = 1 is not rendered

  const json report = json::parse(slurp(outdir / "report.json"));
  CHECK(report.at("pass").get<bool>());
  CHECK(report.at("aligned_mse").get<double>() <= 0.05);
  CHECK(report.at("offset").is_array());
  CHECK(report.at("a_star").is_array());
  const json meta = json::parse(slurp(outdir / "metadata.json"));
  CHECK(meta.at("loss") == "squared");

  const std::string grid = slurp(outdir / "grid.csv");
  CHECK(grid.rfind("alpha1,value1", 0) == 0);
}

TEST_CASE("untrained slices fail a zero threshold") {
  const fs::path dir = case_dir("paint_untrained");
  const fs::path outdir = dir / "out";
  write_file(dir / "run.cfg", paint_config(outdir));
  const CliResult res =
      run_cli("paint --config " + (dir / "run.cfg").string() + " --set untrained=1 --set threshold=0",
              dir);
  CHECK(res.code == 2);
  CHECK(res.out.find("status: fail") != std::string::npos);
}

TEST_CASE("identical seeds reproduce the grid byte for byte") {
  const fs::path dir = case_dir("paint_repro");
  const fs::path out1 = dir / "out1";
  const fs::path out2 = dir / "out2";
  write_file(dir / "run.cfg", paint_config(out1));
  CHECK(run_cli("paint --config " + (dir / "run.cfg").string(), dir).code == 0);
  CHECK(run_cli("paint --config " + (dir / "run.cfg").string() + " --set outdir=" + out2.string(),
                dir)
            .code == 0);
  const std::string g1 = slurp(out1 / "grid.csv");
  CHECK(!g1.empty());
  CHECK(g1 == slurp(out2 / "grid.csv"));
  CHECK(slurp(out1 / "checkpoint.lpnet") == slurp(out2 / "checkpoint.lpnet"));
}

TEST_CASE("anchored run reports its minimum structure") {
  const fs::path dir = case_dir("paint_min_smoke");
  const fs::path outdir = dir / "out";
  const std::string cfg =
      "dataset = toy:n=32,seed=3\n"
      "pattern = analytic:constant,value=0.5\n"
      "widths = 16\n"
      "loss = squared\n"
      "epochs = 30\n"
      "samples_per_epoch = 128\n"
      "batch = 64\n"
      "lr = 0.005\n"
      "seed = 2\n"
      "resolution = 17\n"
      "threshold = 0.05\n"
      "outdir = " +
      outdir.string() + "\n";
  write_file(dir / "run.cfg", cfg);
  const CliResult res = run_cli("paint-min --config " + (dir / "run.cfg").string(), dir);
  CHECK(res.code == 0);
  const json report = json::parse(slurp(outdir / "report.json"));
  CHECK(report.at("min_embedding_distance").get<double>() > 1e-6);
  CHECK(report.at("surface_min_alpha").is_array());
  CHECK(report.at("pattern_value_at_min").is_number());
  CHECK(report.at("train_loss_at_min").is_number());
  CHECK(report.at("tied_minima").is_array());
  CHECK(report.at("tied_minima").size() >= 1);
  CHECK(report.contains("local_minima"));
}

TEST_CASE("duplicate inputs abort the anchored construction") {
  const fs::path dir = case_dir("paint_min_dup");
  const fs::path images = dir / "img.idx";
  const fs::path labels = dir / "lab.idx";
  write_duplicate_idx(images, labels);
  const std::string cfg =
      "dataset = mnist:images=" + images.string() + ",labels=" + labels.string() +
      "\n"
      "pattern = analytic:bimodal\n"
      "widths = 8\n"
      "epochs = 1\n"
      "outdir = " +
      (dir / "out").string() + "\n";
  write_file(dir / "run.cfg", cfg);
  const CliResult res = run_cli("paint-min --config " + (dir / "run.cfg").string(), dir);
  CHECK(res.code == 3);
  CHECK(res.err.find("try another seed") != std::string::npos);
}

TEST_CASE("transfer on the identical dataset is exactly zero") {
  const fs::path dir = case_dir("transfer_same");
  const fs::path paint_out = dir / "painted";
  write_file(dir / "run.cfg", paint_config(paint_out));
  REQUIRE(run_cli("paint --config " + (dir / "run.cfg").string(), dir).code == 0);

  const fs::path outdir = dir / "out";
  const std::string cfg =
      "checkpoint = " + (paint_out / "checkpoint.lpnet").string() +
      "\n"
      "dataset = synth:classes=2,per_class=8,d=4,seed=1\n"
      "dataset_b = synth:classes=2,per_class=8,d=4,seed=1\n"
      "resolution = 17\n"
      "outdir = " +
      outdir.string() + "\n";
  write_file(dir / "transfer.cfg", cfg);
  const CliResult res = run_cli("transfer --config " + (dir / "transfer.cfg").string(), dir);
  CHECK(res.code == 0);
  const json report = json::parse(slurp(outdir / "report.json"));
  CHECK(report.at("max_abs_diff").get<double>() == 0.0);
  CHECK(fs::exists(outdir / "grid_a.csv"));
  CHECK(fs::exists(outdir / "grid_b.csv"));
  CHECK(slurp(outdir / "grid_a.csv") == slurp(outdir / "grid_b.csv"));
}

TEST_CASE("transfer separates mismatched label marginals") {
  const fs::path dir = case_dir("transfer_mismatch");
  const fs::path paint_out = dir / "painted";
  write_file(dir / "run.cfg", paint_config(paint_out));
  REQUIRE(run_cli("paint --config " + (dir / "run.cfg").string(), dir).code == 0);

  const std::string cfg =
      "checkpoint = " + (paint_out / "checkpoint.lpnet").string() +
      "\n"
      "dataset = synth:classes=2,per_class=8,d=4,seed=1\n"
      "dataset_b = synth:classes=4,per_class=8,d=4,seed=1\n"
      "resolution = 17\n"
      "outdir = " +
      (dir / "out").string() + "\n";
  write_file(dir / "transfer.cfg", cfg);
  const CliResult res = run_cli("transfer --config " + (dir / "transfer.cfg").string(), dir);
  CHECK(res.code == 2);
  CHECK(res.out.find("status: fail") != std::string::npos);
}

TEST_CASE("transfer rejects a contradictory loss override") {
  const fs::path dir = case_dir("transfer_loss");
  const fs::path paint_out = dir / "painted";
  write_file(dir / "run.cfg", paint_config(paint_out));
  REQUIRE(run_cli("paint --config " + (dir / "run.cfg").string(), dir).code == 0);
  const std::string cfg =
      "checkpoint = " + (paint_out / "checkpoint.lpnet").string() +
      "\n"
      "dataset = synth:classes=2,per_class=8,d=4,seed=1\n"
      "dataset_b = synth:classes=2,per_class=8,d=4,seed=2\n"
      "loss = bce\n"
      "outdir = " +
      (dir / "out").string() + "\n";
  write_file(dir / "transfer.cfg", cfg);
  const CliResult res = run_cli("transfer --config " + (dir / "transfer.cfg").string(), dir);
  CHECK(res.code == 1);
  CHECK(res.err.find("error:") != std::string::npos);
}

TEST_CASE("unknown configuration keys are rejected") {
  const fs::path dir = case_dir("bad_key");
  write_file(dir / "run.cfg", "dataset = toy:n=8,seed=1\nbogus = 1\n");
  const CliResult res = run_cli("paint --config " + (dir / "run.cfg").string(), dir);
  CHECK(res.code == 1);
  CHECK(res.err.find("error:") != std::string::npos);

  const CliResult missing = run_cli("paint --config " + (dir / "nope.cfg").string(), dir);
  CHECK(missing.code == 1);

  const CliResult nocmd = run_cli("sprinkle", dir);
  CHECK(nocmd.code == 1);
}

TEST_CASE("verify reports every invariant with its tolerance") {
  const fs::path dir = case_dir("verify");
  const CliResult res = run_cli("verify --seed 7", dir);
  CHECK(res.code == 0);
  for (const char* check : {"gradient-check", "sigma-roundtrip", "target-identity",
                            "input-independence", "tolerance", "PASS"})
    CHECK(res.out.find(check) != std::string::npos);
  CHECK(res.out.find("FAIL") == std::string::npos);

  const CliResult bug = run_cli("verify --seed 7 --inject-sigma-bug", dir);
  CHECK(bug.code == 2);
  CHECK(bug.out.find("FAIL") != std::string::npos);
}

TEST_CASE("render draws a deterministic image from a grid csv") {
  const fs::path dir = case_dir("render");
  const fs::path csv = dir / "grid.csv";
  std::string body = "alpha1,alpha2,value1\n";
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      body += std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(x + y) + "\n";
  write_file(csv, body);
  const fs::path img1 = dir / "one.pgm";
  const fs::path img2 = dir / "two.pgm";
  CHECK(run_cli("render " + csv.string() + " " + img1.string(), dir).code == 0);
  CHECK(run_cli("render " + csv.string() + " " + img2.string(), dir).code == 0);
  const std::string b1 = slurp(img1);
  CHECK(!b1.empty());
  CHECK(b1 == slurp(img2));

  const fs::path flat_csv = dir / "flat.csv";
  write_file(flat_csv, "alpha1,alpha2,value1\n0,0,0.5\n1,0,0.5\n0,1,0.5\n1,1,0.5\n");
  const fs::path flat_img = dir / "flat.pgm";
  CHECK(run_cli("render " + flat_csv.string() + " " + flat_img.string(), dir).code == 0);
  const std::string flat = slurp(flat_img);
  CHECK(flat.substr(flat.size() - 4) == std::string(4, '\0'));

  const CliResult bad = run_cli("render " + csv.string(), dir);
  CHECK(bad.code == 1);
}

}  // TEST_SUITE
