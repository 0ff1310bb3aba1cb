#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "subcellsam/image_io.hpp"
#include "subcellsam/pipeline.hpp"
#include "subcellsam/synthetic.hpp"

using namespace subcellsam;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

SyntheticPlateOptions small_plate() {
  SyntheticPlateOptions o;
  o.neutral_wells = 2;
  o.positive_wells = 2;
  o.concentrations = 4;
  o.image_size = 128;
  o.max_cells = 5;
  return o;
}

RunConfig plate_config(const fs::path& dir, const std::string& out) {
  auto cfg = RunConfig::load(dir / "config.yaml");
  cfg.output = out;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SUBCELLSAM_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fixtures::TempDir("subcellsam_pipeline");
    write_synthetic_plate(make_synthetic_plate(small_plate()), dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static const fs::path& dir() { return dir_->path(); }

  static fixtures::TempDir* dir_;
};

fixtures::TempDir* PipelineTest::dir_ = nullptr;

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto code = [](const std::string& yaml) {
    try {
      RunConfig::from_yaml(yaml, "/tmp");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code("bogus: 1\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("sampling:\n  num_prompts_per_cell: 0\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("integration:\n  coverage_fraction_min: 2\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("input:\n  channels: {0: cell_marker}\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("input:\n  ground_truth: gt.png\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("workers: 0\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("rng_seed: [1\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code("hitval:\n  response_feature: cell.nope\n"), ErrorCode::ConfigError);
  EXPECT_NO_THROW(RunConfig::from_yaml("rng_seed: 5\nworkers: 3\n", "/tmp"));
}

TEST(Config, HashIgnoresWorkersAndOutput) {
  auto a = RunConfig::from_yaml("rng_seed: 5\n", "/tmp");
  auto b = a;
  b.workers = 4;
  b.output = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.rng_seed = 6;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Backends, GraphWithoutRuntimeIsUnavailable) {
  fixtures::TempDir dir("subcellsam_backend");
  auto cfg = RunConfig::from_yaml("", dir.path());
  cfg.backend = BackendSpec::parse("graph:/nonexistent/model.onnx");
  EXPECT_THROW(make_backends(cfg), Error);
  EXPECT_THROW(BackendSpec::parse("magic"), Error);
  EXPECT_EQ(BackendSpec::parse("oracle").str(), "oracle");
}

TEST_F(PipelineTest, SegmentIsDeterministicAcrossRunsAndWorkers) {
  std::ostringstream log;
  auto cfg1 = plate_config(dir(), "run1");
  auto cfg2 = plate_config(dir(), "run2");
  cfg2.workers = 3;
  const auto backends = make_backends(cfg1);
  const auto r1 = cmd_segment(cfg1, backends, log);
  const auto r2 = cmd_segment(cfg2, backends, log);
  EXPECT_EQ(r1.failures(), 0u);
  ASSERT_EQ(r1.images.size(), r2.images.size());
  for (const auto& entry : fs::directory_iterator(dir() / "run1" / "segmentation")) {
    const auto other = dir() / "run2" / "segmentation" / entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
  }
  EXPECT_EQ(slurp(dir() / "run1" / "manifest.json"), slurp(dir() / "run2" / "manifest.json"));
}

TEST_F(PipelineTest, FullChainProducesReports) {
  std::ostringstream log;
  const auto cfg = plate_config(dir(), "chain");
  cmd_segment(cfg, make_backends(cfg), log);
  EXPECT_EQ(cmd_features(cfg, log).failures(), 0u);
  cmd_hitval(cfg, log);
  const auto eval = cmd_eval(cfg, log);
  EXPECT_EQ(eval.failures(), 0u);
  const auto out = dir() / "chain";
  for (const char* f : {"features.csv", "hitval/zprime.csv", "hitval/ec50.csv", "eval.csv", "eval_summary.txt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto manifest = slurp(out / "manifest.json");
  for (const char* stage : {"\"segment\"", "\"features\"", "\"hitval\"", "\"eval\"", "\"config_hash\""}) {
    EXPECT_NE(manifest.find(stage), std::string::npos) << stage;
  }
  const auto ec50 = slurp(out / "hitval/ec50.csv");
  EXPECT_NE(ec50.find("CPD1"), std::string::npos);
  EXPECT_NE(ec50.find("CPD2"), std::string::npos);
}

TEST(Pipeline, ImageWithoutNucleusChannelFailsAlone) {
  fixtures::TempDir dir("subcellsam_partial");
  auto o = small_plate();
  o.concentrations = 4;
  write_synthetic_plate(make_synthetic_plate(o), dir.path());
  io::save_channels_tiff(dir.path() / "images" / "broken.tif", {Channel({64, 64}, 0.1f)});
  auto cfg = plate_config(dir.path(), "out");
  std::ostringstream log;
  const auto r = cmd_segment(cfg, make_backends(cfg), log);
  EXPECT_EQ(r.failures(), 1u);
  for (const auto& s : r.images) EXPECT_EQ(s.ok, s.image_id != "broken") << s.image_id;
  EXPECT_EQ(run_cli("segment --config " + (dir.path() / "config.yaml").string()), 0);
}

TEST(Pipeline, TwoConcentrationCompoundGetsNotEnoughPointsRow) {
  fixtures::TempDir dir("subcellsam_twoconc");
  auto o = small_plate();
  o.concentrations = 2;
  write_synthetic_plate(make_synthetic_plate(o), dir.path());
  const auto config = (dir.path() / "config.yaml").string();
  EXPECT_EQ(run_cli("all --config " + config), 0);
  const auto ec50 = slurp(dir.path() / "out" / "hitval" / "ec50.csv");
  EXPECT_NE(ec50.find("CPD1,"), std::string::npos);
  EXPECT_NE(ec50.find(",NotEnoughPoints,"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  fixtures::TempDir dir("subcellsam_cli");
  std::ofstream(dir.path() / "bad.yaml") << "unknown_key: 1\n";
  EXPECT_EQ(run_cli("segment --config " + (dir.path() / "bad.yaml").string()), 2);
  EXPECT_EQ(run_cli("segment"), 2);
  std::ofstream(dir.path() / "graph.yaml") << "backend: graph:/nonexistent/model.onnx\n";
  EXPECT_EQ(run_cli("segment --config " + (dir.path() / "graph.yaml").string()), 2);
  // Eval with nothing to pair is a fatal runtime error.
  std::ofstream(dir.path() / "eval.yaml") << "input:\n  images: none/*.tif\n  ground_truth: gt/{image_id}.png\n";
  EXPECT_EQ(run_cli("eval --config " + (dir.path() / "eval.yaml").string()), 1);
  EXPECT_EQ(run_cli("synth --out " + (dir.path() / "plate").string()), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "plate" / "config.yaml"));
}
