// subcellsam command-line interface.
//
//   subcellsam segment  --config run.yaml [--seed N] [--backend oracle|graph:PATH] [--workers N] [--out DIR]
//   subcellsam features --config run.yaml
//   subcellsam hitval   --config run.yaml
//   subcellsam eval     --config run.yaml
//   subcellsam all      --config run.yaml
//   subcellsam synth    --out DIR [--seed N]
//
// Exit codes: 0 batch completed (per-image failures are listed in the summary
// and manifest), 1 fatal runtime error, 2 configuration error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "subcellsam/pipeline.hpp"
#include "subcellsam/synthetic.hpp"

namespace {

constexpr int kExitFatal = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<int> workers;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "Run configuration (YAML)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "Override rng_seed");
  cmd->add_option("--backend", opt.backend, "oracle or graph:PATH");
  cmd->add_option("--workers", opt.workers, "Images processed concurrently");
  cmd->add_option("--out", opt.out, "Output directory");
}

subcellsam::RunConfig load_config(const Options& opt) {
  auto cfg = subcellsam::RunConfig::load(opt.config);
  if (opt.seed) {
    cfg.rng_seed = *opt.seed;
    cfg.sampling.rng_seed = *opt.seed;
  }
  if (opt.backend) cfg.backend = subcellsam::BackendSpec::parse(*opt.backend);
  if (opt.workers) cfg.workers = *opt.workers;
  if (opt.out) cfg.output = std::filesystem::absolute(*opt.out).string();
  cfg.validate();
  return cfg;
}

void report(const std::string& stage, const subcellsam::CommandResult& r) {
  if (r.images.empty()) {
    std::cout << fmt::format("[{}] done\n", stage);
  } else {
    std::cout << fmt::format("[{}] {} images, {} failed\n", stage, r.images.size(), r.failures());
  }
  for (const auto& s : r.images) {
    if (!s.ok) std::cout << fmt::format("  {}: {}\n", s.image_id, s.error);
  }
  for (const auto& n : r.notes) std::cout << "  note: " << n << '\n';
}

bool is_config_error(subcellsam::ErrorCode code) {
  using subcellsam::ErrorCode;
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::BackendUnavailable:
    case ErrorCode::UnsupportedOpset:
    case ErrorCode::InvalidArgument:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot (sub)cellular segmentation and hit-validation analytics"};
  app.require_subcommand(1);
  Options opt;
  std::string synth_out;
  std::uint64_t synth_seed = 7;

  auto* segment = app.add_subcommand("segment", "Nuclei, cells and subcellular entities");
  auto* features = app.add_subcommand("features", "Feature table from segmentation artifacts");
  auto* hitval = app.add_subcommand("hitval", "Z'-factor and EC50 reports");
  auto* eval = app.add_subcommand("eval", "DSC/IoU against ground truth");
  auto* all = app.add_subcommand("all", "segment, features, then hitval/eval when configured");
  for (auto* cmd : {segment, features, hitval, eval, all}) add_common(cmd, opt);
  auto* synth = app.add_subcommand("synth", "Write the bundled synthetic plate");
  synth->add_option("--out", synth_out, "Target directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      subcellsam::SyntheticPlateOptions o;
      o.seed = synth_seed;
      const auto plate = subcellsam::make_synthetic_plate(o);
      subcellsam::write_synthetic_plate(plate, synth_out);
      std::cout << fmt::format("wrote {} images to {}\n", plate.images.size(), synth_out);
      return 0;
    }

    subcellsam::RunConfig cfg;
    subcellsam::Backends backends;
    try {
      cfg = load_config(opt);
      if (segment->parsed() || all->parsed()) backends = subcellsam::make_backends(cfg);
    } catch (const subcellsam::Error& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kExitConfig;
    }

    if (segment->parsed() || all->parsed()) report("segment", subcellsam::cmd_segment(cfg, backends, std::cout));
    if (features->parsed() || all->parsed()) report("features", subcellsam::cmd_features(cfg, std::cout));
    if (hitval->parsed() || (all->parsed() && !cfg.plate_layout.empty())) {
      report("hitval", subcellsam::cmd_hitval(cfg, std::cout));
    }
    if (eval->parsed() || (all->parsed() && !cfg.ground_truth.empty())) {
      report("eval", subcellsam::cmd_eval(cfg, std::cout));
    }
    return 0;
  } catch (const subcellsam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config_error(e.code()) ? kExitConfig : kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}
