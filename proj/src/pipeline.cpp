#include "subcellsam/pipeline.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>
#include <nlohmann/json.hpp>

#include "subcellsam/image_io.hpp"
#include "subcellsam/oracle_backend.hpp"

namespace subcellsam {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

BackendSpec BackendSpec::parse(const std::string& text) {
  if (text == "oracle") return {"oracle", {}};
  if (text.rfind("graph:", 0) == 0 && text.size() > 6) return {"graph", text.substr(6)};
  throw Error(ErrorCode::ConfigError, "backend must be 'oracle' or 'graph:PATH', got '" + text + "'");
}

std::string BackendSpec::str() const { return kind == "oracle" ? "oracle" : "graph:" + path.string(); }

namespace {

ChannelRole parse_role(const std::string& text) {
  if (text == "nucleus") return ChannelRole::Nucleus;
  if (text == "cell_marker") return ChannelRole::CellMarker;
  if (text == "subcellular") return ChannelRole::SubcellularMarker;
  if (text == "other") return ChannelRole::Other;
  throw Error(ErrorCode::ConfigError, "unknown channel role '" + text + "'");
}

std::string role_name(ChannelRole role) {
  switch (role) {
    case ChannelRole::Nucleus: return "nucleus";
    case ChannelRole::CellMarker: return "cell_marker";
    case ChannelRole::SubcellularMarker: return "subcellular";
    case ChannelRole::Other: return "other";
  }
  return "other";
}

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw Error(ErrorCode::ConfigError, where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw Error(ErrorCode::ConfigError, fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("bad value for '{}': {}", key, e.what()));
  }
}

}  // namespace

RunConfig RunConfig::from_yaml(const std::string& text, const fs::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config parse error: ") + e.what());
  }
  if (root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  check_keys(root, "config", {"input", "backend", "nuclei_backend", "cell_backend", "subcellular_backend",
                              "sampling", "integration", "subcellular", "eval", "hitval", "output", "rng_seed",
                              "workers"});
  try {
    if (const auto in = root["input"]) {
      check_keys(in, "input", {"images", "channels", "ground_truth", "plate_layout"});
      read(in, "images", cfg.images);
      read(in, "ground_truth", cfg.ground_truth);
      read(in, "plate_layout", cfg.plate_layout);
      if (const auto ch = in["channels"]) {
        if (!ch.IsMap()) throw Error(ErrorCode::ConfigError, "input.channels must map indices to roles");
        cfg.channels.clear();
        for (const auto& kv : ch) cfg.channels[kv.first.as<int>()] = parse_role(kv.second.as<std::string>());
      }
    }
    auto backend = [&](const char* key) -> std::optional<BackendSpec> {
      if (!root[key]) return std::nullopt;
      return BackendSpec::parse(root[key].as<std::string>());
    };
    if (auto b = backend("backend")) cfg.backend = *b;
    cfg.nuclei_backend = backend("nuclei_backend");
    cfg.cell_backend = backend("cell_backend");
    cfg.subcellular_backend = backend("subcellular_backend");

    if (const auto s = root["sampling"]) {
      check_keys(s, "sampling", {"num_prompts_per_cell", "num_hotpoints", "max_bbox_area_to_sample",
                                 "init_bbox_scale", "num_initial_foreground", "num_anchor_points",
                                 "num_stabilizing_points", "neighbor_bbox_scale"});
      read(s, "num_prompts_per_cell", cfg.sampling.num_prompts_per_cell);
      read(s, "num_hotpoints", cfg.sampling.num_hotpoints);
      read(s, "max_bbox_area_to_sample", cfg.sampling.max_bbox_area_to_sample);
      read(s, "init_bbox_scale", cfg.sampling.init_bbox_scale);
      read(s, "num_initial_foreground", cfg.sampling.num_initial_foreground);
      read(s, "num_anchor_points", cfg.sampling.num_anchor_points);
      read(s, "num_stabilizing_points", cfg.sampling.num_stabilizing_points);
      read(s, "neighbor_bbox_scale", cfg.sampling.neighbor_bbox_scale);
    }
    if (const auto i = root["integration"]) {
      check_keys(i, "integration", {"coverage_fraction_min", "exclude_border"});
      read(i, "coverage_fraction_min", cfg.integration.coverage_fraction_min);
      read(i, "exclude_border", cfg.integration.exclude_border);
    }
    if (const auto s = root["subcellular"]) {
      check_keys(s, "subcellular", {"min_entity_area"});
      read(s, "min_entity_area", cfg.subcellular.min_entity_area);
    }
    if (const auto e = root["eval"]) {
      check_keys(e, "eval", {"mode"});
      if (e["mode"]) cfg.eval_mode = parse_eval_mode(e["mode"].as<std::string>());
    }
    if (const auto h = root["hitval"]) {
      check_keys(h, "hitval", {"response_feature", "z_prime_denominator"});
      read(h, "response_feature", cfg.response_feature);
      if (h["z_prime_denominator"]) {
        const auto d = h["z_prime_denominator"].as<std::string>();
        if (d == "as_printed") {
          cfg.z_prime_denominator = ZPrimeDenominator::AsPrinted;
        } else if (d == "conventional") {
          cfg.z_prime_denominator = ZPrimeDenominator::Conventional;
        } else {
          throw Error(ErrorCode::ConfigError, "z_prime_denominator must be as_printed or conventional");
        }
      }
    }
    read(root, "output", cfg.output);
    read(root, "rng_seed", cfg.rng_seed);
    read(root, "workers", cfg.workers);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config error: ") + e.what());
  }
  cfg.sampling.rng_seed = cfg.rng_seed;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return from_yaml(text.str(), fs::absolute(path).parent_path());
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  try {
    sampling.validate();
    integration.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (images.empty()) fail("input.images must not be empty");
  if (output.empty()) fail("output must not be empty");
  if (workers < 1) fail("workers must be at least 1");
  int nuclei = 0;
  int markers = 0;
  int sub = 0;
  for (const auto& [index, role] : channels) {
    if (index < 0) fail("channel indices must be non-negative");
    nuclei += role == ChannelRole::Nucleus;
    markers += role == ChannelRole::CellMarker;
    sub += role == ChannelRole::SubcellularMarker;
  }
  if (nuclei != 1) fail("exactly one nucleus channel required");
  if (markers < 1) fail("at least one cell_marker channel required");
  if (sub > 1) fail("at most one subcellular channel allowed");
  if (!ground_truth.empty() && ground_truth.find("{image_id}") == std::string::npos) {
    fail("input.ground_truth must contain {image_id}");
  }
  if (response_feature != "best" && response_feature != kLdaCompositeName) {
    try {
      FeatureRef::parse(response_feature);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
}

std::string RunConfig::canonical() const {
  std::string s;
  auto line = [&](const std::string& key, const auto& value) { s += fmt::format("{}={}\n", key, value); };
  line("input.images", images);
  for (const auto& [index, role] : channels) line(fmt::format("input.channels.{}", index), role_name(role));
  line("input.ground_truth", ground_truth);
  line("input.plate_layout", plate_layout);
  line("backend", backend.str());
  line("nuclei_backend", nuclei_backend ? nuclei_backend->str() : "");
  line("cell_backend", cell_backend ? cell_backend->str() : "");
  line("subcellular_backend", subcellular_backend ? subcellular_backend->str() : "");
  line("sampling.num_prompts_per_cell", sampling.num_prompts_per_cell);
  line("sampling.num_hotpoints", sampling.num_hotpoints);
  line("sampling.max_bbox_area_to_sample", sampling.max_bbox_area_to_sample);
  line("sampling.init_bbox_scale", sampling.init_bbox_scale);
  line("sampling.num_initial_foreground", sampling.num_initial_foreground);
  line("sampling.num_anchor_points", sampling.num_anchor_points);
  line("sampling.num_stabilizing_points", sampling.num_stabilizing_points);
  line("sampling.neighbor_bbox_scale", sampling.neighbor_bbox_scale);
  line("integration.coverage_fraction_min", integration.coverage_fraction_min);
  line("integration.exclude_border", integration.exclude_border);
  line("subcellular.min_entity_area", subcellular.min_entity_area);
  line("eval.mode", to_string(eval_mode));
  line("hitval.response_feature", response_feature);
  line("hitval.z_prime_denominator",
       z_prime_denominator == ZPrimeDenominator::AsPrinted ? "as_printed" : "conventional");
  line("rng_seed", rng_seed);
  return s;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

fs::path RunConfig::resolve(const std::string& path) const {
  fs::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

// ---------------------------------------------------------------- hashing

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

// ---------------------------------------------------------------- backends

Backends make_backends(const RunConfig& cfg, const SessionFactory& factory) {
  std::map<std::string, std::shared_ptr<const SegmentationBackend>> cache;
  auto make = [&](const BackendSpec& spec) -> std::shared_ptr<const SegmentationBackend> {
    const std::string key = spec.str();
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    std::shared_ptr<const SegmentationBackend> b;
    if (spec.kind == "oracle") {
      b = std::make_shared<OracleBackend>();
    } else {
      BackendDescriptor desc = load_backend(cfg.resolve(spec.path.string()));
      if (!factory) {
        throw Error(ErrorCode::BackendUnavailable,
                    "no inference runtime available for graph backend " + desc.graph_path.string());
      }
      b = std::make_shared<GraphBackend>(desc, factory(desc));
    }
    cache[key] = b;
    return b;
  };
  Backends out;
  out.nuclei = make(cfg.nuclei_backend.value_or(cfg.backend));
  out.cell = make(cfg.cell_backend.value_or(cfg.backend));
  out.subcellular = make(cfg.subcellular_backend.value_or(cfg.backend));
  return out;
}

// ---------------------------------------------------------------- segmentation

SegmentedImage ImageSegmentation::segmented() const {
  return {instances.labels, instances.cell_ids, nuclei, entities};
}

Raster<std::uint32_t> ImageSegmentation::nuclei_labels() const {
  Raster<std::uint32_t> out(instances.labels.size(), 0);
  for (const auto& n : nuclei) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (n.mask(x, y)) out(x, y) = static_cast<std::uint32_t>(n.id);
      }
    }
  }
  return out;
}

Raster<std::uint32_t> ImageSegmentation::subcellular_labels() const {
  Raster<std::uint32_t> out(instances.labels.size(), 0);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (entities[i].mask(x, y)) out(x, y) = static_cast<std::uint32_t>(i + 1);
      }
    }
  }
  return out;
}

ImageSegmentation segment_image(const MultiChannelImage& image, const Backends& backends,
                                const SegmentParams& params) {
  params.sampling.validate();
  params.integration.validate();
  const auto markers = image.cell_marker_channels();
  if (markers.empty()) throw Error(ErrorCode::NoCellMarkerChannel, "image has no cell marker channel");

  ImageSegmentation out;
  out.nuclei = detect_nuclei(image, *backends.nuclei);

  std::vector<CoverageMap> maps;
  for (const auto& nucleus : out.nuclei) {
    std::vector<CellTrace> traces;
    for (int c : markers) {
      traces.push_back(segment_cell(image.channel(c), nucleus, out.nuclei, *backends.cell, params.sampling, c));
    }
    CellDiagnostics diag;
    diag.cell_id = nucleus.id;
    for (const auto& t : traces) {
      double sum = 0.0;
      for (double c : t.confidences) sum += c;
      diag.mean_confidence.push_back(t.confidences.empty() ? 0.0 : sum / t.confidences.size());
      diag.lost.push_back(t.lost);
    }
    const auto fused = combine_channels(traces);
    for (const auto& m : fused) diag.iteration_areas.push_back(m.area());
    if (!fused.empty()) maps.push_back(build_coverage_map(fused, nucleus.id));
    out.diagnostics.push_back(std::move(diag));
  }

  out.instances = integrate_instances(maps, params.integration, image.size());
  for (std::size_t k = 0; k < out.instances.cell_ids.size(); ++k) {
    for (auto& d : out.diagnostics) {
      if (d.cell_id == out.instances.cell_ids[k]) d.label = static_cast<std::uint32_t>(k + 1);
    }
  }

  if (const auto sub = image.subcellular_channel()) {
    for (std::uint32_t label = 1; label <= out.instances.cell_ids.size(); ++label) {
      auto entities = segment_subcellular(image.channel(*sub), out.instances.labels.mask_of(label),
                                          static_cast<int>(label), *backends.subcellular, params.subcellular);
      for (auto& e : entities) out.entities.push_back(std::move(e));
    }
  }
  return out;
}

// ---------------------------------------------------------------- batch helpers

std::size_t CommandResult::failures() const {
  return static_cast<std::size_t>(std::count_if(images.begin(), images.end(), [](const auto& s) { return !s.ok; }));
}

std::vector<fs::path> list_images(const RunConfig& cfg) {
  const std::string pattern = cfg.resolve(cfg.images).string();
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<fs::path> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw Error(ErrorCode::ConfigError, "cannot expand " + pattern);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Computes items on `workers` threads and hands results to `write` strictly in index order.
template <typename R>
void run_ordered(std::size_t n, int workers, const std::function<R(std::size_t)>& compute,
                 const std::function<void(std::size_t, R&)>& write) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      R r = compute(i);
      write(i, r);
    }
    return;
  }
  std::vector<std::optional<R>> slots(n);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        R r = compute(i);
        {
          std::lock_guard lock(mu);
          slots[i] = std::move(r);
        }
        cv.notify_all();
      }
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<R> r;
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return slots[i].has_value(); });
      r = std::move(slots[i]);
      slots[i].reset();
    }
    write(i, *r);
  }
}

std::string image_id_of(const fs::path& p) { return p.stem().string(); }

MultiChannelImage load_image(const RunConfig& cfg, const fs::path& path) {
  return MultiChannelImage(io::load_channels(path), cfg.channels);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "missing " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Records a stage in <out>/manifest.json. Stages from earlier runs survive when
// the config hash matches.
void update_manifest(const RunConfig& cfg, const std::string& stage, const CommandResult& result,
                     const std::vector<fs::path>& artifacts) {
  const fs::path out_dir = cfg.output_dir();
  const fs::path path = out_dir / "manifest.json";
  json manifest;
  if (fs::exists(path)) {
    try {
      manifest = json::parse(read_text(path));
      if (manifest.value("config_hash", "") != cfg.hash()) manifest = json::object();
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  manifest["tool"] = "subcellsam";
  manifest["versions"] = {{"subcellsam", kVersion}};
  manifest["config_hash"] = cfg.hash();
  manifest["rng_seed"] = cfg.rng_seed;

  json images = json::array();
  for (const auto& s : result.images) {
    json entry = {{"image_id", s.image_id}, {"status", s.ok ? "ok" : "error"}};
    if (!s.ok) entry["error"] = s.error;
    images.push_back(entry);
  }
  json files = json::array();
  for (const auto& a : artifacts) {
    files.push_back({{"path", fs::relative(a, out_dir).generic_string()}, {"sha256", sha256_file(a)}});
  }
  manifest["stages"][stage] = {{"images", images}, {"artifacts", files}, {"notes", result.notes}};
  write_text(path, manifest.dump(2) + "\n");
}

struct SegmentOutcome {
  ImageStatus status;
  std::optional<ImageSegmentation> seg;
};

json diagnostics_json(const std::string& image_id, const ImageSegmentation& seg) {
  json cells = json::array();
  for (std::size_t k = 0; k < seg.instances.cell_ids.size(); ++k) {
    cells.push_back({{"label", k + 1}, {"nucleus_id", seg.instances.cell_ids[k]}});
  }
  json entities = json::array();
  for (std::size_t i = 0; i < seg.entities.size(); ++i) {
    entities.push_back({{"id", i + 1}, {"cell_label", seg.entities[i].cell_id}, {"area", seg.entities[i].area}});
  }
  json diag = json::array();
  for (const auto& d : seg.diagnostics) {
    diag.push_back({{"nucleus_id", d.cell_id},
                    {"label", d.label},
                    {"mean_confidence", d.mean_confidence},
                    {"lost", d.lost},
                    {"iteration_areas", d.iteration_areas}});
  }
  return {{"image_id", image_id}, {"cells", cells}, {"entities", entities}, {"diagnostics", diag}};
}

}  // namespace

CommandResult cmd_segment(const RunConfig& cfg, const Backends& backends, std::ostream& log) {
  const auto paths = list_images(cfg);
  const fs::path seg_dir = cfg.output_dir() / "segmentation";
  fs::create_directories(seg_dir);
  const SegmentParams params{cfg.sampling, cfg.integration, cfg.subcellular};

  CommandResult result;
  std::vector<fs::path> artifacts;
  std::function<SegmentOutcome(std::size_t)> compute = [&](std::size_t i) {
    SegmentOutcome o;
    o.status.image_id = image_id_of(paths[i]);
    try {
      o.seg = segment_image(load_image(cfg, paths[i]), backends, params);
    } catch (const std::exception& e) {
      o.status.ok = false;
      o.status.error = e.what();
    }
    return o;
  };
  std::function<void(std::size_t, SegmentOutcome&)> write = [&](std::size_t, SegmentOutcome& o) {
    if (o.seg) {
      try {
        const std::string& id = o.status.image_id;
        const std::vector<fs::path> files = {seg_dir / (id + "_nuclei.png"), seg_dir / (id + "_cells.png"),
                                             seg_dir / (id + "_subcellular.png"), seg_dir / (id + "_cells.json")};
        io::save_labels(files[0], o.seg->nuclei_labels());
        io::save_labels(files[1], o.seg->instances.labels.raster);
        io::save_labels(files[2], o.seg->subcellular_labels());
        write_text(files[3], diagnostics_json(id, *o.seg).dump(2) + "\n");
        artifacts.insert(artifacts.end(), files.begin(), files.end());
        log << fmt::format("{}: {} nuclei, {} cells, {} subcellular entities\n", id, o.seg->nuclei.size(),
                           o.seg->instances.cell_ids.size(), o.seg->entities.size());
      } catch (const std::exception& e) {
        o.status.ok = false;
        o.status.error = e.what();
      }
    }
    if (!o.status.ok) log << fmt::format("{}: FAILED ({})\n", o.status.image_id, o.status.error);
    result.images.push_back(o.status);
  };
  run_ordered(paths.size(), cfg.workers, compute, write);
  if (paths.empty()) result.notes.push_back("no input images matched " + cfg.images);
  update_manifest(cfg, "segment", result, artifacts);
  return result;
}

namespace {

SegmentedImage load_segmentation(const fs::path& seg_dir, const std::string& id) {
  SegmentedImage seg;
  seg.cells.raster = io::load_labels(seg_dir / (id + "_cells.png"));
  InstanceLabelMap nuclei_map{io::load_labels(seg_dir / (id + "_nuclei.png"))};
  InstanceLabelMap sub_map{io::load_labels(seg_dir / (id + "_subcellular.png"))};
  json meta;
  try {
    meta = json::parse(read_text(seg_dir / (id + "_cells.json")));
    for (const auto& c : meta.at("cells")) seg.cell_nucleus_ids.push_back(c.at("nucleus_id").get<int>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, "bad diagnostics for " + id + ": " + e.what());
  }
  std::set<std::uint32_t> ids(nuclei_map.raster.values().begin(), nuclei_map.raster.values().end());
  for (auto nid : ids) {
    if (nid == 0) continue;
    NucleusRecord rec;
    rec.id = static_cast<int>(nid);
    rec.mask = nuclei_map.mask_of(nid);
    rec.center = compute_center(rec.mask);
    rec.stats = shape_stats(rec.mask);
    seg.nuclei.push_back(std::move(rec));
  }
  try {
    for (const auto& e : meta.at("entities")) {
      const auto eid = e.at("id").get<std::uint32_t>();
      SubcellularEntity entity{e.at("cell_label").get<int>(), sub_map.mask_of(eid), 0};
      entity.area = entity.mask.area();
      if (entity.area > 0) seg.entities.push_back(std::move(entity));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, "bad entity list for " + id + ": " + e.what());
  }
  return seg;
}

std::optional<PlateLayout> load_layout(const RunConfig& cfg) {
  if (cfg.plate_layout.empty()) return std::nullopt;
  return PlateLayout::read_csv(cfg.resolve(cfg.plate_layout));
}

}  // namespace

CommandResult cmd_features(const RunConfig& cfg, std::ostream& log) {
  const auto paths = list_images(cfg);
  const fs::path out_dir = cfg.output_dir();
  const fs::path seg_dir = out_dir / "segmentation";
  fs::create_directories(out_dir);
  const auto layout = load_layout(cfg);

  CommandResult result;
  FeatureTable table;
  for (const auto& path : paths) {
    ImageStatus status{image_id_of(path), true, ""};
    try {
      const SegmentedImage seg = load_segmentation(seg_dir, status.image_id);
      FeatureTable t = extract_all(load_image(cfg, path), seg, status.image_id, layout ? &*layout : nullptr);
      table.append(t);
      log << fmt::format("{}: {} feature rows\n", status.image_id, t.size());
    } catch (const std::exception& e) {
      status.ok = false;
      status.error = e.what();
      log << fmt::format("{}: FAILED ({})\n", status.image_id, status.error);
    }
    result.images.push_back(std::move(status));
  }
  const fs::path csv = out_dir / "features.csv";
  table.write_csv(csv);
  update_manifest(cfg, "features", result, {csv});
  return result;
}

std::string dose_response_svg(const DoseResponse& dr, const std::optional<HillFit>& fit, const std::string& feature) {
  constexpr double W = 480;
  constexpr double H = 320;
  constexpr double L = 60;
  constexpr double R = 20;
  constexpr double T = 30;
  constexpr double B = 50;
  double x_lo = 0.0;
  double x_hi = 1.0;
  double y_lo = 0.0;
  double y_hi = 1.0;
  if (!dr.points.empty()) {
    x_lo = std::log10(dr.points.front().concentration) - 0.5;
    x_hi = std::log10(dr.points.back().concentration) + 0.5;
    y_lo = y_hi = dr.points.front().response;
    for (const auto& p : dr.points) {
      y_lo = std::min(y_lo, p.response);
      y_hi = std::max(y_hi, p.response);
    }
  }
  if (fit) {
    y_lo = std::min({y_lo, fit->s0, fit->s_inf});
    y_hi = std::max({y_hi, fit->s0, fit->s_inf});
  }
  const double pad = (y_hi - y_lo) * 0.1 + 1e-9;
  y_lo -= pad;
  y_hi += pad;
  auto px = [&](double lx) { return L + (lx - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n",
      W, H, W, H);
  svg += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", W, H);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{} ({})</text>\n", L,
                     dr.compound_id, feature);
  svg += fmt::format(
      "<path d=\"M{:.2f},{:.2f} L{:.2f},{:.2f} L{:.2f},{:.2f}\" fill=\"none\" stroke=\"black\"/>\n", L, T, L, H - B,
      W - R, H - B);
  for (int d = static_cast<int>(std::ceil(x_lo)); d <= static_cast<int>(std::floor(x_hi)); ++d) {
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"middle\">1e{}</text>\n",
        px(d), H - B + 14, d);
  }
  svg += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
      "text-anchor=\"middle\">concentration [M]</text>\n",
      (L + W - R) / 2, H - 12);
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4;
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"end\">{:.3g}</text>\n",
        L - 4, py(y) + 3, y);
  }
  if (fit) {
    std::string d;
    for (int i = 0; i <= 200; ++i) {
      const double lx = x_lo + (x_hi - x_lo) * i / 200;
      d += fmt::format("{}{:.2f},{:.2f}", i ? " L" : "M", px(lx), py(hill_value(*fit, std::pow(10.0, lx))));
    }
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n", d);
    const double le = std::log10(fit->ec50);
    if (le >= x_lo && le <= x_hi) {
      svg += fmt::format(
          "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#d62728\" "
          "stroke-dasharray=\"4 3\"/>\n",
          px(le), T, px(le), H - B);
      svg += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#d62728\">"
          "EC50 {:.3e} M</text>\n",
          px(le) + 4, T + 12, fit->ec50);
    }
  }
  for (const auto& p : dr.points) {
    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"black\"/>\n",
                       px(std::log10(p.concentration)), py(p.response));
  }
  svg += "</svg>\n";
  return svg;
}

CommandResult cmd_hitval(const RunConfig& cfg, std::ostream& log) {
  const auto layout = load_layout(cfg);
  if (!layout) throw Error(ErrorCode::ConfigError, "hitval needs input.plate_layout");
  const fs::path out_dir = cfg.output_dir();
  const fs::path hit_dir = out_dir / "hitval";
  fs::create_directories(hit_dir);
  const FeatureTable table = FeatureTable::read_csv(out_dir / "features.csv");

  CommandResult result;
  std::vector<fs::path> artifacts;
  const BestFeature best = best_feature_by_zprime(table, *layout, cfg.z_prime_denominator);
  {
    std::string csv = "feature,z_prime,best\n";
    for (const auto& s : best.scores) csv += fmt::format("{},{},{}\n", s.feature, s.z_prime, s.feature == best.feature);
    artifacts.push_back(hit_dir / "zprime.csv");
    write_text(artifacts.back(), csv);
  }
  if (best.feature.empty()) {
    result.notes.push_back("no feature has a defined Z' (controls missing or degenerate)");
  } else {
    log << fmt::format("best feature by Z': {} ({:.4f})\n", best.feature, best.z_prime);
  }

  const std::string feature = cfg.response_feature == "best" ? best.feature : cfg.response_feature;
  std::map<std::string, double> wells;
  if (feature == kLdaCompositeName) {
    try {
      wells = lda_weighted_feature(table, *layout).well_scores;
    } catch (const Error& e) {
      result.notes.push_back(std::string("LDA composite unavailable: ") + e.what());
    }
  } else if (!feature.empty()) {
    wells = well_means(table, FeatureRef::parse(feature));
  }

  std::string csv = "compound_id,feature,status,ec50_molar,s0,s_inf,hill,residual_sse,converged,points\n";
  for (const auto& compound : layout->compounds()) {
    const DoseResponse dr = build_dose_response(wells, *layout, compound);
    std::optional<HillFit> fit;
    std::string status = "ok";
    try {
      fit = fit_hill(dr);
      if (!fit->converged) status = "not_converged";
    } catch (const Error& e) {
      status = std::string(to_string(e.code()));
    }
    if (fit) {
      csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", compound, feature, status, fit->ec50, fit->s0,
                         fit->s_inf, fit->n, fit->residual_sse, fit->converged, dr.points.size());
      log << fmt::format("{}: EC50 {:.4e} M ({})\n", compound, fit->ec50, status);
    } else {
      csv += fmt::format("{},{},{},,,,,,false,{}\n", compound, feature, status, dr.points.size());
      log << fmt::format("{}: {}\n", compound, status);
    }
    std::string safe = compound;
    std::replace_if(safe.begin(), safe.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_'; }, '_');
    artifacts.push_back(hit_dir / (safe + ".svg"));
    write_text(artifacts.back(), dose_response_svg(dr, fit, feature));
  }
  artifacts.push_back(hit_dir / "ec50.csv");
  write_text(artifacts.back(), csv);
  update_manifest(cfg, "hitval", result, artifacts);
  return result;
}

CommandResult cmd_eval(const RunConfig& cfg, std::ostream& log) {
  if (cfg.ground_truth.empty()) throw Error(ErrorCode::ConfigError, "eval needs input.ground_truth");
  const auto paths = list_images(cfg);
  const fs::path out_dir = cfg.output_dir();
  CommandResult result;
  std::vector<InstanceLabelMap> pred;
  std::vector<InstanceLabelMap> gt;
  std::vector<std::string> ids;
  for (const auto& path : paths) {
    ImageStatus status{image_id_of(path), true, ""};
    std::string gt_path = cfg.ground_truth;
    gt_path.replace(gt_path.find("{image_id}"), 10, status.image_id);
    try {
      InstanceLabelMap p{io::load_labels(out_dir / "segmentation" / (status.image_id + "_cells.png"))};
      InstanceLabelMap g{io::load_labels(cfg.resolve(gt_path))};
      if (p.size() != g.size()) throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");
      pred.push_back(std::move(p));
      gt.push_back(std::move(g));
      ids.push_back(status.image_id);
    } catch (const std::exception& e) {
      status.ok = false;
      status.error = e.what();
      log << fmt::format("{}: not evaluated ({})\n", status.image_id, status.error);
    }
    result.images.push_back(std::move(status));
  }
  const EvalReport report = evaluate_dataset(pred, gt, cfg.eval_mode, ids);
  std::ostringstream csv;
  report.write_csv(csv);
  const std::vector<fs::path> artifacts = {out_dir / "eval.csv", out_dir / "eval_summary.txt"};
  write_text(artifacts[0], csv.str());
  write_text(artifacts[1], report.summary());
  log << report.summary();
  update_manifest(cfg, "eval", result, artifacts);
  return result;
}

}  // namespace subcellsam
