// Python extension: numpy in, numpy out. Raises subcellsam.Error on failure.

#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "subcellsam/pipeline.hpp"
#include "subcellsam/synthetic.hpp"

namespace py = pybind11;
using namespace subcellsam;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const BoolArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "mask must be 2-D");
  const Size s{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0))};
  std::vector<std::uint8_t> data(a.data(), a.data() + a.size());
  return BinaryMask(Raster<std::uint8_t>(s, std::move(data)));
}

template <typename T>
py::array_t<T> to_array(const Raster<T>& r) {
  py::array_t<T> out({r.height(), r.width()});
  std::copy(r.data().begin(), r.data().end(), out.mutable_data());
  return out;
}

ChannelRole parse_role(const std::string& s) {
  if (s == "nucleus") return ChannelRole::Nucleus;
  if (s == "cell_marker") return ChannelRole::CellMarker;
  if (s == "subcellular") return ChannelRole::SubcellularMarker;
  if (s == "other") return ChannelRole::Other;
  throw Error(ErrorCode::InvalidArgument, "unknown channel role '" + s + "'");
}

MultiChannelImage to_image(const FloatArray& a, const std::map<int, std::string>& roles) {
  if (a.ndim() != 3) throw Error(ErrorCode::InvalidArgument, "image must be (channels, height, width)");
  const Size s{static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1))};
  std::vector<Channel> channels;
  for (py::ssize_t c = 0; c < a.shape(0); ++c) {
    const float* p = a.data(c, 0, 0);
    channels.emplace_back(s, std::vector<float>(p, p + s.pixels()));
  }
  std::map<int, ChannelRole> parsed;
  for (const auto& [k, v] : roles) parsed[k] = parse_role(v);
  return MultiChannelImage(std::move(channels), std::move(parsed));
}

py::dict segment(const FloatArray& image, const std::map<int, std::string>& roles, std::uint64_t seed,
                 double coverage_fraction_min, const std::string& backend) {
  RunConfig cfg;
  cfg.backend = BackendSpec::parse(backend);
  const auto img = to_image(image, roles);
  SegmentParams params;
  params.sampling.rng_seed = seed;
  params.integration.coverage_fraction_min = coverage_fraction_min;
  ImageSegmentation seg;
  {
    py::gil_scoped_release release;
    seg = segment_image(img, make_backends(cfg), params);
  }
  py::dict out;
  out["nuclei"] = to_array(seg.nuclei_labels());
  out["cells"] = to_array(seg.instances.labels.raster);
  out["subcellular"] = to_array(seg.subcellular_labels());
  out["cell_ids"] = seg.instances.cell_ids;
  return out;
}

py::dict region_props_dict(const BoolArray& mask) {
  const auto f = region_props(to_mask(mask));
  py::dict d;
  d["area"] = f.area;
  d["perimeter"] = f.perimeter;
  d["equivalent_diameter"] = f.equivalent_diameter;
  d["eccentricity"] = f.eccentricity;
  d["solidity"] = f.solidity;
  d["extent"] = f.extent;
  d["aspect_ratio"] = f.aspect_ratio;
  d["circularity"] = f.circularity;
  d["major_axis"] = f.major_axis;
  d["minor_axis"] = f.minor_axis;
  return d;
}

py::dict fit_hill_dict(const std::vector<double>& concentrations, const std::vector<double>& responses) {
  if (concentrations.size() != responses.size()) {
    throw Error(ErrorCode::InvalidArgument, "concentrations and responses differ in length");
  }
  DoseResponse dr{"py", {}};
  for (std::size_t i = 0; i < responses.size(); ++i) dr.points.push_back({concentrations[i], responses[i], 1});
  const auto f = fit_hill(dr);
  py::dict d;
  d["s0"] = f.s0;
  d["s_inf"] = f.s_inf;
  d["ec50"] = f.ec50;
  d["n"] = f.n;
  d["residual_sse"] = f.residual_sse;
  d["converged"] = f.converged;
  return d;
}

py::dict graph_metadata(const std::filesystem::path& path) {
  const auto desc = load_backend(path);
  py::dict d;
  d["name"] = desc.name;
  d["native_grid"] = py::make_tuple(desc.native_grid.width, desc.native_grid.height);
  d["logits_threshold"] = desc.logits_threshold;
  d["opset"] = desc.opset;
  d["tensor_names"] = desc.tensor_names;
  return d;
}

std::string run_command(const std::string& command, const std::filesystem::path& config) {
  const auto cfg = RunConfig::load(config);
  std::ostringstream log;
  py::gil_scoped_release release;
  if (command == "segment") {
    cmd_segment(cfg, make_backends(cfg), log);
  } else if (command == "features") {
    cmd_features(cfg, log);
  } else if (command == "hitval") {
    cmd_hitval(cfg, log);
  } else if (command == "eval") {
    cmd_eval(cfg, log);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
  }
  return log.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Zero-shot (sub)cellular segmentation core";
  m.attr("__version__") = kVersion;

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("segment", &segment, py::arg("image"),
        py::arg("roles") = std::map<int, std::string>{{0, "nucleus"}, {1, "cell_marker"}}, py::arg("seed") = 0,
        py::arg("coverage_fraction_min") = 0.33, py::arg("backend") = "oracle",
        "Segment a (channels, height, width) float image in [0, 1]. Returns label maps.");
  m.def("dice", [](const BoolArray& a, const BoolArray& b) { return dice(to_mask(a), to_mask(b)); });
  m.def("iou", [](const BoolArray& a, const BoolArray& b) { return iou(to_mask(a), to_mask(b)); });
  m.def("region_props", &region_props_dict, py::arg("mask"));
  m.def(
      "z_prime",
      [](const std::vector<double>& neutral, const std::vector<double>& positive, bool conventional) {
        return z_prime(neutral, positive,
                       conventional ? ZPrimeDenominator::Conventional : ZPrimeDenominator::AsPrinted);
      },
      py::arg("neutral"), py::arg("positive"), py::arg("conventional") = false);
  m.def("fit_hill", &fit_hill_dict, py::arg("concentrations"), py::arg("responses"));
  m.def("graph_metadata", &graph_metadata, py::arg("path"));
  m.def("run", &run_command, py::arg("command"), py::arg("config"),
        "Run segment/features/hitval/eval for a YAML config; returns the log.");
  m.def(
      "write_synthetic_plate",
      [](const std::filesystem::path& dir, std::uint64_t seed) {
        SyntheticPlateOptions o;
        o.seed = seed;
        write_synthetic_plate(make_synthetic_plate(o), dir);
      },
      py::arg("directory"), py::arg("seed") = 7);
}
