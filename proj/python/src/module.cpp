#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hippo/cli.hpp"
#include "hippo/imaging.hpp"
#include "hippo/io_util.hpp"
#include "hippo/longitudinal.hpp"
#include "hippo/metrics.hpp"
#include "hippo/models.hpp"
#include "hippo/postprocess.hpp"
#include "hippo/synthetic.hpp"

namespace py = pybind11;
using namespace hippo;

namespace {

// Volumes are exposed as Fortran-ordered arrays so that arr[i, j, k] is voxel (i, j, k).
template <typename T>
py::array_t<T, py::array::f_style> to_numpy(const imaging::Volume<T>& v) {
  const auto& s = v.shape();
  py::array_t<T, py::array::f_style> out({s[0], s[1], s[2]});
  std::copy(v.values().begin(), v.values().end(), out.mutable_data());
  return out;
}

template <typename T>
imaging::Volume<T> from_numpy(const py::array_t<T, py::array::f_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D array");
  imaging::Volume<T> v({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                        static_cast<std::size_t>(a.shape(2))});
  std::copy(a.data(), a.data() + a.size(), v.values().begin());
  return v;
}

std::vector<std::uint8_t> flat_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

imaging::BinaryMask3D make_mask(const py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>& a,
                                const imaging::Spacing& spacing) {
  imaging::BinaryMask3D m;
  m.data = from_numpy<std::uint8_t>(a);
  m.spacing = spacing;
  m.validate();
  return m;
}

py::dict timeline_dict(const longitudinal::TimelineAnalysis& t) {
  py::dict d;
  d["slope"] = t.slope;
  d["intercept"] = t.intercept;
  d["rms_error"] = t.rms_error;
  d["percent_annual_change"] = t.percent_annual_change;
  d["slope_ml_per_year"] = t.slope_ml_per_year();
  d["n_points"] = t.n_points;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hippocampus segmentation and longitudinal volumetry";

  py::register_exception<io::InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<imaging::NiftiError>(m, "NiftiError", PyExc_ValueError);

  m.def(
      "dice_score",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
        if (a.size() != b.size()) throw std::invalid_argument("masks differ in size");
        return metrics::dice_score(flat_mask(a), flat_mask(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "iou_score",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
        if (a.size() != b.size()) throw std::invalid_argument("masks differ in size");
        return metrics::iou_score(flat_mask(a), flat_mask(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "soft_dice_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& target, double smooth) {
        if (probs.size() != target.size()) throw std::invalid_argument("arrays differ in size");
        return metrics::soft_dice_loss<double>({probs.data(), static_cast<std::size_t>(probs.size())},
                                               {target.data(), static_cast<std::size_t>(target.size())}, smooth);
      },
      py::arg("probs"), py::arg("target"), py::arg("smooth") = 1e-6);

  m.def(
      "fit_timeline",
      [](const std::vector<double>& times, const std::vector<double>& volumes) {
        if (times.size() != volumes.size()) throw std::invalid_argument("times and volumes differ in length");
        std::vector<longitudinal::TimePointVolume> pts;
        for (std::size_t i = 0; i < times.size(); ++i) pts.push_back({"py", times[i], volumes[i]});
        return timeline_dict(longitudinal::fit_timeline(pts));
      },
      py::arg("times"), py::arg("volumes"), "Least-squares volume trajectory (mm^3 per year).");

  m.def(
      "compute_volume",
      [](const py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>& mask,
         const imaging::Spacing& spacing) { return longitudinal::compute_volume(make_mask(mask, spacing)); },
      py::arg("mask"), py::arg("spacing") = imaging::Spacing{1.0, 1.0, 1.0});
  m.def(
      "continuity_metric",
      [](const py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>& mask, const std::string& axis) {
        return postprocess::continuity_metric(make_mask(mask, {1.0, 1.0, 1.0}), imaging::parse_axis(axis));
      },
      py::arg("mask"), py::arg("axis") = "sagittal");

  m.def(
      "load_volume",
      [](const std::filesystem::path& path) {
        const auto g = imaging::load_volume(path);
        return py::make_tuple(to_numpy(g.data), py::make_tuple(g.spacing[0], g.spacing[1], g.spacing[2]));
      },
      py::arg("path"), "Returns (float32 array indexed [i, j, k], spacing).");
  m.def(
      "save_mask",
      [](const std::filesystem::path& path,
         const py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>& mask,
         const imaging::Spacing& spacing) { imaging::save_volume(make_mask(mask, spacing), path); },
      py::arg("path"), py::arg("mask"), py::arg("spacing") = imaging::Spacing{1.0, 1.0, 1.0});

  m.def(
      "generate_phantom",
      [](int n_timepoints, double annual_shrink_fraction, std::uint64_t seed) {
        synthetic::PhantomSpec spec;
        spec.n_timepoints = n_timepoints;
        spec.annual_shrink_fraction = annual_shrink_fraction;
        spec.seed = seed;
        py::list out;
        for (const auto& s : synthetic::generate_phantom_subject(spec)) {
          out.append(py::make_tuple(s.timepoint_years, to_numpy(s.image.data), to_numpy(s.label.data)));
        }
        return out;
      },
      py::arg("n_timepoints") = 3, py::arg("annual_shrink_fraction") = 0.03, py::arg("seed") = 0,
      "List of (timepoint_years, image, label) for one phantom subject.");

  m.def(
      "parameter_count",
      [](const std::string& variant, int depth, int base_channels, bool deep_supervision) {
        models::ModelConfig c;
        c.variant = models::parse_variant(variant);
        c.depth = depth;
        c.base_channels = base_channels;
        c.deep_supervision = deep_supervision;
        return models::build_model(c, 0).parameter_count();
      },
      py::arg("variant"), py::arg("depth") = 4, py::arg("base_channels") = 8, py::arg("deep_supervision") = false);

  m.def("default_config_json", [] { return cli::default_config_json().dump(); });
  m.def(
      "resolved_config_json",
      [](std::optional<std::filesystem::path> config, const std::vector<std::string>& overrides) {
        return cli::to_json(cli::load_run_config(config, overrides)).dump();
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run",
      [](const std::string& command, std::optional<std::filesystem::path> config,
         const std::vector<std::string>& overrides) {
        const auto cfg = cli::load_run_config(config, overrides);
        py::gil_scoped_release release;
        if (command == "phantom") cli::cmd_phantom(cfg);
        else if (command == "build-data") cli::cmd_build_data(cfg);
        else if (command == "train") cli::cmd_train(cfg);
        else if (command == "predict") cli::cmd_predict(cfg, {});
        else if (command == "evaluate") cli::cmd_evaluate(cfg, {});
        else if (command == "analyze") cli::cmd_analyze(cfg, {});
        else throw std::invalid_argument("unknown command '" + command + "'");
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Runs one pipeline stage with default options.");
}
