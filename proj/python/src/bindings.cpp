// SPDX-License-Identifier: Apache-2.0
// Thin pybind11 layer. Configs and reports cross as JSON text (the Python
// package turns them into dicts); images cross as float32 (H, W, C) arrays.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "aple/archive.hpp"
#include "aple/audit.hpp"
#include "aple/config.hpp"
#include "aple/dataset.hpp"
#include "aple/error.hpp"
#include "aple/eval.hpp"
#include "aple/image.hpp"
#include "aple/image_adapter.hpp"
#include "aple/pipeline.hpp"

namespace py = pybind11;
using namespace aple;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageGrid to_grid(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("image must be (H, W) or (H, W, C)");
  const std::size_t h = a.shape(0), w = a.shape(1), c = a.ndim() == 3 ? a.shape(2) : 1;
  ImageGrid img = ImageGrid::zeros(h, w, c);
  const float* src = a.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) img.at(k, y, x) = src[(y * w + x) * c + k];
  return img;
}

py::array_t<float> from_grid(const ImageGrid& img) {
  py::array_t<float> out({img.height, img.width, img.channels});
  float* dst = out.mutable_data();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t k = 0; k < img.channels; ++k)
        dst[(y * img.width + x) * img.channels + k] = img.at(k, y, x);
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

AdapterConfig adapter_config(double sigma, double alpha, bool normalize_peak) {
  AdapterConfig c;
  c.sigma = sigma;
  c.alpha = alpha;
  c.normalize_peak = normalize_peak;
  c.validate();
  return c;
}

py::dict grad_result(const GradCheckResult& r) {
  py::dict d;
  d["max_rel_error"] = r.max_rel_error;
  d["norm_rel_error"] = r.norm_rel_error;
  d["max_abs_error"] = r.max_abs_error;
  d["coordinates"] = r.coordinates;
  d["worst_analytic"] = r.worst_analytic;
  d["worst_numeric"] = r.worst_numeric;
  return d;
}

}  // namespace

PYBIND11_MODULE(_aple, m) {
  m.doc() = "Native core of the aple package";

  // Exception hierarchy mirrors the C++ one. Error derives from RuntimeError;
  // ConfigError and UsageError are also ValueErrors.
  auto make = [&m](const char* name, std::initializer_list<py::handle> bases) {
    py::tuple t(bases.size());
    std::size_t i = 0;
    for (py::handle b : bases) t[i++] = py::reinterpret_borrow<py::object>(b);
    const std::string qual = std::string("aple._aple.") + name;
    py::object type = py::reinterpret_steal<py::object>(PyErr_NewException(qual.c_str(), t.ptr(), nullptr));
    m.attr(name) = type;
    return type;
  };
  static py::object error = make("Error", {PyExc_RuntimeError});
  static py::object config_error = make("ConfigError", {error, PyExc_ValueError});
  static py::object usage_error = make("UsageError", {error, PyExc_ValueError});
  static py::object dimension_error = make("DimensionError", {error});
  static py::object numeric_error = make("NumericError", {error});
  static py::object io_error = make("IoError", {error});
  static py::object divergence_error = make("DivergenceError", {error});
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const UsageError& e) {
      PyErr_SetString(usage_error.ptr(), e.what());
    } catch (const DimensionError& e) {
      PyErr_SetString(dimension_error.ptr(), e.what());
    } catch (const NumericError& e) {
      PyErr_SetString(numeric_error.ptr(), e.what());
    } catch (const IoError& e) {
      PyErr_SetString(io_error.ptr(), e.what());
    } catch (const DivergenceError& e) {
      PyErr_SetString(divergence_error.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("default_config", [] { return ExperimentConfig{}.to_json().dump(); });
  m.def("validate_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
        py::arg("config_json"), "Parses and validates; returns the completed config.");
  m.def(
      "apply_overrides",
      [](const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides) {
        nlohmann::json j = nlohmann::json::parse(text.empty() ? "{}" : text);
        for (const auto& [k, v] : overrides) apply_override(j, k, v);
        return ExperimentConfig::from_json(j).to_json().dump();
      },
      py::arg("config_json"), py::arg("overrides"));

  m.def(
      "run",
      [](const std::string& text, bool write_files) {
        const ExperimentConfig cfg = parse_config(text);
        RunOptions opts;
        opts.write_files = write_files;
        py::gil_scoped_release release;
        return run_pipeline(cfg, opts).report.to_json().dump();
      },
      py::arg("config_json"), py::arg("write_files") = true);
  m.def(
      "sweep",
      [](const std::string& text, const std::string& axis, const std::vector<std::string>& values,
         bool write_files) {
        const ExperimentConfig cfg = parse_config(text);
        const SweepAxis ax = sweep_axis_from_string(axis);
        RunOptions opts;
        opts.write_files = write_files;
        py::gil_scoped_release release;
        return run_sweep(cfg, ax, values, opts).report.to_json().dump();
      },
      py::arg("config_json"), py::arg("axis"), py::arg("values"), py::arg("write_files") = true);
  m.def(
      "gen_data",
      [](const std::string& text, const std::filesystem::path& dir) {
        const Dataset ds = generate_dataset(parse_config(text).dataset);
        save_dataset(dir, ds);
        return std::to_string(ds.fingerprint());
      },
      py::arg("config_json"), py::arg("dir"));

  m.def("harmonic_mean", &harmonic_mean, py::arg("base"), py::arg("novel"));
  m.def(
      "aggregate",
      [](const std::vector<double>& v) {
        const Aggregate a = aggregate(v);
        return py::make_tuple(a.mean, a.std);
      },
      py::arg("values"), "Returns (mean, population std).");

  m.def(
      "adapt",
      [](const FloatArray& img, double sigma, double alpha, bool normalize_peak) {
        return from_grid(adapt(to_grid(img), adapter_config(sigma, alpha, normalize_peak)));
      },
      py::arg("image"), py::arg("sigma") = 0.05, py::arg("alpha") = 0.9, py::arg("normalize_peak") = true);
  m.def(
      "gaussian_gain",
      [](double u, double v, double sigma, bool normalize_peak) {
        return gaussian_gain_at(u, v, adapter_config(sigma, 0.0, normalize_peak));
      },
      py::arg("u"), py::arg("v"), py::arg("sigma") = 0.05, py::arg("normalize_peak") = true);
  m.def(
      "fft2",
      [](const FloatArray& img) {
        const ImageGrid g = to_grid(img);
        const Spectrum s = fft2(g);
        py::array_t<std::complex<double>> out({g.height, g.width, g.channels});
        auto* dst = out.mutable_data();
        for (std::size_t y = 0; y < g.height; ++y)
          for (std::size_t x = 0; x < g.width; ++x)
            for (std::size_t k = 0; k < g.channels; ++k) dst[(y * g.width + x) * g.channels + k] = s.at(k, y, x);
        return out;
      },
      py::arg("image"), "Unnormalized 2-D DFT of each channel; extents must be powers of two.");

  m.def("load_image", [](const std::filesystem::path& p) { return from_grid(load_image_f32(p)); });
  m.def("save_image", [](const std::filesystem::path& p, const FloatArray& img) { save_image_f32(p, to_grid(img)); });
  m.def("load_pnm", [](const std::filesystem::path& p) { return from_grid(load_pnm(p)); });

  m.def("load_archive", [](const std::filesystem::path& p) {
    py::dict out;
    for (const NamedTensor& e : load_archive(p)) {
      py::array_t<float> a(std::vector<py::ssize_t>(e.tensor.shape().begin(), e.tensor.shape().end()));
      std::memcpy(a.mutable_data(), e.tensor.data().data(), e.tensor.numel() * sizeof(float));
      out[py::str(e.name)] = a;
    }
    return out;
  });
  m.def("save_archive", [](const std::filesystem::path& p, const py::dict& tensors) {
    std::vector<NamedTensor> entries;
    for (const auto& [k, v] : tensors) {
      const FloatArray a = py::cast<FloatArray>(v);
      const Shape shape(a.shape(), a.shape() + a.ndim());
      entries.push_back({py::cast<std::string>(k), Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()))});
    }
    save_archive(p, entries);
  });

  m.def(
      "grad_check",
      [](float eps, std::size_t classes, std::uint64_t seed) {
        GradAuditConfig c;
        c.eps = eps;
        c.classes = classes;
        c.seed = seed;
        GradAudit a;
        {
          py::gil_scoped_release release;
          a = audit_stage1_gradients(c);
        }
        py::dict d;
        d["language"] = grad_result(a.language);
        d["vision"] = grad_result(a.vision);
        return d;
      },
      py::arg("eps") = 1e-3f, py::arg("classes") = 4, py::arg("seed") = 5);
  m.def("selftest", [] {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const CheckOutcome& c : run_selftest()) out.emplace_back(c.name, c.passed, c.detail);
    return out;
  });
}
