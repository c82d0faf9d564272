// Python bindings for the numeric building blocks.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emoedit/config.hpp"
#include "emoedit/error.hpp"
#include "emoedit/metrics.hpp"
#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/temporal.hpp"

namespace py = pybind11;
using namespace emoedit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("image arrays are H x W or H x W x C");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(w, h, c);
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

FloatArray from_image(const Image& img) {
  FloatArray a({img.height(), img.width(), img.channels()});
  std::copy(img.data().begin(), img.data().end(), a.mutable_data());
  return a;
}

std::vector<Eigen::VectorXd> rows_of(const Eigen::MatrixXd& m) {
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index t = 0; t < m.rows(); ++t) out.emplace_back(m.row(t).transpose());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "emoedit numeric core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ModelMismatch>(m, "ModelMismatch", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("emotion_names", &default_emotion_names, "Non-neutral emotion names in vector order.");
  m.def("hann_weights", [] { return kHannWeights3; });

  m.def(
      "smooth",
      [](const Eigen::MatrixXd& series, std::vector<double> weights, bool causal) {
        SmoothingOptions o{std::move(weights), causal};
        const auto out = smooth_series(rows_of(series), o);
        Eigen::MatrixXd r(series.rows(), series.cols());
        for (Eigen::Index t = 0; t < r.rows(); ++t) r.row(t) = out[static_cast<std::size_t>(t)].transpose();
        return r;
      },
      py::arg("series"), py::arg("weights") = kHannWeights3, py::arg("causal") = false,
      "Smooth a T x D series along T.");
  m.def(
      "total_variation", [](const Eigen::MatrixXd& series) { return total_variation(rows_of(series)); },
      py::arg("series"));

  m.def("coefficient_of_variation", &coefficient_of_variation, py::arg("values"));
  m.def(
      "lie",
      [](const std::vector<FloatArray>& images) {
        std::vector<Image> imgs;
        for (const auto& a : images) imgs.push_back(to_image(a));
        return lie_metric(imgs, pixel_l2);
      },
      py::arg("images"), "LIE of an image sequence under the pixel L2 distance.");
  m.def(
      "frechet_distance",
      [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double eps) {
        return frechet_distance({a, "array"}, {b, "array"}, eps);
      },
      py::arg("a"), py::arg("b"), py::arg("eps") = kFrechetEpsilon, "Rows are samples.");
  m.def(
      "identity_similarity",
      [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return identity_similarity({a, "array"}, {b, "array"});
      },
      py::arg("a"), py::arg("b"));

  m.def("estimate_homography", &estimate_homography, py::arg("src"), py::arg("dst"));
  m.def("apply_homography", &apply_homography, py::arg("h"), py::arg("points"));

  m.def(
      "load_png", [](const std::filesystem::path& p) { return from_image(load_png(p)); }, py::arg("path"),
      "H x W x C float32 array in [0, 1].");
  m.def(
      "save_png", [](const FloatArray& a, const std::filesystem::path& p) { save_png(to_image(a), p); },
      py::arg("image"), py::arg("path"));

  m.def(
      "default_config",
      [] {
        nlohmann::json j = ProjectConfig{};
        return j.dump();
      },
      "Default project configuration as a JSON string.");
  m.def(
      "load_config",
      [](const std::filesystem::path& p) {
        nlohmann::json j = load_project_config(p);
        return j.dump();
      },
      py::arg("path"), "Validated project configuration as a JSON string.");
}
