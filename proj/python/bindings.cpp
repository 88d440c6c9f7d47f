#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <vector>

#include "hemocnn/checkpoint.hpp"
#include "hemocnn/data.hpp"
#include "hemocnn/errors.hpp"
#include "hemocnn/model.hpp"
#include "hemocnn/train.hpp"

namespace py = pybind11;
using namespace hemocnn;

namespace {

Shape shape_from_dims(const std::vector<std::size_t>& dims) {
  return Shape(dims);
}

Tensor<float> tensor_from_array(const py::array_t<float>& array) {
  const py::buffer_info info = py::array_t<float, py::array::c_style |
                                                      py::array::forcecast>(
                                   array)
                                   .request();
  std::vector<std::size_t> dims(info.shape.begin(), info.shape.end());
  std::vector<float> data(static_cast<std::size_t>(info.size));
  std::memcpy(data.data(), info.ptr, data.size() * sizeof(float));
  return Tensor<float>(Shape(dims), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  const auto dims = t.shape().dims();
  py::array_t<float> out(std::vector<py::ssize_t>(dims.begin(), dims.end()));
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(float));
  return out;
}

LabeledDataset dataset_from_arrays(const py::array_t<float>& images,
                                   const std::vector<std::size_t>& labels) {
  Tensor<float> batch = tensor_from_array(images);
  if (batch.shape().rank() != 4) {
    throw ShapeError("images must be [n,h,w,c], got " + batch.shape().str());
  }
  const std::size_t n = batch.shape()[0];
  if (labels.size() != n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " images");
  }
  const Shape per_sample{batch.shape()[1], batch.shape()[2], batch.shape()[3]};
  const std::size_t elems = per_sample.element_count();

  LabeledDataset out;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1) {
      throw DataError("labels must be 0 or 1");
    }
    std::vector<float> pixels(batch.data() + i * elems,
                              batch.data() + (i + 1) * elems);
    out.samples[i] = {Tensor<float>(per_sample, std::move(pixels)), labels[i],
                      "array[" + std::to_string(i) + "]"};
  }
  return out;
}

py::dict record_to_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["train_loss"] = r.train_loss;
  d["train_acc"] = r.train_acc;
  d["val_loss"] = r.val_loss;
  d["val_acc"] = r.val_acc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "blood cell CNN core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  py::class_<SequentialModel<float>>(m, "Model")
      .def_static(
          "build",
          [](const std::vector<std::size_t>& input_shape, std::uint64_t seed) {
            return build_bloodcell_model<float>(shape_from_dims(input_shape),
                                                seed);
          },
          py::arg("input_shape") = std::vector<std::size_t>{120, 160, 3},
          py::arg("seed") = 42,
          "Full classification stack (201922 parameters at the default "
          "input)")
      .def_static(
          "compact",
          [](const std::vector<std::size_t>& input_shape, std::uint64_t seed) {
            return build_compact_model<float>(shape_from_dims(input_shape),
                                              seed);
          },
          py::arg("input_shape") = std::vector<std::size_t>{12, 16, 3},
          py::arg("seed") = 42, "Small stack with the same layer vocabulary")
      .def_static(
          "load",
          [](const std::string& path) { return load_model(path); },
          py::arg("path"))
      .def("save",
           [](SequentialModel<float>& self, const std::string& path) {
             save_model(self, path);
           },
           py::arg("path"))
      .def("summary", &SequentialModel<float>::summary)
      .def_property_readonly("total_params",
                             &SequentialModel<float>::total_params)
      .def_property_readonly("seed", &SequentialModel<float>::seed)
      .def_property_readonly(
          "input_shape",
          [](const SequentialModel<float>& self) {
            return self.input_shape().dims();
          })
      .def(
          "predict",
          [](SequentialModel<float>& self, const py::array_t<float>& batch) {
            return array_from_tensor(self.predict(tensor_from_array(batch)));
          },
          py::arg("batch"), "Inference on a [n,h,w,c] batch; returns [n,2]")
      .def(
          "fit",
          [](SequentialModel<float>& self, const py::array_t<float>& images,
             const std::vector<std::size_t>& labels, std::size_t epochs,
             std::size_t batch_size, std::uint64_t seed, double lr,
             double val_fraction) {
            TrainConfig config;
            config.epochs = epochs;
            config.batch_size = batch_size;
            config.seed = seed;
            config.optimizer.learning_rate = lr;
            config.validation_fraction = val_fraction;

            const LabeledDataset all = dataset_from_arrays(images, labels);
            auto [train_set, val_set] =
                split_stratified(all, val_fraction, seed);
            std::vector<py::dict> out;
            for (const auto& r : fit(self, train_set, val_set, config)) {
              out.push_back(record_to_dict(r));
            }
            return out;
          },
          py::arg("images"), py::arg("labels"), py::arg("epochs") = 20,
          py::arg("batch_size") = 32, py::arg("seed") = 42,
          py::arg("lr") = 0.001, py::arg("val_fraction") = 0.0,
          "Train on in-memory arrays; returns one dict per epoch");

  m.def(
      "decode_ppm",
      [](const py::bytes& blob) {
        const std::string buf = blob;
        const std::vector<std::uint8_t> bytes(buf.begin(), buf.end());
        return array_from_tensor(decode_ppm(bytes));
      },
      py::arg("data"), "Decode a binary P6 PPM into a [h,w,3] array");

  m.def(
      "resize_bilinear",
      [](const py::array_t<float>& image, std::size_t height,
         std::size_t width) {
        return array_from_tensor(
            resize_bilinear(tensor_from_array(image), height, width));
      },
      py::arg("image"), py::arg("height"), py::arg("width"));
}
