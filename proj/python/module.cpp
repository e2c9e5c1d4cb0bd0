// Copyright 2026 The bevbeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bevbeam/config.hpp"
#include "bevbeam/data.hpp"
#include "bevbeam/errors.hpp"
#include "bevbeam/metrics.hpp"
#include "bevbeam/training.hpp"

namespace py = pybind11;
using namespace bevbeam;

namespace {

template <class T>
py::array_t<T> to_numpy(const Array<T>& a) {
  std::vector<py::ssize_t> shape(a.shape.begin(), a.shape.end());
  py::array_t<T> out(shape);
  std::copy(a.data.begin(), a.data.end(), out.mutable_data());
  return out;
}

template <class T>
Array<T> from_numpy(const py::array& in) {
  auto x = py::array_t<T, py::array::c_style | py::array::forcecast>::ensure(in);
  if (!x) throw ContractError("expected an array convertible to the requested dtype");
  Shape shape(x.shape(), x.shape() + x.ndim());
  return Array<T>(shape, std::vector<T>(x.data(), x.data() + x.size()));
}

DbaConfig dba_cfg(std::size_t k, double delta) {
  DbaConfig c{k, delta};
  c.validate();
  return c;
}

RunConfig run_config(const py::dict& overrides) {
  RunConfig cfg;
  for (auto [k, v] : overrides) {
    std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false")
                                                     : py::str(v).cast<std::string>();
    cfg.set(k.cast<std::string>(), value);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multimodal BEV beam prediction: metrics, data and model utilities";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<ContractError>(m, "ContractError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<MismatchError>(m, "MismatchError", base);

  m.def(
      "dba_score",
      [](const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
         std::size_t k, double delta) { return dba_score(predictions, labels, dba_cfg(k, delta)); },
      py::arg("predictions"), py::arg("labels"), py::arg("k") = 3, py::arg("delta") = 5.0);
  m.def(
      "dba_curve",
      [](const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
         std::size_t k, double delta) { return dba_curve(predictions, labels, dba_cfg(k, delta)); },
      py::arg("predictions"), py::arg("labels"), py::arg("k") = 3, py::arg("delta") = 5.0);
  m.def("topk_accuracy", &topk_accuracy, py::arg("predictions"), py::arg("labels"), py::arg("k"));
  m.def(
      "random_baseline_dba",
      [](const std::vector<std::size_t>& labels, std::size_t beams, std::size_t k, double delta) {
        return random_baseline_dba(labels, beams, dba_cfg(k, delta));
      },
      py::arg("labels"), py::arg("beams"), py::arg("k") = 3, py::arg("delta") = 5.0);
  m.def(
      "rank_beams",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probs,
         std::size_t k) {
        if (probs.ndim() != 1) throw DimensionError("rank_beams expects a 1-D array");
        return rank_beams(probs.data(), static_cast<std::size_t>(probs.size()), k);
      },
      py::arg("probs"), py::arg("k") = 3);
  m.def(
      "confusion_matrix",
      [](const std::vector<std::size_t>& top1, const std::vector<std::size_t>& labels,
         std::size_t beams) {
        auto c = confusion_matrix(top1, labels, beams);
        py::array_t<std::size_t> out({beams, beams});
        std::copy(c.counts.begin(), c.counts.end(), out.mutable_data());
        return out;
      },
      py::arg("top1"), py::arg("labels"), py::arg("beams"));

  m.def(
      "focal_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
         const std::vector<std::size_t>& labels, double gamma, std::vector<double> alpha) {
        FocalLossConfig cfg;
        cfg.gamma = gamma;
        cfg.alpha = std::move(alpha);
        Tape<double> tape(false);
        return focal_loss(tape, constant(from_numpy<double>(probs)), labels, cfg).value()[0];
      },
      py::arg("probs"), py::arg("labels"), py::arg("gamma") = 2.0,
      py::arg("alpha") = std::vector<double>{});
  m.def("class_weights", &class_weights, py::arg("labels"), py::arg("beams"));

  m.def(
      "oracle_beam",
      [](double dx, double dy, std::size_t beams, double fov_deg) {
        CodebookSpec cb{beams, fov_deg};
        cb.validate();
        auto r = oracle_beam(GpsReading{dx, dy}, cb);
        return py::make_tuple(r.beam, r.flagged);
      },
      py::arg("dx"), py::arg("dy"), py::arg("beams") = 64, py::arg("fov_deg") = 90.0);

  m.def(
      "load_tensor",
      [](const std::filesystem::path& path) -> py::object {
        switch (peek_dtype(path)) {
          case DType::f32: return to_numpy(load_tensor<float>(path));
          case DType::f64: return to_numpy(load_tensor<double>(path));
          case DType::u8: return to_numpy(load_tensor<std::uint8_t>(path));
          case DType::c64: return to_numpy(load_tensor<complex64>(path));
        }
        throw FormatError(path.string() + ": unknown dtype");
      },
      py::arg("path"));
  m.def(
      "save_tensor",
      [](const std::filesystem::path& path, const py::array& x) {
        const auto kind = x.dtype();
        if (kind.is(py::dtype::of<float>())) {
          save_tensor(path, from_numpy<float>(x));
        } else if (kind.is(py::dtype::of<double>())) {
          save_tensor(path, from_numpy<double>(x));
        } else if (kind.is(py::dtype::of<std::uint8_t>())) {
          save_tensor(path, from_numpy<std::uint8_t>(x));
        } else if (kind.is(py::dtype::of<complex64>())) {
          save_tensor(path, from_numpy<complex64>(x));
        } else {
          throw ContractError("save_tensor: unsupported dtype " + py::repr(kind).cast<std::string>());
        }
      },
      py::arg("path"), py::arg("array"));

  m.def(
      "generate",
      [](const std::filesystem::path& root, const py::dict& overrides) {
        auto ds = generate_synthetic(run_config(overrides).synthetic_config(), root);
        return ds.size();
      },
      py::arg("root"), py::arg("overrides") = py::dict(),
      "Writes a synthetic dataset; overrides are run-config keys (sequences, beams, seed, ...).");
  m.def(
      "load_index",
      [](const std::filesystem::path& root) {
        py::list rows;
        const Dataset ds = load_dataset(root);
        for (const auto& e : ds.entries()) {
          py::dict d;
          d["seq_id"] = e.seq_id;
          d["scenario_id"] = e.scenario_id;
          d["label"] = e.label;
          d["dir"] = e.dir;
          rows.append(d);
        }
        return rows;
      },
      py::arg("root"));
  m.def(
      "split_indices",
      [](const std::filesystem::path& root, std::array<double, 3> ratios, std::uint64_t seed) {
        auto s = split_dataset(load_dataset(root), ratios, seed);
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("root"), py::arg("ratios") = std::array<double, 3>{0.8, 0.1, 0.1},
      py::arg("seed") = 0);
  m.def("config_keys", [] {
    py::dict out;
    for (const auto& k : config_keys()) out[py::str(k.key)] = k.default_value;
    return out;
  });
}
