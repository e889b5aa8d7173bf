// Python bindings for the DecoKAN core: wavelet transforms, B-spline bases,
// model construction/forward, training, evaluation, and interpretation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "decokan/config.hpp"
#include "decokan/interpret.hpp"

namespace py = pybind11;
using namespace decokan;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& arr) {
  Shape shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape[static_cast<std::size_t>(i)] = arr.shape(i);
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor::from_vector(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

ModelConfig config_from_dict(const py::dict& d) {
  ModelConfig c;
  for (auto item : d) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "lookback") c.lookback = py::cast<Dim>(item.second);
    else if (key == "horizon") c.horizon = py::cast<Dim>(item.second);
    else if (key == "channels") c.channels = py::cast<Dim>(item.second);
    else if (key == "wavelet") c.wavelet = py::cast<std::string>(item.second);
    else if (key == "level") c.level = py::cast<Dim>(item.second);
    else if (key == "patch") c.patch = py::cast<Dim>(item.second);
    else if (key == "stride") c.stride = py::cast<Dim>(item.second);
    else if (key == "embed_dim") c.embed_dim = py::cast<Dim>(item.second);
    else if (key == "tfactor") c.tfactor = py::cast<Dim>(item.second);
    else if (key == "dfactor") c.dfactor = py::cast<Dim>(item.second);
    else if (key == "dropout") c.dropout = py::cast<double>(item.second);
    else if (key == "grid_size") c.grid_size = py::cast<Dim>(item.second);
    else if (key == "order") c.order = py::cast<Dim>(item.second);
    else if (key == "ablation")
      c.ablation = ablation_from_string(py::cast<std::string>(item.second));
    else
      throw config_error("unknown model config key '" + key + "'");
  }
  return c;
}

py::dict config_to_dict(const ModelConfig& c) {
  py::dict d;
  d["lookback"] = c.lookback;
  d["horizon"] = c.horizon;
  d["channels"] = c.channels;
  d["wavelet"] = c.wavelet;
  d["level"] = c.level;
  d["patch"] = c.patch;
  d["stride"] = c.stride;
  d["embed_dim"] = c.embed_dim;
  d["tfactor"] = c.tfactor;
  d["dfactor"] = c.dfactor;
  d["dropout"] = c.dropout;
  d["grid_size"] = c.grid_size;
  d["order"] = c.order;
  d["ablation"] = ablation_to_string(c.ablation);
  return d;
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw contract_error("split must be train|val|test, got '" + s + "'");
}

struct PyModel {
  DecoKanModel model;
};

struct PyDataset {
  TimeSeriesDataset ds;
};

}  // namespace

PYBIND11_MODULE(_decokan, m) {
  m.doc() = "Wavelet-decomposed Kolmogorov-Arnold forecaster (C++ core)";

  py::register_exception<decokan::error>(m, "DecokanError");

  m.def(
      "dwt",
      [](const py::array_t<double>& x, const std::string& wavelet, Dim level) {
        auto bank = WaveletFilterBank::make(wavelet);
        auto set = dwt_multilevel(tensor_from_array(x), bank, level);
        py::list out;
        out.append(array_from_tensor(set.approx));
        for (const auto& d : set.details) out.append(array_from_tensor(d));
        return out;
      },
      py::arg("x"), py::arg("wavelet") = "db4", py::arg("level") = 1,
      "Multi-level DWT of a (C, L) array -> [approx, detail_m, ..., detail_1]");

  m.def(
      "idwt",
      [](const py::list& coeffs, const std::string& wavelet, Dim target_len) {
        auto bank = WaveletFilterBank::make(wavelet);
        CoefficientSet set;
        set.level = static_cast<Dim>(coeffs.size()) - 1;
        set.approx = tensor_from_array(py::cast<py::array_t<double>>(coeffs[0]));
        for (std::size_t i = 1; i < coeffs.size(); ++i)
          set.details.push_back(
              tensor_from_array(py::cast<py::array_t<double>>(coeffs[i])));
        return array_from_tensor(idwt_multilevel(set, bank, target_len));
      },
      py::arg("coeffs"), py::arg("wavelet"), py::arg("target_len"),
      "Inverse multi-level DWT back to (C, target_len)");

  m.def(
      "coefficient_length",
      [](Dim n, const std::string& wavelet) {
        return coefficient_length(n, WaveletFilterBank::make(wavelet));
      },
      py::arg("n"), py::arg("wavelet") = "db4");

  m.def(
      "bspline_basis",
      [](const py::array_t<double>& x, Dim grid_size, Dim order) {
        return array_from_tensor(
            bspline_basis(tensor_from_array(x), SplineGrid::make(grid_size, order)));
      },
      py::arg("x"), py::arg("grid_size") = 5, py::arg("order") = 3,
      "B-spline basis values; output gains a trailing (grid_size + order) axis");

  m.def(
      "revin_norm",
      [](const py::array_t<double>& x) {
        auto [normed, state] = revin_norm(tensor_from_array(x), 1);
        return py::make_tuple(array_from_tensor(normed), state.mean, state.std);
      },
      py::arg("x"), "Per-channel normalization of an (L, C) array");

  m.def(
      "eval_formula",
      [](const std::string& formula, const py::array_t<double>& xs) {
        std::vector<double> x(xs.data(), xs.data() + xs.size());
        auto ys = eval_formula(formula, x);
        py::array_t<double> out(static_cast<py::ssize_t>(ys.size()));
        std::copy(ys.begin(), ys.end(), out.mutable_data());
        return out;
      },
      py::arg("formula"), py::arg("xs"));

  py::class_<PyDataset>(m, "Dataset")
      .def_static(
          "from_array",
          [](const py::array_t<double>& values, std::vector<std::string> names,
             Dim train, Dim val, Dim test) {
            return PyDataset{dataset_from_values(tensor_from_array(values),
                                                 std::move(names), train, val,
                                                 test)};
          },
          py::arg("values"), py::arg("names") = std::vector<std::string>{},
          py::arg("train"), py::arg("val"), py::arg("test"))
      .def_static(
          "from_csv",
          [](const std::string& path, double train, double val, double test) {
            auto ds = load_csv(path);
            apply_split_ratios(ds, train, val, test);
            return PyDataset{std::move(ds)};
          },
          py::arg("path"), py::arg("train") = 0.7, py::arg("val") = 0.1,
          py::arg("test") = 0.2)
      .def_property_readonly("rows", [](const PyDataset& d) { return d.ds.rows(); })
      .def_property_readonly("channels",
                             [](const PyDataset& d) { return d.ds.channels(); })
      .def_property_readonly(
          "names", [](const PyDataset& d) { return d.ds.channel_names; })
      .def_property_readonly("log", [](const PyDataset& d) { return d.ds.log; });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const py::dict& config, std::uint64_t seed) {
             return PyModel{build_model(config_from_dict(config), seed)};
           }),
           py::arg("config"), py::arg("seed") = 0)
      .def("forward",
           [](const PyModel& self, const py::array_t<double>& x) {
             EvalContext ctx;
             return array_from_tensor(forward(self.model, tensor_from_array(x), ctx));
           })
      .def("config",
           [](const PyModel& self) { return config_to_dict(self.model.config); })
      .def("parameter_count",
           [](const PyModel& self) { return parameter_count(self.model); })
      .def("save",
           [](const PyModel& self, const std::string& path) {
             save_checkpoint(self.model, path);
           })
      .def_static("load",
                  [](const std::string& path) {
                    return PyModel{load_checkpoint(path).model};
                  })
      .def("prune_stats",
           [](const PyModel& self, double tau) {
             auto mask = prune(self.model, tau, default_sample_grid());
             py::dict d;
             py::list branches;
             auto row = [](const BranchPruneStats& s) {
               py::dict b;
               b["branch"] = s.branch;
               b["total"] = s.total;
               b["pruned"] = s.pruned;
               b["preserved"] = s.preserved;
               b["ratio"] = s.ratio();
               return b;
             };
             for (const auto& s : mask.per_branch) branches.append(row(s));
             d["branches"] = branches;
             d["overall"] = row(mask.overall);
             return d;
           },
           py::arg("tau") = 0.05)
      .def("symbolify",
           [](const PyModel& self, double tau, Dim top_k) {
             const auto grid = default_sample_grid();
             auto mask = prune(self.model, tau, grid);
             auto fits =
                 symbolify(self.model, mask, CandidateLibrary::standard(), grid);
             py::list out;
             Dim taken = 0;
             for (const auto& f : fits) {
               if (taken++ >= top_k) break;
               py::dict d;
               d["branch"] = f.branch;
               d["mixer"] = f.mixer;
               d["stack"] = f.stack;
               d["layer_i"] = f.input_node;
               d["layer_j"] = f.output_node;
               d["family"] = f.family;
               d["formula"] = f.formula;
               d["r2"] = f.r2;
               out.append(d);
             }
             return out;
           },
           py::arg("tau") = 0.05, py::arg("top_k") = 10);

  m.def(
      "train",
      [](PyModel& model, const PyDataset& ds, double lr, Dim batch, Dim epochs,
         double gamma, Dim patience, std::uint64_t seed, bool verbose) {
        TrainOptions opts{lr, batch, epochs, gamma, patience, seed, verbose};
        const TrainReport report = train(model.model, ds.ds, opts);
        py::dict d;
        d["best_epoch"] = report.best_epoch;
        d["best_val_mse"] = report.best_val_mse;
        d["test_mse"] = report.test_mse;
        d["test_mae"] = report.test_mae;
        d["seed"] = report.seed;
        d["wall_seconds"] = report.wall_seconds;
        py::list curve;
        for (const auto& e : report.epochs)
          curve.append(py::make_tuple(e.epoch, e.train_loss, e.val_mse));
        d["epochs"] = curve;
        return d;
      },
      py::arg("model"), py::arg("dataset"), py::arg("lr") = 3e-4,
      py::arg("batch") = 8, py::arg("epochs") = 30, py::arg("gamma") = 1e-5,
      py::arg("patience") = 5, py::arg("seed") = 1, py::arg("verbose") = false);

  m.def(
      "evaluate",
      [](const PyModel& model, const PyDataset& ds, const std::string& split) {
        const Metrics metrics = evaluate(model.model, ds.ds, split_from_string(split));
        return py::make_tuple(metrics.mse, metrics.mae);
      },
      py::arg("model"), py::arg("dataset"), py::arg("split") = "test");

  m.def(
      "persistence_baseline",
      [](const PyDataset& ds, const std::string& split, Dim lookback, Dim horizon) {
        const Metrics metrics =
            persistence_baseline(ds.ds, split_from_string(split), lookback, horizon);
        return py::make_tuple(metrics.mse, metrics.mae);
      },
      py::arg("dataset"), py::arg("split"), py::arg("lookback"),
      py::arg("horizon"));
}
