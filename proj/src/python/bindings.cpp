#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "gapfill/corruption.hpp"
#include "gapfill/errors.hpp"
#include "gapfill/evaluation.hpp"
#include "gapfill/models.hpp"
#include "gapfill/preprocess.hpp"
#include "gapfill/rng.hpp"
#include "gapfill/synth.hpp"
#include "gapfill/training.hpp"

namespace py = pybind11;
using namespace gapfill;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != static_cast<py::ssize_t>(kBinsPerDay)) {
    throw ShapeError("expected an array of shape [n, 48]");
  }
  const auto n = static_cast<std::size_t>(a.shape(0));
  return Tensor({n, kBinsPerDay}, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.shape()[0], t.shape()[1]});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

// Rows get synthetic keys (one room, consecutive days) so that a plain
// array can travel through the day-matrix API.
DayMatrix to_days(const Array& a) {
  Tensor values = to_tensor(a);
  std::vector<DayKey> keys;
  for (std::size_t i = 0; i < values.shape()[0]; ++i) keys.push_back({"room", static_cast<std::int64_t>(i)});
  return DayMatrix::from_values(std::move(keys), std::move(values));
}

Array day_array(const DayVector& day) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(kBinsPerDay)});
  std::copy(day.begin(), day.end(), out.mutable_data());
  return out;
}

std::vector<double> day_vector(const Array& a) {
  if (a.ndim() != 1 || a.shape(0) != static_cast<py::ssize_t>(kBinsPerDay)) {
    throw ShapeError("expected a day of 48 values");
  }
  return {a.data(), a.data() + kBinsPerDay};
}

py::dict report_dict(const EvaluationReport& report) {
  py::list rows;
  for (const auto& r : report.rows) {
    py::dict row;
    row["method"] = r.method;
    row["cr"] = r.cr;
    row["horizon_h"] = r.horizon_h;
    row["rmse"] = r.rmse;
    row["nrmse"] = r.nrmse;
    row["sat"] = r.sat;
    row["average"] = r.average;
    rows.append(row);
  }
  py::dict out;
  out["variable"] = to_string(report.variable);
  out["iqr"] = report.iqr;
  out["rows"] = rows;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Denoising-autoencoder gap reconstruction for indoor-climate day matrices";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<MismatchError>(m, "MismatchError", PyExc_ValueError);
  auto format_error = py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  // Registered after FormatError so that it is matched first.
  py::register_exception<ChecksumError>(m, "ChecksumError", format_error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.attr("BINS_PER_DAY") = kBinsPerDay;

  m.def("synthetic_day_matrix",
        [](const std::string& variable, std::size_t days, std::size_t rooms, std::uint64_t seed) {
          const Variable v = parse_variable(variable);
          auto cfg = SynthConfig::defaults(v);
          cfg.days = days;
          cfg.rooms = rooms;
          cfg.seed = seed;
          return to_array(preprocess(generate(cfg), v, CleaningMethod::theoretical).matrix.values());
        },
        py::arg("variable"), py::arg("days") = 100, py::arg("rooms") = 4, py::arg("seed") = 0,
        "Generate synthetic room series and preprocess them into a [n, 48] day matrix.");

  m.def("split",
        [](const Array& days) {
          const auto s = split(to_days(days));
          return py::make_tuple(to_array(s.train.values()), to_array(s.validation.values()),
                                to_array(s.evaluation.values()));
        },
        py::arg("days"), "Chronological 30/10/60 split into (train, validation, evaluation).");

  m.def("fit_normalizer",
        [](const Array& train) {
          const auto nz = fit_normalizer(to_days(train));
          return py::make_tuple(nz.mean, nz.stddev);
        },
        py::arg("train"), "Mean and population standard deviation over every training cell.");

  m.def("mask_length", &mask_length, py::arg("cr"));
  m.def("corrupt",
        [](const Array& day, double cr, std::uint64_t seed, const std::string& mode) {
          const auto md = corrupt(day_vector(day), {parse_corruption_mode(mode), cr, seed});
          py::array_t<bool> mask(std::vector<py::ssize_t>{static_cast<py::ssize_t>(kBinsPerDay)});
          std::copy(md.mask.begin(), md.mask.end(), mask.mutable_data());
          return py::make_tuple(day_array(md.corrupted), mask);
        },
        py::arg("day"), py::arg("cr"), py::arg("seed") = 0, py::arg("mode") = "reconstruction",
        "Zero one contiguous gap of round(cr * 48) bins; returns (corrupted, mask).");

  m.def("rmse", [](const std::vector<double>& a, const std::vector<double>& b) { return rmse(a, b); },
        py::arg("observed"), py::arg("inserted"));
  m.def("nrmse", &nrmse, py::arg("rmse"), py::arg("iqr"));
  m.def("sat", [](const std::vector<double>& values) { return sat(values); }, py::arg("reconstructions"));
  m.def("poly_interpolate",
        [](const Array& day, const std::vector<bool>& mask, int degree) {
          const auto values = day_vector(day);
          if (mask.size() != kBinsPerDay) throw ShapeError("mask must have 48 entries");
          MaskedDay md;
          std::copy(values.begin(), values.end(), md.original.begin());
          md.corrupted = md.original;
          for (std::size_t t = 0; t < kBinsPerDay; ++t) {
            md.mask[t] = mask[t];
            if (mask[t]) md.corrupted[t] = 0.0;
          }
          return day_array(poly_interpolate(md, degree));
        },
        py::arg("day"), py::arg("mask"), py::arg("degree"),
        "Least-squares polynomial through the observed bins, evaluated at the masked bins.");

  py::class_<Autoencoder>(m, "Autoencoder")
      .def(py::init([](const std::string& arch, std::size_t layers, std::size_t units, std::size_t kernel,
                       std::uint64_t seed) {
             Rng rng(seed);
             return Autoencoder::build(AutoencoderSpec::make(parse_architecture(arch), layers, units, kernel), rng);
           }),
           py::arg("arch") = "feed_forward", py::arg("layers") = 1, py::arg("units") = 32, py::arg("kernel") = 3,
           py::arg("seed") = 0)
      .def_property_readonly("architecture", [](const Autoencoder& a) { return to_string(a.spec().arch); })
      .def_property_readonly("parameter_count", &Autoencoder::parameter_count)
      .def_property(
          "normalizer", [](const Autoencoder& a) { return py::make_tuple(a.normalizer.mean, a.normalizer.stddev); },
          [](Autoencoder& a, std::pair<double, double> nz) { a.normalizer = {nz.first, nz.second}; })
      .def_property(
          "variable", [](const Autoencoder& a) { return to_string(a.variable); },
          [](Autoencoder& a, const std::string& v) { a.variable = parse_variable(v); })
      .def(
          "train",
          [](Autoencoder& a, const Array& train_days, const Array& val_days, std::size_t max_epochs,
             double learning_rate, const std::string& optimizer, std::size_t batch_size, std::size_t patience,
             double train_cr, std::uint64_t seed, bool random_gap_length) {
            TrainConfig cfg;
            cfg.max_epochs = max_epochs;
            cfg.learning_rate = learning_rate;
            cfg.optimizer = parse_optimizer(optimizer);
            cfg.batch_size = batch_size;
            cfg.patience = patience;
            cfg.train_cr = train_cr;
            cfg.seed = seed;
            cfg.random_gap_length = random_gap_length;
            const auto tr = to_days(train_days), va = to_days(val_days);
            const auto h = [&] {
              py::gil_scoped_release release;
              return train(a, tr, va, cfg);
            }();
            py::dict out;
            out["train_loss"] = h.train_loss;
            out["val_loss"] = h.val_loss;
            out["stopped_epoch"] = h.stopped_epoch;
            out["best_epoch"] = h.best_epoch;
            return out;
          },
          py::arg("train_days"), py::arg("val_days"), py::arg("max_epochs") = 200, py::arg("learning_rate") = 0.01,
          py::arg("optimizer") = "adam", py::arg("batch_size") = 128, py::arg("patience") = 10,
          py::arg("train_cr") = 0.5, py::arg("seed") = 0, py::arg("random_gap_length") = true,
          "Train on normalized [n, 48] arrays; returns the loss history.")
      .def(
          "reconstruct", [](const Autoencoder& a, const Array& x) { return to_array(a.reconstruct_batch(to_tensor(x))); },
          py::arg("corrupted"), "Reconstruct normalized corrupted days [n, 48].")
      .def(
          "evaluate",
          [](const Autoencoder& a, const Array& eval_days, const std::string& mode, std::vector<double> crs) {
            EvaluationOptions opt;
            if (!crs.empty()) opt.cr_grid = std::move(crs);
            const auto days = to_days(eval_days);
            const auto report = parse_corruption_mode(mode) == CorruptionMode::forecast
                                    ? evaluate_forecast(a, days, opt)
                                    : evaluate_reconstruction(a, days, opt);
            return report_dict(report);
          },
          py::arg("eval_days"), py::arg("mode") = "reconstruction", py::arg("crs") = std::vector<double>{},
          "RMSE/NRMSE/SAT per CR for the model and the polynomial baselines (eval days in original units).")
      .def("save", [](const Autoencoder& a, const std::string& path) { save_model(a, path); }, py::arg("path"))
      .def_static("load", [](const std::string& path) { return load_model(path); }, py::arg("path"));
}
