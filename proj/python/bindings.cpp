#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "synloc/analysis.hpp"
#include "synloc/corpus.hpp"
#include "synloc/crosslingual.hpp"
#include "synloc/error.hpp"
#include "synloc/evaluator.hpp"
#include "synloc/localizer.hpp"

namespace py = pybind11;
using namespace synloc;

namespace {

py::dict unit_dict(const ScoredUnit& u) {
  py::dict d;
  d["site"] = to_string(u.unit.site);
  d["layer"] = u.unit.layer;
  d["channel"] = u.unit.channel;
  d["t"] = u.t;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Syntax-unit localization toolkit";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def(
      "welch_t",
      [](const std::vector<double>& a, const std::vector<double>& b) { return welch_t(a, b); },
      py::arg("a"), py::arg("b"), "Welch t of mean(a) - mean(b); None when undefined.");
  m.def("target_count", &target_count, py::arg("total"), py::arg("fraction"));
  m.def("expected_random_overlap", &expected_random_overlap, py::arg("total"), py::arg("k"), py::arg("folds"));
  m.def("random_overlap_stddev", &random_overlap_stddev, py::arg("total"), py::arg("k"), py::arg("folds"));
  m.def(
      "least_squares",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const LinearFit f = least_squares(x, y);
        return py::make_tuple(f.slope, f.intercept, f.r);
      },
      py::arg("x"), py::arg("y"), "Returns (slope, intercept, r).");
  m.def("pearson_r", &pearson_r, py::arg("x"), py::arg("y"));

  py::class_<MinimalPair>(m, "MinimalPair")
      .def_readonly("sentence_good", &MinimalPair::sentence_good)
      .def_readonly("sentence_bad", &MinimalPair::sentence_bad)
      .def_readonly("pair_id", &MinimalPair::pair_id);

  py::class_<Phenomenon>(m, "Phenomenon")
      .def_readonly("uid", &Phenomenon::uid)
      .def_readonly("category", &Phenomenon::category)
      .def_readonly("language", &Phenomenon::language)
      .def_readonly("pairs", &Phenomenon::pairs);

  py::class_<Benchmark>(m, "Benchmark")
      .def_readonly("name", &Benchmark::name)
      .def_readonly("phenomena", &Benchmark::phenomena)
      .def_readonly("content_hash", &Benchmark::content_hash)
      .def("phenomenon", &Benchmark::phenomenon, py::return_value_policy::reference_internal)
      .def("categories", &Benchmark::categories);

  m.def(
      "load_benchmark", [](const std::filesystem::path& dir) { return load_benchmark(dir); }, py::arg("path"));

  py::class_<LanguageModel>(m, "LanguageModel")
      .def_static("load", &LanguageModel::load, py::arg("weights"), py::arg("tokenizer_dir"))
      .def_property_readonly("hash", &LanguageModel::hash)
      .def_property_readonly("n_layers", [](const LanguageModel& lm) { return lm.config().n_layers; })
      .def_property_readonly("hidden", [](const LanguageModel& lm) { return lm.config().hidden; })
      .def("tokenize", &LanguageModel::tokenize, py::arg("text"))
      .def(
          "sentence_logprob", [](const LanguageModel& lm, const std::string& text) { return lm.sentence_logprob(text); },
          py::arg("text"))
      .def(
          "accuracy",
          [](const LanguageModel& lm, const Phenomenon& p, std::size_t threads) {
            py::gil_scoped_release release;
            return accuracy(lm, p.pairs, AblationSpec::none(), threads).accuracy;
          },
          py::arg("phenomenon"), py::arg("threads") = 1)
      .def(
          "localize",
          [](const LanguageModel& lm, const Benchmark& b, const std::string& uid, double fraction,
             const std::string& sites, std::size_t threads) {
            UnitSet set;
            {
              py::gil_scoped_release release;
              const Localizer loc(lm, SiteSet::parse(sites), threads);
              set = loc.localize(b.content_hash, b.phenomenon(uid), fraction);
            }
            py::list units;
            for (const auto& u : set.units) units.append(unit_dict(u));
            return units;
          },
          py::arg("benchmark"), py::arg("uid"), py::arg("fraction") = 0.01, py::arg("sites") = "residual",
          py::arg("threads") = 1, "Top units for one phenomenon, best first.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args);
      },
      py::arg("args"), "Runs a synloc command line and returns its exit code.");
}
