#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "rbo/analytics.hpp"
#include "rbo/bayesopt.hpp"
#include "rbo/chem.hpp"
#include "rbo/data.hpp"
#include "rbo/error.hpp"
#include "rbo/experiment.hpp"

namespace py = pybind11;
using namespace rbo;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
std::string campaign(const data::Dataset& dataset, const std::string& config_json) {
  const auto config = bayesopt::CampaignConfig::from_json(nlohmann::json::parse(config_json));
  CampaignTrace trace;
  {
    py::gil_scoped_release release;
    trace = bayesopt::run_campaign(dataset, config);
  }
  return to_json(trace).dump();
}

std::string experiment_run(const std::string& config_path, std::size_t jobs, std::optional<std::string> out,
                           std::optional<std::uint64_t> seed, bool permissive) {
  auto config = experiment::load_config(config_path);
  if (seed) config.base_seed = *seed;
  if (out) config.output_dir = *out;
  if (jobs == 0) throw ConfigError("jobs must be at least 1");
  experiment::Manifest manifest;
  {
    py::gil_scoped_release release;
    const data::Dataset dataset = config.dataset.load(permissive);
    manifest = experiment::run_experiment(config, dataset, jobs);
  }
  return manifest.to_json().dump();
}

py::dict report(const std::string& trace_dir, std::optional<std::string> out) {
  const auto rep = experiment::build_report(experiment::load_traces(trace_dir));
  experiment::write_report(rep, out ? *out : trace_dir);
  py::dict d;
  d["summary"] = experiment::summary_csv(rep);
  d["comparison"] = experiment::comparison_csv(rep);
  d["correlation"] = experiment::correlation_csv(rep);
  d["curves"] = experiment::curves_csv(rep);
  return d;
}

}  // namespace

PYBIND11_MODULE(_rbo, m) {
  m.doc() = "Rank-based Bayesian optimisation over molecular fingerprints";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", data_error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());

  py::class_<chem::Fingerprint>(m, "Fingerprint")
      .def_property_readonly("nbits", &chem::Fingerprint::nbits)
      .def("popcount", &chem::Fingerprint::popcount)
      .def("on_bits", &chem::Fingerprint::on_bits)
      .def("to_hex", &chem::Fingerprint::to_hex)
      .def_static("from_hex", [](const std::string& hex) { return chem::Fingerprint::from_hex(hex); })
      .def("__eq__", [](const chem::Fingerprint& a, const chem::Fingerprint& b) { return a == b; })
      .def("__repr__", [](const chem::Fingerprint& fp) {
        return "<Fingerprint nbits=" + std::to_string(fp.nbits()) + " popcount=" + std::to_string(fp.popcount()) +
               ">";
      });

  m.def(
      "fingerprint",
      [](const std::string& smiles, int radius, std::size_t nbits) {
        return chem::morgan_fingerprint(chem::parse_smiles(smiles), radius, nbits);
      },
      py::arg("smiles"), py::arg("radius") = chem::kDefaultRadius, py::arg("nbits") = chem::kDefaultBits);
  m.def("tanimoto", &chem::tanimoto, py::arg("a"), py::arg("b"));

  py::class_<data::Dataset>(m, "Dataset")
      .def_property_readonly("name", &data::Dataset::name)
      .def_property_readonly("direction", [](const data::Dataset& d) { return data::to_string(d.direction()); })
      .def("__len__", &data::Dataset::size)
      .def_property_readonly("smiles",
                             [](const data::Dataset& d) {
                               std::vector<std::string> out;
                               for (const auto& r : d.records()) out.push_back(r.smiles);
                               return out;
                             })
      .def_property_readonly("targets",
                             [](const data::Dataset& d) {
                               std::vector<double> out;
                               for (const auto& r : d.records()) out.push_back(r.raw_target);
                               return out;
                             })
      .def_property_readonly("fingerprints", [](const data::Dataset& d) {
        std::vector<chem::Fingerprint> out;
        for (const auto& r : d.records()) out.push_back(r.features);
        return out;
      });

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& smiles_column, const std::string& target_column,
         const std::string& direction, bool permissive) {
        data::CsvOptions o;
        o.smiles_column = smiles_column;
        o.target_column = target_column;
        o.direction = data::direction_from_string(direction);
        o.permissive = permissive;
        return data::load_csv(path, o).dataset;
      },
      py::arg("path"), py::arg("smiles_column") = "smiles", py::arg("target_column") = "target",
      py::arg("direction") = "maximize", py::arg("permissive") = false);

  m.def(
      "generate_synthetic",
      [](std::size_t n, std::size_t anchors, std::size_t cliffs, std::uint64_t seed, std::size_t nbits) {
        data::SyntheticParams p;
        p.n = n;
        p.n_anchors = anchors;
        p.cliff_count = cliffs;
        p.seed = seed;
        p.nbits = nbits;
        return data::generate_synthetic(p);
      },
      py::arg("n") = 500, py::arg("anchors") = 20, py::arg("cliffs") = 0, py::arg("seed") = 0,
      py::arg("nbits") = chem::kDefaultBits);

  m.def(
      "robust_scale",
      [](const std::vector<double>& v) {
        const auto s = data::robust_scale(v);
        return py::make_tuple(s.values, s.params.median, s.params.iqr);
      },
      py::arg("values"));

  m.def(
      "kendall_tau", [](const std::vector<double>& a, const std::vector<double>& b) { return analytics::kendall_tau(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "r_squared", [](const std::vector<double>& y, const std::vector<double>& yhat) { return analytics::r_squared(y, yhat); },
      py::arg("y"), py::arg("yhat"));
  m.def(
      "pearson_r",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto c = analytics::pearson_r(a, b);
        return py::make_tuple(c.r, c.p);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto t = analytics::t_test(a, b);
        return py::make_tuple(t.t, t.p);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "ci95",
      [](const std::vector<double>& x) {
        const auto c = analytics::ci95(x);
        return py::make_tuple(c.mean, c.half_width);
      },
      py::arg("sample"));
  m.def(
      "bo_auc",
      [](const std::vector<double>& fractions, std::size_t n_init, std::size_t budget) {
        return analytics::bo_auc(fractions, n_init, budget);
      },
      py::arg("fractions"), py::arg("n_init"), py::arg("budget"));
  m.def(
      "rogi",
      [](const std::vector<chem::Fingerprint>& fps, const std::vector<double>& y) {
        const auto r = analytics::rogi(fps, y);
        py::dict d;
        d["rogi"] = r.rogi;
        d["thresholds"] = r.thresholds;
        d["dispersion"] = r.dispersion;
        return d;
      },
      py::arg("fingerprints"), py::arg("targets"));

  m.def("default_campaign_config", [] { return bayesopt::CampaignConfig{}.to_json().dump(); });
  m.def("run_campaign", &campaign, py::arg("dataset"), py::arg("config_json"));
  m.def("run_experiment", &experiment_run, py::arg("config_path"), py::arg("jobs") = 1,
        py::arg("out") = py::none(), py::arg("seed") = py::none(), py::arg("permissive") = false);
  m.def("report", &report, py::arg("trace_dir"), py::arg("out") = py::none());
  m.def("fingerprint_table", &experiment::fingerprint_table, py::arg("dataset"));
  m.def("rogi_table", &experiment::rogi_table, py::arg("dataset"));
}
