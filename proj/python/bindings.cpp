#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "postfault/checkpoint.hpp"
#include "postfault/config.hpp"
#include "postfault/error.hpp"
#include "postfault/gridsim.hpp"
#include "postfault/pipeline.hpp"
#include "postfault/uqeval.hpp"

namespace py = pybind11;
using namespace postfault;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Vanilla or prob checkpoint, or an ensemble manifest.
struct Model {
  Predictor p;
  py::tuple predict(const Array& u, const Array& ys) const {
    TestCase tc;
    tc.u = from_array(u);
    tc.y_mesh = from_array(ys);
    tc.targets.assign(tc.y_mesh.size(), 0.0);
    require_compatible(p.config(), {tc});
    TrajectoryReport r = p.predict(tc);
    if (r.std.empty()) return py::make_tuple(to_array(r.mean), py::none());
    return py::make_tuple(to_array(r.mean), to_array(r.std));
  }
};

Model load_model(const std::string& path) {
  Model m;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    m.p.which = Which::bayes;
    m.p.ensemble = load_ensemble(path);
  } else {
    m.p.checkpoint = load_checkpoint(path);
    m.p.which = which_from_string(m.p.checkpoint.kind);
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DeepONet toolkit for post-fault power-grid trajectories";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);  // translators run newest first
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<SimulationDiverged>(m, "SimulationDiverged", PyExc_RuntimeError);

  m.def("default_config", [] { return RunConfig::defaults().to_ini(); },
        "Built-in configuration as INI text.");

  m.def("admissible_trips", [](const std::string& kind, double load_scale) {
        WsccOptions o;
        o.load_scale = load_scale;
        return admissible_trips(wscc9(o), fault_kind_from_string(kind));
      },
      py::arg("kind") = "N1", py::arg("load_scale") = 2.2);

  m.def("simulate",
        [](std::vector<std::size_t> tripped, double t_f, double t_cl, double T, double sample_rate,
           double load_scale, double damping) {
          WsccOptions o;
          o.load_scale = load_scale;
          o.damping = damping;
          GridModel grid = wscc9(o);
          FaultScenario s;
          s.kind = tripped.size() == 2 ? FaultKind::N2 : FaultKind::N1;
          s.tripped = std::move(tripped);
          s.t_f = t_f;
          s.t_cl = t_cl;
          s.T = T;
          s.sample_rate = sample_rate;
          Trajectory tr = simulate(grid, s);
          return py::make_tuple(to_array(tr.times), to_array(tr.values));
        },
        py::arg("tripped"), py::arg("t_f"), py::arg("t_cl") = 2.0, py::arg("T") = 9.0,
        py::arg("sample_rate") = 100.0, py::arg("load_scale") = 2.2, py::arg("damping") = 0.01,
        "Voltage magnitude at the monitor bus: returns (times, values).");

  py::class_<Model>(m, "Model")
      .def_static("load", &load_model, py::arg("path"),
                  "Load a .ckpt checkpoint or an ensemble.json manifest.")
      .def_property_readonly("kind", [](const Model& self) { return to_string(self.p.which); })
      .def_property_readonly("m", [](const Model& self) { return self.p.config().m; })
      .def_property_readonly("q", [](const Model& self) { return self.p.config().q; })
      .def("predict", &Model::predict, py::arg("u"), py::arg("ys"),
           "Returns (mean, std); std is None for a vanilla model.");

  m.def("inverse_normal_cdf", &inverse_normal_cdf);
  m.def("z_value", &z_value, py::arg("level"));
  m.def("chi_reference", &chi_reference);
  m.def("epsilon_ratio",
        [](const Array& mean, const Array& std, const Array& targets, double level) {
          auto mu = from_array(mean), sd = from_array(std), t = from_array(targets);
          return epsilon_ratio(confidence_interval(mu, sd, level), t);
        },
        py::arg("mean"), py::arg("std"), py::arg("targets"), py::arg("level") = 0.95);
  m.def("residual_normality", [](const Array& r) {
        NormalityResult n = residual_normality(from_array(r));
        py::dict d;
        d["skewness"] = n.skewness;
        d["excess_kurtosis"] = n.excess_kurtosis;
        d["normal"] = n.normal;
        d["counts"] = n.counts;
        d["bin_edges"] = to_array(n.bin_edges);
        return d;
      });
}
