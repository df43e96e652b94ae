#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lmirt/em_estimator.hpp"
#include "lmirt/inference.hpp"
#include "lmirt/io.hpp"
#include "lmirt/markov_likelihood.hpp"
#include "lmirt/model_spec.hpp"
#include "lmirt/response_model.hpp"
#include "lmirt/simulator.hpp"

namespace py = pybind11;
using namespace lmirt;

namespace {

ModelConfig config_from_text(const std::string& text) {
  std::istringstream is(text);
  return parse_model_config(is, "<string>");
}

// JSON goes across as text; Python's json module parses it.
std::string params_json(const ParamSet& p, const ModelSpec& spec) { return params_to_json(p, spec).dump(); }
ParamSet params_from_text(const std::string& text, const ModelSpec& spec) { return params_from_json(json::parse(text), spec); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent Markov item-response models";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<EstimationFailure>(m, "EstimationFailure", PyExc_RuntimeError);
  py::register_exception<NestingError>(m, "NestingError", PyExc_ValueError);

  py::enum_<ItemMode>(m, "ItemMode")
      .value("Unconstrained", ItemMode::Unconstrained)
      .value("OnePL", ItemMode::OnePL)
      .value("TwoPL", ItemMode::TwoPL);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_readonly("k", &ModelSpec::k)
      .def_readonly("s", &ModelSpec::s)
      .def_readonly("regimes", &ModelSpec::regimes)
      .def_readonly("p", &ModelSpec::p)
      .def_property_readonly("J", [](const ModelSpec& s) { return s.items.J; })
      .def_property_readonly("mode", [](const ModelSpec& s) { return s.items.mode; })
      .def("count_free_params", &count_free_params)
      .def("to_json", [](const ModelSpec& s) { return spec_to_json(s).dump(); });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_readonly("label", &ModelConfig::label)
      .def_readonly("spec", &ModelConfig::spec)
      .def_readonly("covariates", &ModelConfig::covariates)
      .def("__str__", &format_model_config);
  m.def("parse_model_config", &config_from_text, py::arg("text"));
  m.def("read_model_config", &read_model_config, py::arg("path"));

  py::class_<ParamSet>(m, "ParamSet")
      .def_property_readonly("xi", [](const ParamSet& p) { return p.support.xi; })
      .def_property_readonly("beta", [](const ParamSet& p) { return p.item.beta; })
      .def_property_readonly("gamma", [](const ParamSet& p) { return p.item.gamma; })
      .def_property_readonly("lambda_", [](const ParamSet& p) { return p.item.lambda; })
      .def_property_readonly("phi", [](const ParamSet& p) { return p.chain.phi; })
      .def_property_readonly("pi", [](const ParamSet& p) { return p.chain.pi; })
      .def("to_json", &params_json, py::arg("spec"));
  m.def("params_from_json", &params_from_text, py::arg("text"), py::arg("spec"));

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("total_trials", &Dataset::total_trials)
      .def_property_readonly("subject_ids",
                             [](const Dataset& d) {
                               std::vector<std::string> ids;
                               for (const auto& s : d.subjects) ids.push_back(s.id);
                               return ids;
                             })
      .def("fingerprint", [](const Dataset& d) { return hex64(fingerprint(d)); });
  m.def("read_dataset", &read_dataset, py::arg("data_path"), py::arg("covariates_path"), py::arg("config"));
  m.def("write_dataset", &write_dataset, py::arg("data"), py::arg("data_path"), py::arg("covariates_path"));

  m.def("success_prob",
        [](const ParamSet& p, const ModelSpec& spec) { return success_grid(p.item, p.support, spec); },
        py::arg("params"), py::arg("spec"), "J x k matrix of success probabilities");
  m.def("log_likelihood", &log_likelihood, py::arg("data"), py::arg("params"), py::arg("spec"));
  m.def("state_posteriors",
        [](const Dataset& d, const ParamSet& p, const ModelSpec& spec) {
          std::vector<Eigen::MatrixXd> out;
          const LikelihoodContext ctx(p, spec);
          for (const auto& s : d.subjects) out.push_back(forward_backward(s, ctx).state_post);
          return out;
        },
        py::arg("data"), py::arg("params"), py::arg("spec"));

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("n_starts", &FitOptions::n_starts)
      .def_readwrite("seed", &FitOptions::seed)
      .def_readwrite("tol", &FitOptions::tol)
      .def_readwrite("max_iter", &FitOptions::max_iter)
      .def_readwrite("workers", &FitOptions::workers);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("g", &FitResult::g)
      .def_readonly("n_iter", &FitResult::n_iter)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("start_logliks", &FitResult::start_logliks)
      .def_readonly("trace", &FitResult::trace)
      .def_readonly("warnings", &FitResult::warnings);
  m.def("fit", &lmirt::fit, py::arg("data"), py::arg("spec"), py::arg("options") = FitOptions{},
        py::call_guard<py::gil_scoped_release>());

  m.def("bic", &bic, py::arg("loglik"), py::arg("g"), py::arg("n"));
  m.def("bic_star", &bic_star, py::arg("loglik"), py::arg("g"), py::arg("total_trials"));
  m.def("chi_squared_upper", &chi_squared_upper, py::arg("x"), py::arg("df"));

  py::class_<LRTestResult>(m, "LRTestResult")
      .def_readonly("D", &LRTestResult::D)
      .def_readonly("df", &LRTestResult::df)
      .def_readonly("p_value_chisq", &LRTestResult::p_value_chisq)
      .def_readonly("p_value_bootstrap", &LRTestResult::p_value_bootstrap)
      .def_readonly("boundary", &LRTestResult::boundary)
      .def_readonly("warnings", &LRTestResult::warnings);
  m.def(
      "lr_test",
      [](const Dataset& data, const ModelSpec& null_spec, const ModelSpec& alt_spec, const FitOptions& opts,
         int bootstrap) {
        const FitResult f0 = lmirt::fit(data, null_spec, opts);
        const FitResult f1 = fit_alternative(data, alt_spec, opts, f0, null_spec);
        const bool boundary = is_boundary_hypothesis(null_spec, alt_spec);
        BootstrapOptions b;
        b.replicates = boundary ? bootstrap : 0;
        b.seed = opts.seed;
        b.fit = opts;
        return lr_test(data, f0, null_spec, f1, alt_spec, boundary, b);
      },
      py::arg("data"), py::arg("null_spec"), py::arg("alt_spec"), py::arg("options") = FitOptions{},
      py::arg("bootstrap") = 0, py::call_guard<py::gil_scoped_release>());

  py::class_<Fixture>(m, "Fixture")
      .def_readonly("spec", &Fixture::spec)
      .def_readonly("params", &Fixture::params)
      .def_readonly("provenance", &Fixture::provenance);
  m.def("paper_fixture", &paper_fixture, py::arg("n") = 115);
  m.def(
      "simulate_fixture",
      [](int n, std::uint64_t seed) {
        const Fixture fx = paper_fixture(n);
        auto sim = simulate(fx.params, fx.spec, fx.plan, seed);
        return py::make_tuple(sim.data, sim.paths);
      },
      py::arg("n"), py::arg("seed"));
  m.def(
      "simulate_responses",
      [](const Dataset& design, const ParamSet& p, const ModelSpec& spec, std::uint64_t seed) {
        auto sim = simulate_responses(design, p, spec, seed);
        return py::make_tuple(sim.data, sim.paths);
      },
      py::arg("design"), py::arg("params"), py::arg("spec"), py::arg("seed"));
}
