#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dipp/checkpoint.hpp"
#include "dipp/errors.hpp"
#include "dipp/evaluation.hpp"
#include "dipp/pipeline.hpp"
#include "dipp/verify.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

dipp::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw dipp::DimensionError("expected a 2-D array");
  dipp::Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.values().begin());
  return t;
}

Array to_array(const dipp::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict record_dict(const dipp::MetricRecord& r) {
  py::dict d;
  d["step"] = r.step;
  for (const auto& [k, v] : r.values) d[py::str(k)] = v;
  return d;
}

py::dict stage_dict(const dipp::StageResult& s) {
  py::dict d;
  d["artifacts"] = s.artifacts;
  d["metrics"] = record_dict(s.final_metrics);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diff-Instruct++ toy lab core";

  static py::exception<dipp::Error> base(m, "DippError", PyExc_RuntimeError);
  py::register_exception<dipp::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<dipp::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<dipp::DomainError>(m, "DomainError", base.ptr());
  py::register_exception<dipp::ScheduleError>(m, "ScheduleError", base.ptr());
  py::register_exception<dipp::DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<dipp::UsageError>(m, "UsageError", base.ptr());
  py::register_exception<dipp::LoadError>(m, "LoadError", base.ptr());

  py::class_<dipp::GaussianMixture>(m, "GaussianMixture")
      .def_static("ring", &dipp::GaussianMixture::ring, py::arg("dim") = 2, py::arg("conditions") = 3,
                  py::arg("components") = 3, py::arg("radius") = 4.0, py::arg("sigma") = 0.5)
      .def_property_readonly("dim", &dipp::GaussianMixture::dim)
      .def_property_readonly("num_conditions", &dipp::GaussianMixture::num_conditions)
      .def("log_density",
           [](const dipp::GaussianMixture& g, std::vector<double> x, double t, int c) {
             return g.log_density(x, t, c);
           },
           py::arg("x"), py::arg("t"), py::arg("condition"))
      .def("mean", &dipp::GaussianMixture::mean, py::arg("condition"))
      .def("sample",
           [](const dipp::GaussianMixture& g, std::vector<int> conditions, std::uint64_t seed) {
             dipp::Rng rng(seed);
             return to_array(g.sample(conditions, rng));
           },
           py::arg("conditions"), py::arg("seed") = 0);

  m.def("analytic_score",
        [](const dipp::GaussianMixture& g, const Array& x, std::vector<double> t, std::vector<int> conditions) {
          return to_array(dipp::analytic_score(g, to_tensor(x), t, conditions));
        },
        py::arg("mixture"), py::arg("x"), py::arg("t"), py::arg("conditions"),
        "Score of the mixture diffused to time t[i], row by row.");

  m.def("sample_times",
        [](std::size_t n, std::uint64_t seed, double p_mean, double p_std, double t_min, double t_max) {
          dipp::Rng rng(seed);
          return dipp::sample_times(dipp::TimeSampler{p_mean, p_std, t_min, t_max}, n, rng);
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("p_mean") = -2.0, py::arg("p_std") = 2.0,
        py::arg("t_min") = dipp::kDefaultTMin, py::arg("t_max") = dipp::kDefaultTMax);

  m.def("gaussian_kl",
        [](std::vector<double> mean_p, double var_p, std::vector<double> mean_q, double var_q) {
          return dipp::gaussian_kl({std::move(mean_p), var_p}, {std::move(mean_q), var_q});
        },
        py::arg("mean_p"), py::arg("var_p"), py::arg("mean_q"), py::arg("var_q"),
        "KL(N(mean_p, var_p I) || N(mean_q, var_q I)).");

  m.def("energy_distance", [](const Array& a, const Array& b) { return dipp::energy_distance(to_tensor(a), to_tensor(b)); });

  py::class_<dipp::CheckReport>(m, "CheckReport")
      .def_readonly("name", &dipp::CheckReport::name)
      .def_readonly("measured_error", &dipp::CheckReport::measured_error)
      .def_readonly("tolerance", &dipp::CheckReport::tolerance)
      .def_readonly("passed", &dipp::CheckReport::pass)
      .def_readonly("detail", &dipp::CheckReport::detail)
      .def("__repr__", [](const dipp::CheckReport& r) {
        return "<CheckReport " + r.name + " error=" + std::to_string(r.measured_error) +
               (r.pass ? " pass>" : " FAIL>");
      });
  m.def("run_all_checks", &dipp::run_all_checks, py::arg("seed") = 0);

  py::class_<dipp::ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_property(
          "seed", [](const dipp::ExperimentConfig& c) { return c.run.seed; },
          [](dipp::ExperimentConfig& c, std::uint64_t v) { c.run.seed = v; })
      .def_property(
          "out", [](const dipp::ExperimentConfig& c) { return c.run.out; },
          [](dipp::ExperimentConfig& c, std::string v) { c.run.out = std::move(v); })
      .def_property(
          "pretrain_steps", [](const dipp::ExperimentConfig& c) { return c.pretrain.steps; },
          [](dipp::ExperimentConfig& c, std::size_t v) { c.pretrain.steps = v; })
      .def_property(
          "distill_steps", [](const dipp::ExperimentConfig& c) { return c.distill.steps; },
          [](dipp::ExperimentConfig& c, std::size_t v) { c.distill.steps = v; })
      .def_property(
          "distill_alpha_cfg", [](const dipp::ExperimentConfig& c) { return c.distill.alpha_cfg; },
          [](dipp::ExperimentConfig& c, double v) { c.distill.alpha_cfg = v; })
      .def_property(
          "align_steps", [](const dipp::ExperimentConfig& c) { return c.align.steps; },
          [](dipp::ExperimentConfig& c, std::size_t v) { c.align.steps = v; })
      .def_property(
          "alpha_rew", [](const dipp::ExperimentConfig& c) { return c.align.alpha_rew; },
          [](dipp::ExperimentConfig& c, double v) { c.align.alpha_rew = v; })
      .def_property(
          "alpha_cfg", [](const dipp::ExperimentConfig& c) { return c.align.alpha_cfg; },
          [](dipp::ExperimentConfig& c, double v) { c.align.alpha_cfg = v; })
      .def_property(
          "eval_samples", [](const dipp::ExperimentConfig& c) { return c.eval.samples; },
          [](dipp::ExperimentConfig& c, std::size_t v) { c.eval.samples = v; })
      .def("validate", &dipp::ExperimentConfig::validate)
      .def("__eq__", [](const dipp::ExperimentConfig& a, const dipp::ExperimentConfig& b) { return a == b; });

  m.def("default_config", &dipp::default_config);
  m.def("parse_config", &dipp::parse_config, py::arg("text"), py::arg("source") = "<config>");
  m.def("load_config", &dipp::load_config, py::arg("path"));
  m.def("serialize_config", &dipp::serialize_config, py::arg("config"));

  py::class_<dipp::OneStepGenerator>(m, "Generator")
      .def_property_readonly("dim", &dipp::OneStepGenerator::dim)
      .def_property_readonly("num_conditions", &dipp::OneStepGenerator::num_conditions)
      .def_property_readonly("sigma_init", &dipp::OneStepGenerator::sigma_init)
      .def("generate",
           [](const dipp::OneStepGenerator& g, const Array& z, std::vector<int> conditions) {
             return to_array(g.generate(to_tensor(z), conditions));
           },
           py::arg("z"), py::arg("conditions"))
      .def("sample",
           [](const dipp::OneStepGenerator& g, std::vector<int> conditions, std::uint64_t seed) {
             dipp::Rng rng(seed);
             return to_array(g.generate(g.sample_latent(conditions.size(), rng), conditions));
           },
           py::arg("conditions"), py::arg("seed") = 0);

  m.def("load_generator", [](const std::string& path) { return dipp::load_generator(path); }, py::arg("path"));
  m.def("eval_generator",
        [](const dipp::OneStepGenerator& g, const dipp::ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
          const auto mix = dipp::make_mixture(c);
          const auto reward = dipp::make_reward(c, mix);
          dipp::Rng rng(seed);
          return record_dict(dipp::eval_generator(g, mix, &reward, n, rng));
        },
        py::arg("generator"), py::arg("config"), py::arg("n") = 10000, py::arg("seed") = 0);

  m.def("run_pretrain_ref", [](const dipp::ExperimentConfig& c) {
    dipp::StageResult res;
    {
      py::gil_scoped_release release;
      res = dipp::run_pretrain_ref(c);
    }
    return stage_dict(res);
  });
  m.def("run_distill", [](const dipp::ExperimentConfig& c) {
    dipp::StageResult res;
    {
      py::gil_scoped_release release;
      res = dipp::run_distill(c);
    }
    return stage_dict(res);
  });
  m.def("run_align",
        [](const dipp::ExperimentConfig& c, std::string base, std::string tag) {
          dipp::StageResult res;
          {
            py::gil_scoped_release release;
            res = dipp::run_align(c, {std::move(base), std::move(tag)});
          }
          return stage_dict(res);
        },
        py::arg("config"), py::arg("base_generator") = "", py::arg("tag") = "aligned");
  m.def("run_eval",
        [](const dipp::ExperimentConfig& c, const std::string& ckpt, std::size_t samples) {
          return stage_dict(dipp::run_eval(c, ckpt, samples));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("samples") = 0);
}
