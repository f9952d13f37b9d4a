// Copyright 2026 The shufflepl Authors. All Rights Reserved.
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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shufflepl/diagnostics.hpp"
#include "shufflepl/errors.hpp"
#include "shufflepl/harness.hpp"
#include "shufflepl/optimizer.hpp"
#include "shufflepl/problems.hpp"
#include "shufflepl/schedule.hpp"
#include "shufflepl/shuffling.hpp"

namespace py = pybind11;
using namespace shufflepl;

namespace {

// JSON crosses the boundary as text; the Python side wraps it with json.loads/dumps.
std::shared_ptr<const FiniteSumProblem> problem_from_text(const std::string& text) {
  return load_problem(nlohmann::json::parse(text));
}

StepSchedule schedule_from_py(const py::object& schedule) {
  if (py::isinstance<py::float_>(schedule) || py::isinstance<py::int_>(schedule)) {
    return ConstantStep{schedule.cast<double>()};
  }
  return schedule.cast<SchedulePlan>();
}

py::dict record_to_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["eta"] = r.eta;
  d["objective"] = r.objective;
  d["gap"] = r.gap;
  d["avg_sq_grad"] = r.avg_sq_grad;
  d["inner_sq_grad"] = r.inner_sq_grad;
  d["dev_sum_lt_n"] = r.dev_sum_lt_n;
  d["dev_sum_le_n"] = r.dev_sum_le_n;
  d["dist_sum_lt_n"] = r.dist_sum_lt_n;
  d["dist_sq_start"] = r.dist_sq_start;
  d["dist_sq_end"] = r.dist_sq_end;
  d["cap_exceeded"] = r.cap_exceeded;
  d["permutation"] = r.permutation.one_based();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Shuffling-type SGD on finite sums";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  py::class_<FiniteSumProblem, std::shared_ptr<FiniteSumProblem>>(m, "Problem")
      .def_property_readonly("n", &FiniteSumProblem::size)
      .def_property_readonly("d", &FiniteSumProblem::dimension)
      .def_property_readonly("kind", &FiniteSumProblem::kind)
      .def("value", &FiniteSumProblem::value, py::arg("w"), py::arg("i"))
      .def("gradient", [](const FiniteSumProblem& p, const Vector& w, std::size_t i) { return grad_component(p, w, i); },
           py::arg("w"), py::arg("i"))
      .def("objective", [](const FiniteSumProblem& p, const Vector& w) { return eval_objective(p, w); })
      .def("full_gradient", [](const FiniteSumProblem& p, const Vector& w) { return full_gradient(p, w); })
      .def("initial_point", &FiniteSumProblem::initial_point)
      .def_property_readonly("w_star", [](const FiniteSumProblem& p) { return p.ground_truth().w_star; })
      .def_property_readonly("f_star", [](const FiniteSumProblem& p) { return p.ground_truth().f_star; })
      .def_property_readonly("smoothness", [](const FiniteSumProblem& p) { return p.ground_truth().smoothness; })
      .def_property_readonly("descriptor", [](const FiniteSumProblem& p) { return p.descriptor().dump(); });

  m.def(
      "load_problem",
      [](const std::string& text) {
        return std::const_pointer_cast<FiniteSumProblem>(problem_from_text(text));
      },
      py::arg("doc"));
  m.def(
      "interpolating",
      [](std::size_t n, std::size_t d, std::uint64_t seed) {
        return std::const_pointer_cast<FiniteSumProblem>(
            std::static_pointer_cast<const FiniteSumProblem>(build_interpolating_generator(n, d, seed)));
      },
      py::arg("n"), py::arg("d"), py::arg("seed") = 0);
  m.def(
      "least_squares",
      [](const Matrix& rows, const Vector& targets) {
        return std::const_pointer_cast<FiniteSumProblem>(
            std::static_pointer_cast<const FiniteSumProblem>(build_least_squares(rows, targets)));
      },
      py::arg("rows"), py::arg("targets"));

  m.def(
      "permutation",
      [](const std::string& scheme, std::uint64_t seed, std::size_t n, std::size_t epoch) {
        return make_permutation(parse_scheme(scheme, seed), n, epoch).one_based();
      },
      py::arg("scheme"), py::arg("seed"), py::arg("n"), py::arg("epoch"));

  py::class_<ConstantsLedger>(m, "Constants")
      .def_readonly("L", &ConstantsLedger::L)
      .def_readonly("mu", &ConstantsLedger::mu)
      .def_readonly("M", &ConstantsLedger::M)
      .def_readonly("N", &ConstantsLedger::N)
      .def_readonly("gamma", &ConstantsLedger::gamma)
      .def_readonly("B1", &ConstantsLedger::B1)
      .def_readonly("B2", &ConstantsLedger::B2)
      .def_readonly("C1", &ConstantsLedger::C1)
      .def_readonly("C2", &ConstantsLedger::C2)
      .def_readonly("C3", &ConstantsLedger::C3);
  m.def(
      "compute_constants",
      [](double L, double mu, double M, double N, double gamma) { return compute_constants(L, mu, M, N, gamma); },
      py::arg("L"), py::arg("mu"), py::arg("M"), py::arg("N"), py::arg("gamma"));

  py::class_<SchedulePlan>(m, "SchedulePlan")
      .def_readonly("epsilon", &SchedulePlan::epsilon)
      .def_readonly("D", &SchedulePlan::D)
      .def_readonly("lambda_", &SchedulePlan::lambda)
      .def_readonly("C1", &SchedulePlan::C1)
      .def_readonly("K", &SchedulePlan::K)
      .def_readonly("growth", &SchedulePlan::growth)
      .def_readonly("eta0", &SchedulePlan::eta0)
      .def_readonly("T", &SchedulePlan::T)
      .def("eta", [](const SchedulePlan& p, std::size_t t) { return eta_at(p, t); }, py::arg("t"));
  m.def(
      "plan_schedule",
      [](double eps, double D, double lambda, double C1, std::optional<double> cap) {
        return plan_schedule(eps, D, lambda, C1, cap.value_or(std::numeric_limits<double>::infinity()));
      },
      py::arg("epsilon"), py::arg("D"), py::arg("lambda_"), py::arg("C1"), py::arg("cap") = py::none());

  m.def(
      "run",
      [](const FiniteSumProblem& problem, const Vector& w0, const py::object& schedule, const std::string& scheme,
         std::uint64_t seed, std::size_t epochs) {
        const RunTrace trace = run(problem, w0, schedule_from_py(schedule), parse_scheme(scheme, seed), epochs);
        py::list records;
        for (const auto& r : trace.epochs) records.append(record_to_dict(r));
        return py::make_tuple(records, trace.final_point);
      },
      py::arg("problem"), py::arg("w0"), py::arg("schedule"), py::arg("scheme") = "rr", py::arg("seed") = 0,
      py::arg("epochs"),
      "Run shuffling SGD. `schedule` is a constant step (float) or a SchedulePlan. Returns (records, final point).");

  m.def("gradient_check", &gradient_check, py::arg("problem"), py::arg("trials") = 50, py::arg("h") = 1e-4,
        py::arg("seed") = 0);
  m.def("estimate_smoothness", &estimate_smoothness, py::arg("problem"), py::arg("samples") = 1000,
        py::arg("radius") = 1.0, py::arg("seed") = 0);

  m.def(
      "fit_loglog",
      [](const std::vector<double>& eps_hats, const std::vector<double>& epochs) {
        const auto fit = harness::fit_loglog(eps_hats, epochs);
        return py::make_tuple(fit.slope, fit.intercept);
      },
      py::arg("eps_hats"), py::arg("epochs"));
}
