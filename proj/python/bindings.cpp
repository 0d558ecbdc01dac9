#include "drgbab/bab.hpp"
#include "drgbab/bench.hpp"
#include "drgbab/heuristics.hpp"
#include "drgbab/model.hpp"
#include "drgbab/oracle.hpp"
#include "drgbab/relax.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace drgbab;

namespace {

// Configuration travels as JSON text so Python sees exactly the keys the CLI accepts.
std::string verify_json(const VerificationTask& task, const std::string& config_json) {
    const BabConfig cfg = config_from_json_text(config_json.empty() ? "{}" : config_json);
    RunStats stats;
    {
        py::gil_scoped_release release;
        stats = verify(task, cfg);
    }
    return result_json_text(stats, cfg);
}

RegionFilter parse_filter(const std::string& name) {
    if (name == "closure") return RegionFilter::closure;
    if (name == "interior") return RegionFilter::interior;
    throw InputError("unknown region filter '" + name + "' (expected closure or interior)");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Branch-and-bound ReLU network verifier";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<OracleBudgetExceeded>(m, "OracleBudgetExceeded", PyExc_RuntimeError);

    py::class_<VerificationTask>(m, "Task")
        .def_static("load", &load_task, py::arg("model_path"), py::arg("spec_path"))
        .def_static("from_json", [](const std::string& model, const std::string& spec) {
            return task_from_json_text(model, spec);
        }, py::arg("model_json"), py::arg("spec_json"))
        .def("save", &save_task, py::arg("model_path"), py::arg("spec_path"))
        .def_property_readonly("input_dim", [](const VerificationTask& t) { return t.network.input_dim(); })
        .def_property_readonly("output_dim", [](const VerificationTask& t) { return t.network.output_dim(); })
        .def_property_readonly("lower", [](const VerificationTask& t) { return t.domain.lower; })
        .def_property_readonly("upper", [](const VerificationTask& t) { return t.domain.upper; })
        .def_property_readonly("spec", [](const VerificationTask& t) { return t.spec; })
        .def("forward", [](const VerificationTask& t, const Eigen::VectorXd& x) { return forward(t.network, x).logits; },
             py::arg("x"))
        .def("margin", [](const VerificationTask& t, const Eigen::VectorXd& x) { return margin(t.network, t.spec, x); },
             py::arg("x"))
        .def("model_json", [](const VerificationTask& t) { return network_to_json_text(t.network); })
        .def("spec_json", [](const VerificationTask& t) { return spec_to_json_text(t); });

    m.def("verify_json", &verify_json, py::arg("task"), py::arg("config_json") = "",
          "Run branch and bound; returns the result document as JSON text.");

    py::class_<ExactMinimum>(m, "ExactMinimum")
        .def_readonly("min_value", &ExactMinimum::min_value)
        .def_readonly("argmin", &ExactMinimum::argmin)
        .def_readonly("unstable_neurons", &ExactMinimum::unstable_neurons)
        .def_readonly("regions_visited", &ExactMinimum::regions_visited)
        .def_readonly("regions_feasible", &ExactMinimum::regions_feasible);

    m.def("exact_min_margin", [](const VerificationTask& t, const std::string& regions) {
        return exact_min_margin(t, parse_filter(regions));
    }, py::arg("task"), py::arg("regions") = "closure");

    py::class_<AttackResult>(m, "AttackResult")
        .def_readonly("best_x", &AttackResult::best_x)
        .def_readonly("best_margin", &AttackResult::best_margin)
        .def_readonly("evaluated", &AttackResult::evaluated)
        .def_property_readonly("violation", &AttackResult::violation);

    m.def("grid_attack", &grid_attack, py::arg("task"), py::arg("samples"), py::arg("seed") = 0);

    m.def("relu_relaxation", [](double l, double u, double alpha) {
        const ReluRelaxation r = relu_relaxation(l, u, alpha);
        return py::make_tuple(r.upper_slope, r.upper_intercept, r.lower_slope);
    }, py::arg("l"), py::arg("u"), py::arg("alpha") = 0.0,
          "(upper_slope, upper_intercept, lower_slope) of the triangle relaxation");

    m.def("directional_gap", py::overload_cast<double, double, double, double>(&directional_gap), py::arg("a"),
          py::arg("z_star"), py::arg("l"), py::arg("u"));

    m.def("heuristics", [] {
        std::vector<std::string> out;
        for (HeuristicKind k : all_heuristics()) out.emplace_back(to_string(k));
        return out;
    });

    m.def("generate_suite", [](const std::string& dir, std::uint64_t seed, int count, int input_dim,
                               std::vector<int> widths, int outputs, double eps) {
        GenOptions o;
        o.seed = seed;
        o.count = count;
        o.input_dim = input_dim;
        o.widths = std::move(widths);
        o.outputs = outputs;
        o.eps = eps;
        write_suite(dir, o);
    }, py::arg("dir"), py::arg("seed") = 0, py::arg("count") = 10, py::arg("input_dim") = 4,
          py::arg("widths") = std::vector<int>{8, 8}, py::arg("outputs") = 3, py::arg("eps") = 0.05);
}
