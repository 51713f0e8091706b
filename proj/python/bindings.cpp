#include <map>
#include <optional>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wnos/errors.hpp"
#include "wnos/pipeline.hpp"
#include "wnos/plot.hpp"
#include "wnos/scenario.hpp"
#include "wnos/sim.hpp"

namespace py = pybind11;
using namespace wnos;

namespace {

const NetworkSchema& schema() {
  static const NetworkSchema s = build_default_schema();
  return s;
}

const char* const kErrorKinds[] = {
    "UnknownElement",     "ArityMismatch",   "SchemaMismatch",     "ValidationError",
    "ParseError",         "NotGlobal",       "ExhaustedResampling", "EmptyInstance",
    "IncompletePool",     "RuleViolation",   "MissingInstance",    "UnsupportedConstraintSense",
    "NotNormalized",      "UnattributableTerm", "NonSeparable",    "NoMatchingInstance",
    "AmbiguousMatch",     "NoApplicableMethod", "MissingParameter", "NotDifferentiable",
    "RoleMismatch",       "StaleRegisters",  "FormatError",        "TopologyError",
    "IncompatibleProgram", "InvariantViolation",
};

std::map<std::string, PyObject*>& error_types() {
  static std::map<std::string, PyObject*> types;
  return types;
}

RunOptions options(const std::string& scheme, std::uint64_t seed, long duration, bool random_init, bool state) {
  RunOptions o;
  o.scheme = parse_scheme(scheme);
  o.seed = seed;
  o.duration = duration;
  o.random_init = random_init;
  o.record_state = state;
  return o;
}

}  // namespace

PYBIND11_MODULE(wnos, m) {
  m.doc() = "Compile network control programs into per-node solvers and simulate them";

  static py::exception<Error> base(m, "WnosError");
  for (const char* kind : kErrorKinds) {
    std::string qualified = std::string("wnos.") + kind;
    PyObject* t = PyErr_NewException(qualified.c_str(), base.ptr(), nullptr);
    error_types()[kind] = t;
    m.add_object(kind, py::handle(t));
  }
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      auto it = error_types().find(e.kind());
      PyErr_SetString(it != error_types().end() ? it->second : base.ptr(), e.what());
    }
  });

  py::class_<Compiled>(m, "Compiled")
      .def_property_readonly("sense", [](const Compiled& c) { return to_string(c.spec.sense); })
      .def("dump", &dump_compile, "Every decomposition stage as text")
      .def("plans", &dump_plans, "One line per synthesized solver plan")
      .def("inspect", [](const Compiled& c) { return dump_inspect(c, schema()); })
      .def("pool", [](const Compiled& c) { return c.pool.dump(); })
      .def("links_of_session", [](const Compiled& c, int s) {
        const Instance* i = c.pool.local("seslnk", s);
        if (!i) throw py::index_error("no such session");
        return i->members;
      });

  m.def("compile", [](const std::string& text, std::optional<std::uint64_t> seed) { return compile_text(text, seed); },
        py::arg("text"), py::arg("seed") = py::none(), "Compile program source text");
  m.def("compile_file", [](const std::string& path, std::optional<std::uint64_t> seed) { return compile_file(path, seed); },
        py::arg("path"), py::arg("seed") = py::none());

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("duration", &Scenario::duration)
      .def_readonly("seed", &Scenario::seed)
      .def_property_readonly("nodes", [](const Scenario& s) { return s.nodes.size(); })
      .def_property_readonly("links", [](const Scenario& s) { return s.links.size(); })
      .def_property_readonly("sessions", [](const Scenario& s) { return s.sessions.size(); })
      .def("__str__", &print_scenario);
  m.def("parse_scenario", &parse_scenario, py::arg("text"));
  m.def("load_scenario", &load_scenario, py::arg("path"));

  py::class_<MetricsLog>(m, "Run")
      .def_readonly("scheme", &MetricsLog::scheme)
      .def_readonly("seed", &MetricsLog::seed)
      .def_property_readonly("slots", [](const MetricsLog& l) { return l.slots.size(); })
      .def_property_readonly("utility", [](const MetricsLog& l) {
        std::vector<double> u;
        for (const auto& r : l.slots) u.push_back(r.utility);
        return u;
      })
      .def_property_readonly("stats", [](const MetricsLog& l) {
        const RunStats& s = l.stats;
        py::dict d;
        d["injected"] = s.injected;
        d["delivered"] = s.delivered;
        d["queued"] = s.queued;
        d["messages_sent"] = s.messages_sent;
        d["messages_delivered"] = s.messages_delivered;
        d["rejected"] = s.rejected;
        d["duplicates"] = s.duplicates;
        d["unknown"] = s.unknown;
        d["stale_events"] = s.stale_events;
        d["knob_writes"] = s.knob_writes;
        d["transport_ticks"] = s.transport_ticks;
        d["physical_ticks"] = s.physical_ticks;
        return d;
      })
      .def("csv", &MetricsLog::csv)
      .def("state_jsonl", &MetricsLog::state_jsonl)
      .def("mean_utility", &MetricsLog::mean_utility, py::arg("fraction") = 0.5)
      .def("mean_throughput", &MetricsLog::mean_throughput, py::arg("session"), py::arg("fraction") = 0.5)
      .def("mean_total_power", &MetricsLog::mean_total_power, py::arg("fraction") = 0.5)
      .def("throughput_svg", &throughput_svg)
      .def("power_svg", &power_svg);

  m.def(
      "simulate",
      [](const Compiled& c, const Scenario& s, const std::string& scheme, std::uint64_t seed, long duration,
         bool random_init, bool state) {
        RunOptions o = options(scheme, seed, duration, random_init, state);
        py::gil_scoped_release release;
        return simulate(c, schema(), s, o);
      },
      py::arg("compiled"), py::arg("scenario"), py::arg("scheme") = "WNOS-T-P", py::arg("seed") = 1,
      py::arg("duration") = -1, py::arg("random_init") = false, py::arg("record_state") = false);

  m.def(
      "compare",
      [](const Compiled& c, const Scenario& s, const std::vector<std::string>& schemes, std::uint64_t seed, int runs,
         long duration) {
        std::vector<Scheme> parsed;
        for (const auto& n : schemes) parsed.push_back(parse_scheme(n));
        std::vector<CompareRow> rows;
        {
          py::gil_scoped_release release;
          rows = compare(c, schema(), s, parsed, seed, runs, duration);
        }
        py::list out;
        for (const auto& r : rows) out.append(py::make_tuple(to_string(r.scheme), r.mean_utility, r.gain_pct));
        return out;
      },
      py::arg("compiled"), py::arg("scenario"), py::arg("schemes"), py::arg("seed") = 1, py::arg("runs") = 1,
      py::arg("duration") = -1, "Rows of (scheme, mean_utility, gain_pct over NoControl)");

  m.def("schemes", [] {
    std::vector<std::string> out;
    for (Scheme s : all_schemes()) out.push_back(to_string(s));
    return out;
  });
}
