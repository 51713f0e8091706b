// wnos_kit: compile, inspect, run and compare network control programs.
//
// Exit codes: 0 ok, 1 usage or I/O, 2 program parse/validation,
// 3 instantiation/decomposition/synthesis, 4 incompatible program,
// 5 scenario format/topology, 6 runtime invariant violation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wnos/errors.hpp"
#include "wnos/pipeline.hpp"
#include "wnos/plot.hpp"
#include "wnos/schema.hpp"
#include "wnos/sim.hpp"

namespace fs = std::filesystem;
using namespace wnos;

namespace {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(const Error& e) {
  static const std::set<std::string> parse{"ParseError", "ValidationError", "UnknownElement", "ArityMismatch",
                                           "SchemaMismatch"};
  static const std::set<std::string> runtime{"IncompatibleProgram", "RoleMismatch"};
  static const std::set<std::string> scenario{"FormatError", "TopologyError"};
  if (parse.count(e.kind())) return 2;
  if (runtime.count(e.kind())) return 4;
  if (scenario.count(e.kind())) return 5;
  if (e.kind() == "InvariantViolation") return 6;
  return 3;
}

std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("WNOS_KIT_SEED")) {
    try {
      std::size_t used = 0;
      unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("WNOS_KIT_SEED", "not an unsigned integer: " + std::string(env));
  }
  return std::nullopt;
}

// Write-then-rename so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << text;
    if (!f) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void require_file(const std::string& p) {
  if (!fs::is_regular_file(p)) throw IoError("no such file: " + p);
}

std::string file_stem(const std::string& scheme) {
  std::string s = scheme;
  for (char& c : s)
    if (c == '-') c = '_';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile and simulate distributed network control programs"};
  app.require_subcommand(1);

  std::string program, scenario, out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool plans = false, plot = false, random_init = false, state = false;
  long duration = -1;
  int runs = 1;
  std::vector<std::string> schemes;

  auto* compile_cmd = app.add_subcommand("compile", "Decompose a program and print every stage");
  compile_cmd->add_option("file", program, "Program file")->required();
  compile_cmd->add_flag("--plans", plans, "Also print the solver plans");
  compile_cmd->add_option("--seed", seed, "Instantiation seed");
  compile_cmd->add_option("--out", out_dir, "Also write compile.txt (and plans.txt) here");

  auto* inspect_cmd = app.add_subcommand("inspect", "Print instantiation tables, element graph and tree levels");
  inspect_cmd->add_option("file", program, "Program file")->required();
  inspect_cmd->add_option("--seed", seed, "Instantiation seed");

  auto add_run_flags = [&](CLI::App* c) {
    c->add_option("--program", program, "Program file")->required();
    c->add_option("--scenario", scenario, "Scenario file")->required();
    c->add_option("--scheme", schemes, "WNOS-T-P, WNOS-T, WNOS-P, NoControl or BestResponse")->required();
    c->add_option("--seed", seed, "Seed for instantiation and random operating points");
    c->add_option("--duration", duration, "Slots to simulate (default: the scenario's)");
    c->add_flag("--random-init", random_init, "Start controlled knobs at seeded random points");
  };
  auto* run_cmd = app.add_subcommand("run", "Simulate one or more schemes and write metrics CSVs");
  add_run_flags(run_cmd);
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_flag("--plot", plot, "Write throughput and power SVG plots");
  run_cmd->add_flag("--state", state, "Write the per-node state as JSON lines");

  auto* compare_cmd = app.add_subcommand("compare", "Steady-state utility table of several schemes (TSV)");
  add_run_flags(compare_cmd);
  compare_cmd->add_option("--runs", runs, "Number of paired seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto s = resolve_seed(seed);
    const NetworkSchema schema = build_default_schema();

    if (*compile_cmd) {
      require_file(program);
      Compiled c = compile_file(program, s);
      std::string text = dump_compile(c);
      std::string plan_text = plans ? dump_plans(c) : "";
      std::cout << text << plan_text;
      if (compile_cmd->count("--out")) {
        fs::create_directories(out_dir);
        write_atomic(fs::path(out_dir) / "compile.txt", text);
        if (plans) write_atomic(fs::path(out_dir) / "plans.txt", plan_text);
      }
      return 0;
    }
    if (*inspect_cmd) {
      require_file(program);
      Compiled c = compile_file(program, s);
      std::cout << dump_inspect(c, schema);
      return 0;
    }

    require_file(program);
    require_file(scenario);
    std::vector<Scheme> parsed;
    try {
      for (const auto& name : schemes) parsed.push_back(parse_scheme(name));
    } catch (const ValidationError& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    Compiled c = compile_file(program, s);
    Scenario sc = load_scenario(scenario);
    std::uint64_t run_seed = s ? *s : sc.seed;

    if (*compare_cmd) {
      if (parsed.size() < 2) {
        std::cerr << "compare needs at least two --scheme values\n";
        return 1;
      }
      std::cout << compare_tsv(compare(c, schema, sc, parsed, run_seed, runs, duration));
      return 0;
    }

    fs::create_directories(out_dir);
    for (Scheme scheme : parsed) {
      RunOptions o;
      o.scheme = scheme;
      o.seed = run_seed;
      o.duration = duration;
      o.random_init = random_init;
      o.record_state = state;
      MetricsLog log = simulate(c, schema, sc, o);
      std::string stem = file_stem(to_string(scheme));
      fs::path csv = fs::path(out_dir) / (stem + ".csv");
      write_atomic(csv, log.csv());
      if (state) write_atomic(fs::path(out_dir) / (stem + ".state.jsonl"), log.state_jsonl());
      if (plot) {
        write_atomic(fs::path(out_dir) / (stem + "_throughput.svg"), throughput_svg(log));
        write_atomic(fs::path(out_dir) / (stem + "_power.svg"), power_svg(log));
      }
      std::cout << to_string(scheme) << "\t" << csv.string() << "\tslots=" << log.slots.size()
                << "\tmean_utility=" << log.mean_utility() << "\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code(e);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
