#include "csbrm/cli.hpp"

#include "csbrm/report.hpp"
#include "csbrm/roadmap.hpp"
#include "csbrm/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

namespace csbrm::cli {

using json_io::Json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string scenario;
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = 0;
  std::string mode;
  std::string roadmap;
  std::string result;
  int start = 0;
  int goal = 1;
  int rollouts = 1000;
  int paths = 100;
};

std::string roadmap_path(const Options& o) {
  return o.roadmap.empty() ? (fs::path(o.out) / "roadmap.json").string() : o.roadmap;
}

std::string result_path(const Options& o) {
  return o.result.empty() ? (fs::path(o.out) / "result.json").string() : o.result;
}

void write(const Options& o, const std::string& name, const Json& j) {
  fs::create_directories(o.out);
  json_io::write_file((fs::path(o.out) / name).string(), j);
}

// The node mode is part of the scenario hash; take it from the roadmap.
RoadmapGraph load_roadmap(Scenario& sc, const Options& o) {
  const Json doc = json_io::read_file(roadmap_path(o));
  if (doc.contains("mode") && doc["mode"].is_string()) {
    sc.sampling.mode = node_mode_from_string(doc["mode"].get<std::string>());
  }
  return roadmap_from_json(sc, doc);
}

int build(const Options& o, std::ostream& out) {
  Scenario sc = load_scenario_file(o.scenario);
  if (!o.mode.empty()) sc.sampling.mode = node_mode_from_string(o.mode);
  const RoadmapGraph g = build_roadmap(sc, o.seed, o.threads);
  write(o, "roadmap.json", roadmap_to_json(sc, g));
  out << "roadmap: " << g.nodes.size() << " nodes, " << g.edges.size() << " edges";
  for (const auto& [gate, count] : g.rejections) out << ", " << gate << " " << count;
  out << "\n";
  return kOk;
}

int plan(const Options& o, std::ostream& out) {
  Scenario sc = load_scenario_file(o.scenario);
  const RoadmapGraph g = load_roadmap(sc, o);
  const Json r = plan_result_json(sc, g, o.start, o.goal);
  write(o, "result.json", r);
  if (!r["found"].get<bool>()) {
    out << "no path from " << o.start << " to " << o.goal << "\n";
    return kNoPath;
  }
  out << "path:";
  for (int v : r["path"]) out << " " << v;
  out << "\ncost: " << r["cost"]["total"].get<double>() << " (mean " << r["cost"]["mean"].get<double>()
      << ", cov " << r["cost"]["cov"].get<double>() << ", collision "
      << r["cost"]["collision_probability_sum"].get<double>() << ")\n";
  return kOk;
}

int simulate(const Options& o, std::ostream& out) {
  Scenario sc = load_scenario_file(o.scenario);
  const RoadmapGraph g = load_roadmap(sc, o);
  Json r = json_io::read_file(result_path(o));
  if (!r.value("found", false)) {
    out << "result has no path to simulate\n";
    return kNoPath;
  }
  const auto path = r.at("path").get<std::vector<int>>();
  const PathRollouts rollouts = simulate_path(sc, g, path, o.rollouts, o.seed);
  r["simulation"] = simulation_json(sc, rollouts, o.seed);
  write(o, "result.json", r);
  out << "path collision probability: " << rollouts.collision_probability << " over " << o.rollouts
      << " rollouts (threshold " << sc.collision_threshold << ")\n";
  return kOk;
}

int verify(const Options& o, std::ostream& out) {
  Scenario sc = load_scenario_file(o.scenario);
  const RoadmapGraph g = load_roadmap(sc, o);
  std::vector<std::vector<int>> paths;
  if (fs::exists(result_path(o))) {
    const Json r = json_io::read_file(result_path(o));
    if (r.value("found", false)) paths.push_back(r.at("path").get<std::vector<int>>());
  }
  for (auto& p : random_paths(g, o.paths, o.seed)) paths.push_back(std::move(p));
  const VerifyOutcome v = verify_paths_json(g, paths);
  write(o, "verify.json", v.report);
  out << "verified " << paths.size() << " paths, worst margin "
      << (paths.empty() ? 0.0 : v.report["worst"].get<double>()) << (v.holds ? "" : " (VIOLATION)") << "\n";
  return v.holds ? kOk : kVerifyViolation;
}

int export_figures(const Options& o, std::ostream& out) {
  Scenario sc = load_scenario_file(o.scenario);
  const RoadmapGraph g = load_roadmap(sc, o);
  std::optional<Json> result;
  if (fs::exists(result_path(o))) result = json_io::read_file(result_path(o));
  write(o, "figures.json", figures_json(sc, g, result));
  out << "wrote " << (fs::path(o.out) / "figures.json").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Covariance-steering belief roadmap planner"};
  app.require_subcommand(1);
  Options o;
  o.threads = default_threads();

  auto common = [&](CLI::App* c) {
    c->add_option("--scenario", o.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "Top-level random seed");
    c->add_option("--out", o.out, "Output directory");
    c->add_option("--threads", o.threads, "Worker threads (default: CSBRM_THREADS or core count)")
        ->check(CLI::PositiveNumber);
    c->add_option("--roadmap", o.roadmap, "Roadmap JSON (default: <out>/roadmap.json)");
  };
  CLI::App* b = app.add_subcommand("build", "Sample nodes and build the roadmap");
  common(b);
  b->add_option("--mode", o.mode, "Node mode")->check(CLI::IsMember({"stationary", "nonstationary"}));
  CLI::App* p = app.add_subcommand("plan", "Search the roadmap and write result.json");
  common(p);
  p->add_option("--start", o.start, "Start node id")->check(CLI::NonNegativeNumber);
  p->add_option("--goal", o.goal, "Goal node id")->check(CLI::NonNegativeNumber);
  CLI::App* s = app.add_subcommand("simulate", "Closed-loop Monte Carlo along the planned path");
  common(s);
  s->add_option("--rollouts", o.rollouts, "Number of rollouts")->check(CLI::PositiveNumber);
  s->add_option("--result", o.result, "Result JSON (default: <out>/result.json)");
  CLI::App* v = app.add_subcommand("verify", "Check covariance concatenation on the planned and random paths");
  common(v);
  v->add_option("--paths", o.paths, "Random paths to check")->check(CLI::NonNegativeNumber);
  v->add_option("--result", o.result, "Result JSON (default: <out>/result.json)");
  CLI::App* f = app.add_subcommand("export-figures-data", "Write plotting input figures.json");
  common(f);
  f->add_option("--result", o.result, "Result JSON (default: <out>/result.json)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*b) return build(o, out);
    if (*p) return plan(o, out);
    if (*s) return simulate(o, out);
    if (*v) return verify(o, out);
    return export_figures(o, out);
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

}  // namespace csbrm::cli
