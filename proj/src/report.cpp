#include "csbrm/report.hpp"

#include "csbrm/rng.hpp"

#include <algorithm>
#include <limits>

namespace csbrm {

using json_io::Json;

namespace {

constexpr const char* kResultSchemaVersion = "1.0";

Json costs_json(const EdgeCosts& c) {
  return Json{{"mean", c.mean},
              {"cov", c.cov},
              {"collision_probability", c.collision_probability},
              {"total", c.total}};
}

Json positions_json(const std::vector<Vec>& states, int np) {
  Json out = Json::array();
  for (const auto& x : states) out.push_back(json_io::to_json(Vec(x.head(np))));
  return out;
}

Json head(const Json& a, int n) {
  Json out = Json::array();
  for (int i = 0; i < n; ++i) out.push_back(a.at(i));
  return out;
}

Json arrivals_json(const ConcatenationReport& r) {
  Json a = Json::array();
  for (const auto& n : r.arrivals) {
    a.push_back(Json{{"node", n.node}, {"est_margin", n.est_margin}, {"err_margin", n.err_margin}});
  }
  return a;
}

}  // namespace

Json position_ellipse_json(const Mat& state_cov, int np) {
  const Mat block = state_cov.topLeftCorner(np, np);
  if (np == 2) {
    const Ellipse e = sigma3_ellipse(block);
    return Json{{"major", e.major}, {"minor", e.minor}, {"angle", e.angle}};
  }
  const Ellipsoid e = sigma3_ellipsoid(block);
  return Json{{"semi_axes", json_io::to_json(e.semi_axes)}, {"axes", json_io::to_json(e.axes)}};
}

Json plan_result_json(const Scenario& sc, const RoadmapGraph& g, int start, int goal) {
  const PathResult path = shortest_path(g, start, goal);
  const int np = sc.position_dim();
  Json j;
  j["schema_version"] = kResultSchemaVersion;
  j["kind"] = "csbrm-result";
  j["scenario"] = Json{{"name", sc.name}, {"hash", hex64(g.scenario_hash)}};
  j["roadmap"] = Json{{"seed", g.seed},
                      {"mode", to_string(g.mode)},
                      {"nodes", g.nodes.size()},
                      {"edges", g.edges.size()}};
  j["query"] = Json{{"start", start}, {"goal", goal}, {"collision_threshold", sc.collision_threshold}};
  j["found"] = path.found;
  if (!path.found) return j;

  const auto exec = predict_path(g, path.nodes);
  EdgeCosts sum;
  Json edges = Json::array();
  for (const auto& x : exec) {
    const RoadmapEdge& e = g.edges[x.edge];
    sum.mean += e.costs.mean;
    sum.cov += e.costs.cov;
    sum.collision_probability += e.costs.collision_probability;
    Json steps = Json::array();
    for (int k = 0; k <= e.controller.horizon; ++k) {
      const Mat p = x.est_cov[k] + x.err_cov[k];
      steps.push_back(Json{{"k", k},
                           {"mean", json_io::to_json(e.controller.mean_states[k])},
                           {"position_cov", json_io::to_json(Mat(p.topLeftCorner(np, np)))},
                           {"ellipse", position_ellipse_json(p, np)}});
    }
    edges.push_back(Json{{"from", e.from},
                         {"to", e.to},
                         {"costs", costs_json(e.costs)},
                         {"cnt", Json{{"iterations", e.cnt_iterations}, {"residuals", e.cnt_residuals}}},
                         {"steps", std::move(steps)}});
  }
  Json nodes = Json::array();
  for (int id : path.nodes) {
    const BeliefNode& n = g.nodes[id];
    nodes.push_back(Json{{"id", id},
                         {"mean", json_io::to_json(n.mean)},
                         {"est_post", json_io::to_json(n.est_post)},
                         {"err_post", json_io::to_json(n.err_post)},
                         {"ellipse", position_ellipse_json(n.state_cov(), np)}});
  }
  const EdgeWeights& w = sc.roadmap.weights;
  const ConcatenationReport rep = verify_concatenation(g, path.nodes);
  j["path"] = path.nodes;
  j["cost"] = Json{{"total", path.cost},
                   {"mean", sum.mean},
                   {"cov", sum.cov},
                   {"collision_probability_sum", sum.collision_probability},
                   {"weighted", Json{{"mean", w.mean * sum.mean},
                                     {"cov", w.cov * sum.cov},
                                     {"collision", w.collision * sum.collision_probability}}}};
  j["edges"] = std::move(edges);
  j["nodes"] = std::move(nodes);
  j["concatenation"] = Json{{"worst", rep.worst()}, {"arrivals", arrivals_json(rep)}};
  return j;
}

Json simulation_json(const Scenario& sc, const PathRollouts& r, std::uint64_t seed, int keep) {
  const int np = sc.position_dim();
  Json traj = Json::array();
  const int n = std::min<int>(keep, static_cast<int>(r.states.size()));
  for (int m = 0; m < n; ++m) {
    traj.push_back(Json{{"collided", static_cast<bool>(r.collided[m])}, {"positions", positions_json(r.states[m], np)}});
  }
  Json arrival = Json::array();
  for (const auto& c : r.arrival_cov) arrival.push_back(c.size() ? json_io::to_json(c) : Json());
  return Json{{"rollouts", r.states.size()},
              {"seed", seed},
              {"collision_probability", r.collision_probability},
              {"threshold", sc.collision_threshold},
              {"within_threshold", r.collision_probability <= sc.collision_threshold},
              {"arrival_cov", std::move(arrival)},
              {"trajectories", std::move(traj)}};
}

VerifyOutcome verify_paths_json(const RoadmapGraph& g, const std::vector<std::vector<int>>& paths,
                                double tol) {
  VerifyOutcome out;
  double worst = std::numeric_limits<double>::infinity();
  Json list = Json::array();
  for (const auto& p : paths) {
    const ConcatenationReport r = verify_concatenation(g, p);
    worst = std::min(worst, r.worst());
    out.holds = out.holds && r.holds(tol);
    list.push_back(Json{{"nodes", p}, {"worst", r.worst()}, {"arrivals", arrivals_json(r)}});
  }
  out.report = Json{{"schema_version", kResultSchemaVersion},
                    {"kind", "csbrm-verify"},
                    {"tolerance", tol},
                    {"holds", out.holds},
                    {"worst", paths.empty() ? Json() : Json(worst)},
                    {"paths", std::move(list)}};
  return out;
}

std::vector<std::vector<int>> random_paths(const RoadmapGraph& g, int count, std::uint64_t seed) {
  std::vector<std::vector<int>> out;
  if (g.edges.empty()) return out;
  std::vector<std::vector<int>> next(g.nodes.size());
  for (const auto& e : g.edges) next[e.from].push_back(e.to);
  auto rng = make_rng(seed, "verify-paths");
  for (int i = 0; i < count; ++i) {
    const RoadmapEdge& first = g.edges[std::uniform_int_distribution<std::size_t>(0, g.edges.size() - 1)(rng)];
    std::vector<int> p{first.from, first.to};
    const int length = std::uniform_int_distribution<int>(1, 3)(rng);
    while (static_cast<int>(p.size()) <= length && !next[p.back()].empty()) {
      const auto& options = next[p.back()];
      p.push_back(options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Json figures_json(const Scenario& sc, const RoadmapGraph& g, const std::optional<Json>& result) {
  const int np = sc.position_dim();
  const Json scenario = scenario_to_json(sc);
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back(Json{{"id", n.id},
                         {"position", json_io::to_json(Vec(n.mean.head(np)))},
                         {"ellipse", position_ellipse_json(n.state_cov(), np)}});
  }
  Json edges = Json::array();
  for (const auto& e : g.edges) {
    edges.push_back(Json{{"from", e.from},
                         {"to", e.to},
                         {"collision_probability", e.costs.collision_probability},
                         {"positions", positions_json(e.controller.mean_states, np)}});
  }
  Json j;
  j["schema_version"] = kResultSchemaVersion;
  j["kind"] = "csbrm-figures";
  j["dim"] = np;
  j["scenario"] = sc.name;
  j["world"] = scenario["world"];
  j["obstacles"] = scenario["obstacles"];
  j["landmarks"] = scenario["sensing"]["landmarks"];
  j["roadmap"] = Json{{"mode", to_string(g.mode)}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};

  Json plan;
  Json cnt = Json::array();
  if (result && result->value("found", false)) {
    Json steps = Json::array();
    for (const auto& e : result->at("edges")) {
      for (const auto& s : e.at("steps")) {
        steps.push_back(Json{{"from", e.at("from")},
                             {"k", s.at("k")},
                             {"position", head(s.at("mean"), np)},
                             {"ellipse", s.at("ellipse")}});
      }
      cnt.push_back(Json{{"from", e.at("from")}, {"to", e.at("to")}, {"residuals", e.at("cnt").at("residuals")}});
    }
    plan = Json{{"path", result->at("path")}, {"cost", result->at("cost")}, {"steps", std::move(steps)}};
    if (result->contains("simulation")) {
      const Json& sim = result->at("simulation");
      plan["rollouts"] = Json{{"collision_probability", sim.at("collision_probability")},
                              {"trajectories", sim.at("trajectories")}};
    }
  }
  j["plan"] = std::move(plan);
  j["cnt"] = std::move(cnt);
  return j;
}

}  // namespace csbrm
