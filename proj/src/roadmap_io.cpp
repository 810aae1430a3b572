#include "csbrm/rng.hpp"
#include "csbrm/roadmap.hpp"

#include <cstdlib>

namespace csbrm {

using json_io::Json;

namespace {

constexpr const char* kRoadmapSchemaVersion = "1.0";

Json costs_json(const EdgeCosts& c) {
  return Json{{"mean", c.mean},
              {"cov", c.cov},
              {"collision_probability", c.collision_probability},
              {"total", c.total}};
}

EdgeCosts costs_from_json(const Json& j) {
  EdgeCosts c;
  c.mean = j.at("mean").get<double>();
  c.cov = j.at("cov").get<double>();
  c.collision_probability = j.at("collision_probability").get<double>();
  c.total = j.at("total").get<double>();
  return c;
}

}  // namespace

Json roadmap_to_json(const Scenario& sc, const RoadmapGraph& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back(Json{{"id", n.id},
                         {"mean", json_io::to_json(n.mean)},
                         {"est_prior", json_io::to_json(n.est_prior)},
                         {"err_prior", json_io::to_json(n.err_prior)},
                         {"est_post", json_io::to_json(n.est_post)},
                         {"err_post", json_io::to_json(n.err_post)}});
  }
  Json edges = Json::array();
  for (const auto& e : g.edges) {
    Json gains = Json::array();
    for (int k = 0; k < e.controller.horizon; ++k) gains.push_back(json_io::to_json(e.controller.gain_block(k, k)));
    Json kf = Json::array();
    for (const auto& l : e.filter.gain) kf.push_back(json_io::to_json(l));
    edges.push_back(Json{
        {"from", e.from},
        {"to", e.to},
        {"seed", e.seed},
        {"target", json_io::to_json(e.target)},
        {"costs", costs_json(e.costs)},
        {"cnt", Json{{"iterations", e.cnt_iterations}, {"residuals", e.cnt_residuals}}},
        {"nominal", Json{{"states", json_io::to_json(e.nominal.states)},
                         {"controls", json_io::to_json(e.nominal.controls)}}},
        {"mean_states", json_io::to_json(e.controller.mean_states)},
        {"mean_controls", json_io::to_json(e.controller.mean_controls)},
        {"feedback_step_gains", std::move(gains)},
        {"filter_gains", std::move(kf)}});
  }
  Json attempts = Json::array();
  for (const auto& [pair, count] : g.attempts) attempts.push_back(Json::array({pair.first, pair.second, count}));
  Json rejections = Json::object();
  for (const auto& [gate, count] : g.rejections) rejections[gate] = count;

  Json j;
  j["schema_version"] = kRoadmapSchemaVersion;
  j["kind"] = "csbrm-roadmap";
  j["scenario_hash"] = hex64(scenario_hash(sc));
  j["seed"] = g.seed;
  j["mode"] = to_string(g.mode);
  j["config"] = scenario_to_json(sc)["roadmap"];
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  j["attempts"] = std::move(attempts);
  j["rejections"] = std::move(rejections);
  return j;
}

RoadmapGraph roadmap_from_json(const Scenario& sc, const Json& doc) {
  try {
    if (doc.value("kind", "") != "csbrm-roadmap") throw ValidationError("roadmap: not a roadmap document");
    const std::string version = doc.at("schema_version").get<std::string>();
    if (std::atoi(version.c_str()) != 1) throw ValidationError("roadmap: unsupported schema_version " + version);
    if (doc.at("scenario_hash").get<std::string>() != hex64(scenario_hash(sc))) {
      throw ValidationError("roadmap: built from a different scenario (hash mismatch)");
    }
    RoadmapGraph g;
    g.seed = doc.at("seed").get<std::uint64_t>();
    g.mode = node_mode_from_string(doc.at("mode").get<std::string>());
    g.scenario_hash = scenario_hash(sc);
    const Json& nodes = doc.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string p = "roadmap.nodes[" + std::to_string(i) + "]";
      const Json& n = nodes[i];
      if (n.at("id").get<int>() != static_cast<int>(i)) throw ValidationError(p + ".id: out of order");
      g.nodes.push_back(make_node(sc, static_cast<int>(i), json_io::vec_from_json(n.at("mean"), p + ".mean"),
                                  json_io::mat_from_json(n.at("est_prior"), p + ".est_prior"),
                                  json_io::mat_from_json(n.at("err_prior"), p + ".err_prior")));
    }
    const Json& edges = doc.at("edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string p = "roadmap.edges[" + std::to_string(i) + "]";
      const Json& e = edges[i];
      const int from = e.at("from").get<int>(), to = e.at("to").get<int>();
      if (from < 0 || to < 0 || from >= static_cast<int>(g.nodes.size()) ||
          to >= static_cast<int>(g.nodes.size())) {
        throw ValidationError(p + ": node id out of range");
      }
      NominalTrajectory nom;
      nom.states = json_io::vecs_from_json(e.at("nominal").at("states"), p + ".nominal.states");
      nom.controls = json_io::vecs_from_json(e.at("nominal").at("controls"), p + ".nominal.controls");
      RoadmapEdge edge = rebuild_edge(sc, g.nodes[from], g.nodes[to],
                                      json_io::vec_from_json(e.at("target"), p + ".target"),
                                      std::move(nom), e.at("seed").get<std::uint64_t>(),
                                      costs_from_json(e.at("costs")));
      const Vec stored = json_io::vec_from_json(e.at("mean_controls"), p + ".mean_controls");
      if (stored.size() != edge.controller.mean_controls.size() ||
          (stored - edge.controller.mean_controls).cwiseAbs().maxCoeff() > 1e-9) {
        throw ValidationError(p + ": rebuilt mean controls differ from the stored ones");
      }
      edge.cnt_iterations = e.at("cnt").at("iterations").get<int>();
      edge.cnt_residuals = e.at("cnt").at("residuals").get<std::vector<double>>();
      g.edges.push_back(std::move(edge));
    }
    for (const auto& a : doc.at("attempts")) g.attempts[{a[0].get<int>(), a[1].get<int>()}] = a[2].get<int>();
    for (const auto& [gate, count] : doc.at("rejections").items()) g.rejections[gate] = count.get<int>();
    return g;
  } catch (const Json::exception& ex) {
    throw ValidationError(std::string("roadmap: malformed document: ") + ex.what());
  }
}

}  // namespace csbrm
