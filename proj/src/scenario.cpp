#include "csbrm/scenario.hpp"

#include "csbrm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

namespace csbrm {

using json_io::Json;

namespace {

double segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

// Crossing-number test; points on the boundary may land on either side.
bool polygon_contains(const std::vector<Vec>& v, const Vec& p) {
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const double yi = v[i](1), yj = v[j](1);
    if ((yi > p(1)) != (yj > p(1))) {
      const double x = v[j](0) + (p(1) - yj) * (v[i](0) - v[j](0)) / (yi - yj);
      if (p(0) < x) inside = !inside;
    }
  }
  return inside;
}

// Object reader that records the field path and rejects unknown keys.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  const Json& get(const std::string& key) {
    if (!has(key)) throw ValidationError(at(key) + ": missing");
    return j_.at(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    if (!j_.at(key).is_number()) throw ValidationError(at(key) + ": expected a number");
    return j_.at(key).get<double>();
  }
  int integer(const std::string& key, int def) {
    if (!has(key)) return def;
    if (!j_.at(key).is_number_integer()) throw ValidationError(at(key) + ": expected an integer");
    return j_.at(key).get<int>();
  }
  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    if (!j_.at(key).is_boolean()) throw ValidationError(at(key) + ": expected true or false");
    return j_.at(key).get<bool>();
  }
  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    if (!j_.at(key).is_string()) throw ValidationError(at(key) + ": expected a string");
    return j_.at(key).get<std::string>();
  }
  Vec vec(const std::string& key, const Vec& def) {
    if (!has(key)) return def;
    return json_io::vec_from_json(j_.at(key), at(key));
  }
  Reader object(const std::string& key) {
    static const Json empty = Json::object();
    return has(key) ? Reader(j_.at(key), at(key)) : Reader(empty, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(at(it.key()) + ": unknown field");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Symmetric matrix given either as {rows, cols, data} or as a diagonal list.
Mat read_cov(const Json& j, const std::string& path) {
  if (j.is_array()) return json_io::vec_from_json(j, path).asDiagonal();
  return json_io::mat_from_json(j, path);
}

EigenRange read_range(Reader& r, const std::string& key, EigenRange def) {
  if (!r.has(key)) return def;
  const Vec v = json_io::vec_from_json(r.get(key), r.at(key));
  if (v.size() != 2) throw ValidationError(r.at(key) + ": expected [lo, hi]");
  return {v(0), v(1)};
}

NodeSpec read_node(Reader r) {
  NodeSpec n;
  n.mean = json_io::vec_from_json(r.get("mean"), r.at("mean"));
  n.est_cov = read_cov(r.get("est_cov"), r.at("est_cov"));
  n.err_cov = read_cov(r.get("err_cov"), r.at("err_cov"));
  r.finish();
  return n;
}

Json node_json(const NodeSpec& n) {
  return Json{{"mean", json_io::to_json(n.mean)},
              {"est_cov", json_io::to_json(n.est_cov)},
              {"err_cov", json_io::to_json(n.err_cov)}};
}

Json range_json(const EigenRange& r) { return Json::array({r.lo, r.hi}); }

void check_node(const NodeSpec& n, int nx, const std::string& path) {
  if (n.mean.size() != nx) throw ValidationError(path + ".mean: expected " + std::to_string(nx) + " entries");
  for (const auto& [m, name] : {std::pair{&n.est_cov, "est_cov"}, std::pair{&n.err_cov, "err_cov"}}) {
    if (m->rows() != nx || m->cols() != nx) {
      throw ValidationError(path + "." + name + ": expected " + std::to_string(nx) + "x" +
                            std::to_string(nx));
    }
    if (linalg::asymmetry(*m) > 1e-12 || !linalg::is_psd(*m, 0.0)) {
      throw ValidationError(path + "." + name + ": must be symmetric positive semidefinite");
    }
  }
}

void check_range(const EigenRange& r, const std::string& path) {
  if (!(r.lo > 0.0) || !(r.hi >= r.lo)) throw ValidationError(path + ": need 0 < lo <= hi");
}

}  // namespace

Obstacle Obstacle::polygon(std::vector<Vec> vertices) {
  Obstacle o;
  o.shape = Shape::Polygon;
  o.vertices = std::move(vertices);
  return o;
}

Obstacle Obstacle::sphere(Vec center, double radius) {
  Obstacle o;
  o.shape = Shape::Sphere;
  o.center = std::move(center);
  o.radius = radius;
  return o;
}

bool Obstacle::contains(const Vec& p, double inflation) const {
  if (p.size() != dim()) throw DimensionError("obstacle test: position has wrong dimension");
  if (shape == Shape::Sphere) return (p - center).norm() <= radius + inflation;
  if (polygon_contains(vertices, p)) return true;
  if (inflation <= 0.0) return false;
  for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
    if (segment_distance(p, vertices[j], vertices[i]) <= inflation) return true;
  }
  return false;
}

Vec Obstacle::lower() const {
  if (shape == Shape::Sphere) return center.array() - radius;
  Vec lo = vertices.front();
  for (const auto& v : vertices) lo = lo.cwiseMin(v);
  return lo;
}

Vec Obstacle::upper() const {
  if (shape == Shape::Sphere) return center.array() + radius;
  Vec hi = vertices.front();
  for (const auto& v : vertices) hi = hi.cwiseMax(v);
  return hi;
}

std::string to_string(NodeMode mode) {
  return mode == NodeMode::Stationary ? "stationary" : "nonstationary";
}

NodeMode node_mode_from_string(const std::string& name) {
  if (name == "stationary") return NodeMode::Stationary;
  if (name == "nonstationary") return NodeMode::Nonstationary;
  throw ValidationError("unknown node mode '" + name + "'");
}

void Scenario::validate() const {
  model.validate();
  const int nx = model.state_dim(), nu = model.control_dim(), np = position_dim();
  if (horizon < 1) throw ValidationError("scenario.model.horizon: must be >= 1");
  if (sensing.landmarks.empty()) throw ValidationError("scenario.sensing.landmarks: need at least one landmark");
  for (std::size_t i = 0; i < sensing.landmarks.size(); ++i) {
    if (sensing.landmarks[i].size() != np) {
      throw ValidationError("scenario.sensing.landmarks[" + std::to_string(i) + "]: expected " +
                            std::to_string(np) + " coordinates");
    }
  }
  if (!(sensing.eta_p > 0.0) || !(sensing.eta_v > 0.0) || !(sensing.eta > 0.0)) {
    throw ValidationError("scenario.sensing: noise intensities must be positive");
  }
  for (Eigen::Index i = 0; i < model.noise_gains.size(); ++i) {
    if (!(model.noise_gains(i) > 0.0)) throw ValidationError("scenario.model.noise_gain: must be positive");
  }
  if (world_lower.size() != np || world_upper.size() != np) {
    throw ValidationError("scenario.world: bounds need " + std::to_string(np) + " coordinates");
  }
  if (!((world_upper - world_lower).array() > 0.0).all()) {
    throw ValidationError("scenario.world: upper must exceed lower");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const std::string path = "scenario.obstacles[" + std::to_string(i) + "]";
    const Obstacle& o = obstacles[i];
    if (o.dim() != np) throw ValidationError(path + ": shape does not match the world dimension");
    if (o.shape == Obstacle::Shape::Polygon) {
      if (o.vertices.size() < 3) throw ValidationError(path + ": polygon needs at least 3 vertices");
      for (const auto& v : o.vertices) {
        if (v.size() != 2) throw ValidationError(path + ": vertices must be 2-D");
      }
    } else if (o.center.size() != 3 || !(o.radius > 0.0)) {
      throw ValidationError(path + ": sphere needs a 3-D center and a positive radius");
    }
    if ((o.lower().array() < world_lower.array()).any() ||
        (o.upper().array() > world_upper.array()).any()) {
      throw ValidationError(path + ": outside the world bounds");
    }
  }
  if (q_diag.size() != nx || (q_diag.array() < 0.0).any()) {
    throw ValidationError("scenario.cost.Q: need " + std::to_string(nx) + " nonnegative entries");
  }
  if (r_diag.size() != nu || !(r_diag.array() > 0.0).all()) {
    throw ValidationError("scenario.cost.R: need " + std::to_string(nu) + " positive entries");
  }

  const SamplingConfig& s = sampling;
  if (s.positions < 0) throw ValidationError("scenario.sampling.positions: must be >= 0");
  if (s.velocities_per_position < 0) {
    throw ValidationError("scenario.sampling.velocities_per_position: must be >= 0");
  }
  if (!(s.speed_max >= 0.0)) throw ValidationError("scenario.sampling.speed_max: must be >= 0");
  if (s.max_attempts < 1) throw ValidationError("scenario.sampling.max_attempts: must be >= 1");
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (s.grid[i].size() != nx) {
      throw ValidationError("scenario.sampling.grid[" + std::to_string(i) + "]: expected " +
                            std::to_string(nx) + " entries");
    }
  }
  check_range(s.est_position, "scenario.sampling.est_cov_eigs.position");
  check_range(s.est_rest, "scenario.sampling.est_cov_eigs.rest");
  check_range(s.err_position, "scenario.sampling.err_cov_eigs.position");
  check_range(s.err_rest, "scenario.sampling.err_cov_eigs.rest");

  const RoadmapSettings& r = roadmap;
  if (!(r.neighbor_radius > 0.0)) throw ValidationError("scenario.roadmap.neighbor_radius: must be positive");
  if (r.mc_samples < 1) throw ValidationError("scenario.roadmap.mc_samples: must be >= 1");
  if (r.weights.mean < 0.0 || r.weights.cov < 0.0 || r.weights.collision < 0.0) {
    throw ValidationError("scenario.roadmap.weights: must be nonnegative");
  }
  if (r.admission_tol < 0.0 || r.inflation < 0.0) {
    throw ValidationError("scenario.roadmap: admission_tol and inflation must be >= 0");
  }
  if (!(r.cnt.tol > 0.0) || r.cnt.max_iter < 1) {
    throw ValidationError("scenario.roadmap.cnt: need tol > 0 and max_iter >= 1");
  }
  check_node(start, nx, "scenario.query.start");
  check_node(goal, nx, "scenario.query.goal");
  if (!(collision_threshold >= 0.0 && collision_threshold <= 1.0)) {
    throw ValidationError("scenario.query.collision_threshold: must lie in [0, 1]");
  }
}

bool collision(const Scenario& sc, const Vec& position, double inflation) {
  if (position.size() != sc.position_dim()) {
    throw DimensionError("collision: position has " + std::to_string(position.size()) +
                         " coordinates, world has " + std::to_string(sc.position_dim()));
  }
  return std::any_of(sc.obstacles.begin(), sc.obstacles.end(),
                     [&](const Obstacle& o) { return o.contains(position, inflation); });
}

CostWeights edge_weights(const Scenario& sc, const Vec& from, const Vec& to) {
  return CostWeights::uniform(sc.horizon, sc.q_diag.asDiagonal(), sc.r_diag.asDiagonal(),
                              straight_line_reference(from, to, sc.horizon));
}

Scenario load_scenario(const Json& doc) {
  Reader top(doc, "scenario");
  const std::string version = top.string("schema_version", kScenarioSchemaVersion);
  if (std::atoi(version.c_str()) != kScenarioSchemaMajor) {
    throw ValidationError("scenario.schema_version: unsupported version " + version);
  }

  Scenario sc;
  sc.name = top.string("name", "");

  Reader model = top.object("model");
  const ModelKind kind = model_kind_from_string(model.string("kind", "double_integrator_2d"));
  const double dt = model.number("dt", 0.2);
  const double gain = model.number("noise_gain", 0.1);
  sc.model = kind == ModelKind::FixedWing ? NonlinearModel::fixed_wing(dt, gain)
                                          : NonlinearModel::double_integrator_2d(dt, gain);
  sc.model.gravity = model.number("gravity", sc.model.gravity);
  sc.horizon = model.integer("horizon", 20);
  model.finish();
  const int nx = sc.model.state_dim(), np = sc.position_dim();

  Reader sensing = top.object("sensing");
  sc.sensing.landmarks = json_io::vecs_from_json(sensing.get("landmarks"), sensing.at("landmarks"));
  sc.sensing.eta_p = sensing.number("eta_p", 0.1);
  sc.sensing.eta_v = sensing.number("eta_v", 0.2);
  sc.sensing.eta = sensing.number("eta", 0.05);
  sensing.finish();

  Reader world = top.object("world");
  sc.world_lower = world.vec("lower", Vec::Zero(np));
  sc.world_upper = world.vec("upper", Vec::Constant(np, 10.0));
  world.finish();

  if (top.has("obstacles")) {
    const Json& obs = top.get("obstacles");
    if (!obs.is_array()) throw ValidationError("scenario.obstacles: expected an array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      Reader o(obs[i], "scenario.obstacles[" + std::to_string(i) + "]");
      const std::string type = o.string("type", np == 2 ? "polygon" : "sphere");
      if (type == "polygon") {
        sc.obstacles.push_back(
            Obstacle::polygon(json_io::vecs_from_json(o.get("vertices"), o.at("vertices"))));
      } else if (type == "sphere") {
        sc.obstacles.push_back(Obstacle::sphere(json_io::vec_from_json(o.get("center"), o.at("center")),
                                                o.number("radius", 0.0)));
      } else {
        throw ValidationError(o.at("type") + ": unknown obstacle type '" + type + "'");
      }
      o.finish();
    }
  }

  Reader cost = top.object("cost");
  const bool fw = kind == ModelKind::FixedWing;
  sc.q_diag = cost.vec("Q", fw ? Vec((Vec(4) << 1.0, 1.0, 1.0, 0.0).finished()) : Vec::Zero(nx));
  sc.r_diag = cost.vec("R", fw ? Vec((Vec(3) << 0.1, 1.0, 1.0).finished())
                               : Vec::Ones(sc.model.control_dim()));
  cost.finish();

  Reader smp = top.object("sampling");
  SamplingConfig& s = sc.sampling;
  s.mode = node_mode_from_string(smp.string("mode", to_string(s.mode)));
  s.positions = smp.integer("positions", s.positions);
  s.velocities_per_position = smp.integer("velocities_per_position", s.velocities_per_position);
  s.include_stationary = smp.boolean("include_stationary", s.include_stationary);
  s.speed_max = smp.number("speed_max", s.speed_max);
  if (smp.has("grid")) s.grid = json_io::vecs_from_json(smp.get("grid"), smp.at("grid"));
  {
    Reader e = smp.object("est_cov_eigs");
    s.est_position = read_range(e, "position", s.est_position);
    s.est_rest = read_range(e, "rest", s.est_rest);
    e.finish();
    Reader r = smp.object("err_cov_eigs");
    s.err_position = read_range(r, "position", s.err_position);
    s.err_rest = read_range(r, "rest", s.err_rest);
    r.finish();
  }
  s.max_attempts = smp.integer("max_attempts", s.max_attempts);
  smp.finish();

  Reader rm = top.object("roadmap");
  RoadmapSettings& r = sc.roadmap;
  r.neighbor_radius = rm.number("neighbor_radius", r.neighbor_radius);
  r.mc_samples = rm.integer("mc_samples", r.mc_samples);
  {
    Reader w = rm.object("weights");
    r.weights.mean = w.number("mean", r.weights.mean);
    r.weights.cov = w.number("cov", r.weights.cov);
    r.weights.collision = w.number("collision", r.weights.collision);
    w.finish();
  }
  r.admission_tol = rm.number("admission_tol", r.admission_tol);
  r.inflation = rm.number("inflation", r.inflation);
  {
    Reader c = rm.object("cnt");
    r.cnt.tol = c.number("tol", r.cnt.tol);
    r.cnt.max_iter = c.integer("max_iter", r.cnt.max_iter);
    c.finish();
  }
  rm.finish();

  Reader q = top.object("query");
  sc.start = read_node(q.object("start"));
  sc.goal = read_node(q.object("goal"));
  sc.collision_threshold = q.number("collision_threshold", sc.collision_threshold);
  q.finish();
  top.finish();

  sc.validate();
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  return load_scenario(json_io::read_file(path));
}

Json scenario_to_json(const Scenario& sc) {
  Json obstacles = Json::array();
  for (const auto& o : sc.obstacles) {
    if (o.shape == Obstacle::Shape::Polygon) {
      obstacles.push_back(Json{{"type", "polygon"}, {"vertices", json_io::to_json(o.vertices)}});
    } else {
      obstacles.push_back(
          Json{{"type", "sphere"}, {"center", json_io::to_json(o.center)}, {"radius", o.radius}});
    }
  }
  const SamplingConfig& s = sc.sampling;
  const RoadmapSettings& r = sc.roadmap;
  Json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = sc.name;
  j["model"] = Json{{"kind", to_string(sc.model.kind)},
                    {"dt", sc.model.dt},
                    {"noise_gain", sc.model.noise_gains(0)},
                    {"gravity", sc.model.gravity},
                    {"horizon", sc.horizon}};
  j["sensing"] = Json{{"landmarks", json_io::to_json(sc.sensing.landmarks)},
                      {"eta_p", sc.sensing.eta_p},
                      {"eta_v", sc.sensing.eta_v},
                      {"eta", sc.sensing.eta}};
  j["world"] = Json{{"lower", json_io::to_json(sc.world_lower)},
                    {"upper", json_io::to_json(sc.world_upper)}};
  j["obstacles"] = std::move(obstacles);
  j["cost"] = Json{{"Q", json_io::to_json(sc.q_diag)}, {"R", json_io::to_json(sc.r_diag)}};
  j["sampling"] = Json{{"mode", to_string(s.mode)},
                       {"positions", s.positions},
                       {"velocities_per_position", s.velocities_per_position},
                       {"include_stationary", s.include_stationary},
                       {"speed_max", s.speed_max},
                       {"grid", json_io::to_json(s.grid)},
                       {"est_cov_eigs", Json{{"position", range_json(s.est_position)},
                                             {"rest", range_json(s.est_rest)}}},
                       {"err_cov_eigs", Json{{"position", range_json(s.err_position)},
                                             {"rest", range_json(s.err_rest)}}},
                       {"max_attempts", s.max_attempts}};
  j["roadmap"] = Json{{"neighbor_radius", r.neighbor_radius},
                      {"mc_samples", r.mc_samples},
                      {"weights", Json{{"mean", r.weights.mean},
                                       {"cov", r.weights.cov},
                                       {"collision", r.weights.collision}}},
                      {"admission_tol", r.admission_tol},
                      {"inflation", r.inflation},
                      {"cnt", Json{{"tol", r.cnt.tol}, {"max_iter", r.cnt.max_iter}}}};
  j["query"] = Json{{"start", node_json(sc.start)},
                    {"goal", node_json(sc.goal)},
                    {"collision_threshold", sc.collision_threshold}};
  return j;
}

std::uint64_t scenario_hash(const Scenario& sc) { return fnv1a(scenario_to_json(sc).dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Ellipse sigma3_ellipse(const Mat& cov2) {
  linalg::require_square(cov2, 2, "sigma3_ellipse");
  const Eigen::SelfAdjointEigenSolver<Mat> es(linalg::symmetrize(cov2));
  const Vec lam = es.eigenvalues().cwiseMax(0.0);
  Ellipse e;
  e.major = 3.0 * std::sqrt(lam(1));
  e.minor = 3.0 * std::sqrt(lam(0));
  if (lam(1) - lam(0) <= 1e-12 * std::max(1.0, lam(1))) return e;
  const Vec axis = es.eigenvectors().col(1);
  double a = std::atan2(axis(1), axis(0));
  if (a > std::numbers::pi / 2) a -= std::numbers::pi;
  if (a <= -std::numbers::pi / 2) a += std::numbers::pi;
  e.angle = a;
  return e;
}

Ellipsoid sigma3_ellipsoid(const Mat& cov3) {
  linalg::require_square(cov3, 3, "sigma3_ellipsoid");
  const Eigen::SelfAdjointEigenSolver<Mat> es(linalg::symmetrize(cov3));
  Ellipsoid e;
  e.semi_axes = (3.0 * es.eigenvalues().cwiseMax(0.0).cwiseSqrt()).reverse();
  e.axes = es.eigenvectors().rowwise().reverse();
  return e;
}

}  // namespace csbrm
