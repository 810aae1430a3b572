#include <doctest.h>

#include "csbrm/scenario.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

using namespace csbrm;
using json_io::Json;

namespace {

Json minimal_2d() {
  return Json::parse(R"({
    "sensing": {"landmarks": [[5, 5]]},
    "query": {
      "start": {"mean": [1, 1, 0, 0], "est_cov": [0.1, 0.1, 0.1, 0.1], "err_cov": [0.1, 0.1, 0.1, 0.1]},
      "goal": {"mean": [9, 9, 0, 0], "est_cov": [0.1, 0.1, 0.1, 0.1], "err_cov": [0.1, 0.1, 0.1, 0.1]}
    }
  })");
}

std::string validation_message(const Json& doc) {
  try {
    load_scenario(doc);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

// Half-plane test for a counter-clockwise convex polygon.
bool raster_inside(const std::vector<Vec>& poly, double x, double y) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec& a = poly[i];
    const Vec& b = poly[(i + 1) % poly.size()];
    const double cross = (b(0) - a(0)) * (y - a(1)) - (b(1) - a(1)) * (x - a(0));
    if (cross < 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("minimal document gets the documented defaults") {
  const Scenario sc = load_scenario(minimal_2d());
  CHECK(sc.model.kind == ModelKind::DoubleIntegrator2D);
  CHECK(sc.sensing.eta_p == 0.1);
  CHECK(sc.sensing.eta_v == 0.2);
  CHECK(sc.model.dt == 0.2);
  CHECK(sc.horizon == 20);
  CHECK(sc.roadmap.mc_samples == 500);
  CHECK(sc.roadmap.weights.mean == 1.0);
  CHECK(sc.roadmap.weights.cov == 1.0);
  CHECK(sc.roadmap.weights.collision == 100.0);
  CHECK(sc.sampling.est_position.lo == 0.01);
  CHECK(sc.sampling.est_position.hi == 0.25);
  CHECK(sc.world_upper.isApprox(Vec::Constant(2, 10.0)));
  CHECK(sc.start.est_cov.isApprox(0.1 * Mat::Identity(4, 4)));
}

TEST_CASE("validation errors name the offending field") {
  Json doc = minimal_2d();
  doc["obstacles"] = Json::parse(R"([
    {"type": "polygon", "vertices": [[2, 2], [3, 2], [3, 3]]},
    {"type": "polygon", "vertices": [[8, 8], [12, 8], [12, 9]]}
  ])");
  CHECK(validation_message(doc).find("scenario.obstacles[1]") != std::string::npos);

  doc = minimal_2d();
  doc["sensing"]["landmarks"] = Json::array();
  CHECK(validation_message(doc).find("landmarks") != std::string::npos);

  doc = minimal_2d();
  doc["sensing"]["eta_p"] = 0.0;
  CHECK(validation_message(doc).find("noise") != std::string::npos);

  doc = minimal_2d();
  doc["sampling"] = Json{{"speed", 1.0}};
  CHECK(validation_message(doc).find("scenario.sampling.speed: unknown field") != std::string::npos);

  doc = minimal_2d();
  doc["query"]["goal"]["mean"] = Json::array({1, 2});
  CHECK(validation_message(doc).find("scenario.query.goal.mean") != std::string::npos);

  doc = minimal_2d();
  doc["query"]["start"]["err_cov"] = Json::array({0.1, -0.1, 0.1, 0.1});
  CHECK(validation_message(doc).find("scenario.query.start.err_cov") != std::string::npos);
}

TEST_CASE("unknown major schema versions are rejected") {
  Json doc = minimal_2d();
  doc["schema_version"] = "2.0";
  CHECK(validation_message(doc).find("schema_version") != std::string::npos);
  doc["schema_version"] = "1.3";
  CHECK(validation_message(doc).empty());
}

TEST_CASE("load, serialize, load is the identity") {
  for (const char* file : {"double_integrator_2d.json", "fixed_wing_3d.json"}) {
    CAPTURE(file);
    const Scenario a = load_scenario_file(std::string(CSBRM_SCENARIO_DIR) + "/" + file);
    const Json ja = scenario_to_json(a);
    const Scenario b = load_scenario(ja);
    CHECK(scenario_to_json(b).dump() == ja.dump());
    CHECK(scenario_hash(a) == scenario_hash(b));
  }
  const Scenario fw = load_scenario_file(std::string(CSBRM_SCENARIO_DIR) + "/fixed_wing_3d.json");
  CHECK(fw.obstacles.size() == 4);
  CHECK(fw.sensing.landmarks.size() == 3);
}

TEST_CASE("sphere containment") {
  const Obstacle s = Obstacle::sphere((Vec(3) << 1, 2, 3).finished(), 0.5);
  CHECK(s.contains((Vec(3) << 1, 2, 3).finished()));
  CHECK_FALSE(s.contains((Vec(3) << 1.5 + 1e-9, 2, 3).finished()));
  CHECK(s.contains((Vec(3) << 1.5 + 1e-9, 2, 3).finished(), 0.1));
  CHECK_THROWS_AS(s.contains(Vec::Zero(2)), DimensionError);
}

TEST_CASE("polygon containment matches a half-plane raster oracle") {
  const std::vector<Vec> poly = {(Vec(2) << 1, 1).finished(), (Vec(2) << 6, 2).finished(),
                                 (Vec(2) << 7, 6).finished(), (Vec(2) << 3, 8).finished(),
                                 (Vec(2) << 0.5, 4).finished()};
  Scenario sc = load_scenario(minimal_2d());
  sc.obstacles = {Obstacle::polygon(poly)};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  int inside = 0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng);
    const bool expect = raster_inside(poly, x, y);
    inside += expect;
    CHECK(collision(sc, (Vec(2) << x, y).finished()) == expect);
  }
  CHECK(inside > 200);
  CHECK_THROWS_AS(collision(sc, Vec::Zero(3)), DimensionError);
}

TEST_CASE("nonconvex polygon and inflation") {
  // U shape; the notch is free space.
  const Obstacle u = Obstacle::polygon({(Vec(2) << 0, 0).finished(), (Vec(2) << 3, 0).finished(),
                                        (Vec(2) << 3, 3).finished(), (Vec(2) << 2, 3).finished(),
                                        (Vec(2) << 2, 1).finished(), (Vec(2) << 1, 1).finished(),
                                        (Vec(2) << 1, 3).finished(), (Vec(2) << 0, 3).finished()});
  CHECK(u.contains((Vec(2) << 0.5, 2).finished()));
  CHECK_FALSE(u.contains((Vec(2) << 1.5, 2).finished()));
  CHECK(u.contains((Vec(2) << 1.5, 2).finished(), 0.6));
  CHECK_FALSE(u.contains((Vec(2) << 1.5, 2).finished(), 0.4));
  CHECK(u.contains((Vec(2) << -0.2, 1.5).finished(), 0.25));
}

TEST_CASE("3-sigma ellipses") {
  auto e = sigma3_ellipse(Mat::Identity(2, 2));
  CHECK(e.major == doctest::Approx(3.0));
  CHECK(e.minor == doctest::Approx(3.0));
  CHECK(e.angle == 0.0);

  e = sigma3_ellipse(Vec((Vec(2) << 4.0, 1.0).finished()).asDiagonal());
  CHECK(e.major == doctest::Approx(6.0));
  CHECK(e.minor == doctest::Approx(3.0));
  CHECK(e.angle == doctest::Approx(0.0));

  e = sigma3_ellipse(Vec((Vec(2) << 1.0, 4.0).finished()).asDiagonal());
  CHECK(e.major == doctest::Approx(6.0));
  CHECK(e.angle == doctest::Approx(std::numbers::pi / 2));

  const double c = std::cos(0.3), s = std::sin(0.3);
  Mat r(2, 2);
  r << c, -s, s, c;
  e = sigma3_ellipse(r * Vec((Vec(2) << 9.0, 1.0).finished()).asDiagonal() * r.transpose());
  CHECK(e.major == doctest::Approx(9.0));
  CHECK(e.minor == doctest::Approx(3.0));
  CHECK(e.angle == doctest::Approx(0.3));

  const auto el = sigma3_ellipsoid(Vec((Vec(3) << 1.0, 9.0, 4.0).finished()).asDiagonal());
  CHECK(el.semi_axes(0) == doctest::Approx(9.0));
  CHECK(el.semi_axes(1) == doctest::Approx(6.0));
  CHECK(el.semi_axes(2) == doctest::Approx(3.0));
  CHECK(std::abs(el.axes(1, 0)) == doctest::Approx(1.0));
}
