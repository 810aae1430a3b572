#pragma once

#include "csbrm/cnt.hpp"
#include "csbrm/core.hpp"
#include "csbrm/json_io.hpp"
#include "csbrm/steering.hpp"
#include "csbrm/sysmodels.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace csbrm {

inline constexpr int kScenarioSchemaMajor = 1;
inline constexpr const char* kScenarioSchemaVersion = "1.0";

/// Polygon in the plane (2-D worlds) or sphere (3-D worlds).
struct Obstacle {
  enum class Shape { Polygon, Sphere };
  Shape shape = Shape::Polygon;
  std::vector<Vec> vertices;  // polygon, in order; need not be convex
  Vec center;                 // sphere
  double radius = 0.0;

  static Obstacle polygon(std::vector<Vec> vertices);
  static Obstacle sphere(Vec center, double radius);

  int dim() const { return shape == Shape::Polygon ? 2 : 3; }
  /// Inside, or within `inflation` of the boundary.
  bool contains(const Vec& p, double inflation = 0.0) const;
  Vec lower() const;
  Vec upper() const;
};

/// Mean and prior covariances of a node given explicitly (start, goal).
struct NodeSpec {
  Vec mean;
  Mat est_cov;  // P^_-
  Mat err_cov;  // P~_-
};

struct EigenRange {
  double lo = 0.01;
  double hi = 0.25;
};

enum class NodeMode { Stationary, Nonstationary };

std::string to_string(NodeMode mode);
NodeMode node_mode_from_string(const std::string& name);

struct SamplingConfig {
  NodeMode mode = NodeMode::Stationary;
  /// Sampled positions, not counting start and goal.
  int positions = 10;
  /// Nonzero velocities drawn per position in nonstationary mode.
  int velocities_per_position = 3;
  /// Keep the zero-velocity node at each position in nonstationary mode.
  bool include_stationary = true;
  double speed_max = 1.0;
  /// Explicit node means; when non-empty they replace position sampling.
  std::vector<Vec> grid;
  /// Eigenvalue ranges of the position block and of the remaining block
  /// (velocity or heading) of P^_- and P~_-.
  EigenRange est_position{0.01, 0.25};
  EigenRange est_rest{0.01, 0.25};
  EigenRange err_position{0.01, 0.25};
  EigenRange err_rest{0.01, 0.25};
  int max_attempts = 100000;
};

struct EdgeWeights {
  double mean = 1.0;
  double cov = 1.0;
  double collision = 100.0;
};

struct RoadmapSettings {
  double neighbor_radius = 3.0;
  int mc_samples = 500;
  EdgeWeights weights;
  /// Slack in the filter admission test P~_{N-} <= P~_{j-} + tol I.
  double admission_tol = 1e-9;
  /// Robot radius for the obstacle test.
  double inflation = 0.0;
  CntOptions cnt;
};

struct Scenario {
  std::string name;
  NonlinearModel model;
  Sensing sensing;
  int horizon = 20;
  Vec world_lower;
  Vec world_upper;
  std::vector<Obstacle> obstacles;
  /// Diagonals of the per-step weights Q and R.
  Vec q_diag;
  Vec r_diag;
  SamplingConfig sampling;
  RoadmapSettings roadmap;
  NodeSpec start;
  NodeSpec goal;
  double collision_threshold = 0.05;

  int position_dim() const { return model.position_dim(); }
  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// True iff the position lies inside any obstacle (grown by `inflation`).
bool collision(const Scenario& sc, const Vec& position, double inflation = 0.0);

/// Cost weights of one edge: uniform Q, R and the straight-line reference.
CostWeights edge_weights(const Scenario& sc, const Vec& from, const Vec& to);

/// Reads a scenario document; fills defaults, validates, rejects unknown
/// fields and unknown major schema versions.
Scenario load_scenario(const json_io::Json& doc);
Scenario load_scenario_file(const std::string& path);
/// Full effective configuration, defaults included.
json_io::Json scenario_to_json(const Scenario& sc);

/// FNV-1a of the canonical serialization.
std::uint64_t scenario_hash(const Scenario& sc);
std::string hex64(std::uint64_t v);

/// 3-sigma ellipse of a 2x2 covariance: semi-axes 3 sqrt(lambda), major
/// first, and the major-axis angle in (-pi/2, pi/2].
struct Ellipse {
  double major = 0.0;
  double minor = 0.0;
  double angle = 0.0;
};
Ellipse sigma3_ellipse(const Mat& cov2);

/// 3-sigma ellipsoid of a 3x3 covariance: semi-axes (descending) and the
/// matching unit axes as columns.
struct Ellipsoid {
  Vec semi_axes;
  Mat axes;
};
Ellipsoid sigma3_ellipsoid(const Mat& cov3);

}  // namespace csbrm
