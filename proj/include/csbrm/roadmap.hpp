#pragma once

#include "csbrm/cnt.hpp"
#include "csbrm/core.hpp"
#include "csbrm/estimation.hpp"
#include "csbrm/scenario.hpp"
#include "csbrm/steering.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace csbrm {

/// Gaussian belief node (x-bar, P^_-, P~_-) plus its a-posteriori covariances
/// after one measurement at the node mean.
struct BeliefNode {
  int id = 0;
  Vec mean;
  Mat est_prior;  // P^_-
  Mat err_prior;  // P~_-
  Mat est_post;   // P^ = P^_- + (P~_- - P~)
  Mat err_post;   // P~

  Mat state_cov() const { return est_prior + err_prior; }
};

BeliefNode make_node(const Scenario& sc, int id, const Vec& mean, const Mat& est_prior,
                     const Mat& err_prior);

/// Block-diagonal covariance: a randomly rotated position block and a
/// randomly rotated block for the remaining coordinates, with eigenvalues
/// uniform in the given ranges.
Mat sample_covariance(std::mt19937_64& rng, int nx, int np, const EigenRange& position,
                      const EigenRange& rest);

/// Start (id 0), goal (id 1), then the sampled or gridded nodes. In
/// nonstationary mode every position carries its velocity samples (and the
/// zero-velocity node when include_stationary is set), all sharing the
/// covariances drawn for that position. Positions and covariances do not
/// depend on the mode.
std::vector<BeliefNode> sample_nodes(const Scenario& sc, std::uint64_t seed);

/// Nodes whose mean position (first np coordinates) lies within d1 of
/// `node`'s, excluding itself.
std::vector<int> neighbor(const std::vector<BeliefNode>& nodes, int node, double d1, int np);

enum class Gate { Accepted, MeanTrajectory, Obstacle, Filter, Admission, Covariance };
std::string to_string(Gate gate);

struct EdgeCosts {
  double mean = 0.0;                   // MCost
  double cov = 0.0;                    // CovCost
  double collision_probability = 0.0;  // raw Monte-Carlo estimate
  double total = 0.0;                  // EdgeCost
};

double edge_cost(const EdgeWeights& w, const EdgeCosts& c);

struct RoadmapEdge {
  int from = 0;
  int to = 0;
  std::uint64_t seed = 0;
  /// Destination mean the edge steers to. Equals the node mean except for a
  /// multiple of 2 pi in the fixed-wing heading.
  Vec target;
  NominalTrajectory nominal;  // linearization point
  int cnt_iterations = 0;
  std::vector<double> cnt_residuals;
  LinearizedSystem system;
  FilterRollout filter;
  StackedSystem stacked;
  EdgeController controller;
  EdgeCosts costs;
};

struct EdgeAttempt {
  Gate gate = Gate::Accepted;
  std::string reason;
  std::optional<RoadmapEdge> edge;
};

/// Destination mean with the fixed-wing heading moved by 2 pi k next to the
/// origin heading.
Vec edge_target(const Scenario& sc, const Vec& from, const Vec& to);

/// Runs the admission pipeline: mean trajectory (compatible nominal),
/// obstacle test on the mean, filter from P~_{i-}, admission
/// P~_{N-} <= P~_{j-} + tol I, covariance program to P^_j, Monte-Carlo
/// collision estimate. Stops at the first failing gate.
EdgeAttempt build_edge(const Scenario& sc, const BeliefNode& from, const BeliefNode& to,
                       std::uint64_t seed);

/// Recomputes the controller of a stored edge from its nominal trajectory.
/// Costs are taken from `costs`.
RoadmapEdge rebuild_edge(const Scenario& sc, const BeliefNode& from, const BeliefNode& to,
                         const Vec& target, NominalTrajectory nominal, std::uint64_t seed,
                         const EdgeCosts& costs);

/// Draws (x_0, x^_{0-}) from the node belief.
std::pair<Vec, Vec> sample_start(const BeliefNode& node, std::mt19937_64& rng);

/// True if any state of the rollout lies in an obstacle (failed rollouts
/// count as collisions).
bool rollout_collides(const Scenario& sc, const EdgeRollout& r);

/// Fraction of `samples` closed-loop rollouts from the `from` belief that hit
/// an obstacle at some step.
double monte_carlo_collision(const Scenario& sc, const RoadmapEdge& edge, const BeliefNode& from,
                             int samples, std::mt19937_64& rng);

struct RoadmapGraph {
  std::vector<BeliefNode> nodes;
  std::vector<RoadmapEdge> edges;
  NodeMode mode = NodeMode::Stationary;
  std::uint64_t seed = 0;
  std::uint64_t scenario_hash = 0;
  /// Attempts per ordered node pair.
  std::map<std::pair<int, int>, int> attempts;
  /// Rejections per gate name.
  std::map<std::string, int> rejections;

  /// Index into `edges`, or -1.
  int find(int from, int to) const;
};

/// Number of worker threads: CSBRM_THREADS if set, else the hardware count.
int default_threads();

/// Roadmap over the given nodes. Each unordered neighbor pair is
/// attempted once per direction; the result does not depend on `threads`.
RoadmapGraph build_roadmap(const Scenario& sc, std::vector<BeliefNode> nodes, std::uint64_t seed,
                           int threads);
RoadmapGraph build_roadmap(const Scenario& sc, std::uint64_t seed, int threads);

struct WeightedArc {
  int from = 0;
  int to = 0;
  double cost = 0.0;
};

struct PathResult {
  bool found = false;
  std::vector<int> nodes;
  std::vector<int> arcs;  // indices into the arc list (or graph edges)
  double cost = 0.0;
};

/// Dijkstra on nonnegative arc costs. Ties resolve toward the earlier arc.
PathResult shortest_path(int node_count, const std::vector<WeightedArc>& arcs, int start, int goal);
PathResult shortest_path(const RoadmapGraph& g, int start, int goal);

/// Predicted covariances of one edge as executed on a path.
struct EdgeExecution {
  int edge = 0;
  bool from_posterior = false;
  FilterRollout filter;
  std::vector<Mat> est_cov;  // P^_k
  std::vector<Mat> err_cov;  // P~_k
};

/// Covariances entering the first edge when they differ from the node's:
/// given after the node's measurement (P^, P~), as on arrival from an edge.
struct EntryCovariance {
  Mat est_post;
  Mat err_post;
};

/// Moment propagation along a node path. The first edge starts from the
/// node prior unless `entry` is given; every later edge starts from the
/// covariances the previous edge actually delivers, with the Kalman filter
/// re-run from that error covariance and the stored feedback K.
std::vector<EdgeExecution> predict_path(const RoadmapGraph& g, const std::vector<int>& path,
                                        const std::optional<EntryCovariance>& entry = {});

struct NodeArrival {
  int node = 0;
  double est_margin = 0.0;  // lambda_min(P^_node - P^_arrived)
  double err_margin = 0.0;  // lambda_min(P~_node - P~_arrived)
};

struct ConcatenationReport {
  std::vector<NodeArrival> arrivals;
  double worst() const;
  bool holds(double tol = 1e-6) const { return worst() >= -tol; }
};

ConcatenationReport verify_concatenation(const RoadmapGraph& g, const std::vector<int>& path,
                                         const std::optional<EntryCovariance>& entry = {});

struct PathRollouts {
  std::vector<std::vector<Vec>> states;  // per rollout, all steps of the path
  std::vector<bool> collided;
  double collision_probability = 0.0;
  /// Sample covariance of the state at each visited node (after the first).
  std::vector<Mat> arrival_cov;
};

/// End-to-end closed-loop Monte Carlo along a node path on the nonlinear
/// model, with the filter gains of predict_path.
PathRollouts simulate_path(const Scenario& sc, const RoadmapGraph& g, const std::vector<int>& path,
                           int rollouts, std::uint64_t seed);

/// Versioned JSON document; matrices row-major. Controllers are rebuilt from
/// the stored nominal trajectories on load.
json_io::Json roadmap_to_json(const Scenario& sc, const RoadmapGraph& g);
RoadmapGraph roadmap_from_json(const Scenario& sc, const json_io::Json& doc);

}  // namespace csbrm
