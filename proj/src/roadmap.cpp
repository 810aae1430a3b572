#include "csbrm/roadmap.hpp"

#include "csbrm/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <thread>

namespace csbrm {

namespace {

Mat random_rotation(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = gauss(rng);
  }
  const Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ();
  // Sign fix so that Q is Haar distributed.
  const Mat r = qr.matrixQR();
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  }
  return q;
}

Mat random_block(std::mt19937_64& rng, int n, const EigenRange& range) {
  std::uniform_real_distribution<double> eig(range.lo, range.hi);
  Vec lam(n);
  for (int i = 0; i < n; ++i) lam(i) = eig(rng);
  const Mat r = random_rotation(rng, n);
  return linalg::symmetrize(r * lam.asDiagonal() * r.transpose());
}

Vec random_velocity(std::mt19937_64& rng, double speed_max) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = 2.0 * std::numbers::pi * unit(rng);
  const double speed = speed_max * std::sqrt(unit(rng));
  return (Vec(2) << speed * std::cos(angle), speed * std::sin(angle)).finished();
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

void check_node_id(const RoadmapGraph& g, int id) {
  if (id < 0 || id >= static_cast<int>(g.nodes.size())) {
    throw ValidationError("node id " + std::to_string(id) + " is not in the roadmap");
  }
}

}  // namespace

BeliefNode make_node(const Scenario& sc, int id, const Vec& mean, const Mat& est_prior,
                     const Mat& err_prior) {
  const int nx = sc.model.state_dim();
  if (mean.size() != nx) throw DimensionError("make_node: mean size");
  linalg::require_square(est_prior, nx, "make_node: P^_-");
  linalg::require_square(err_prior, nx, "make_node: P~_-");
  BeliefNode n;
  n.id = id;
  n.mean = mean;
  n.est_prior = linalg::symmetrize(est_prior);
  n.err_prior = linalg::symmetrize(err_prior);
  const auto upd = measurement_update(n.err_prior, observation_matrix(sc.model, sc.sensing),
                                      observation_noise_matrix(sc.model, sc.sensing, mean));
  n.err_post = upd.posterior;
  n.est_post = linalg::symmetrize(n.est_prior + n.err_prior - n.err_post);
  return n;
}

Mat sample_covariance(std::mt19937_64& rng, int nx, int np, const EigenRange& position,
                      const EigenRange& rest) {
  Mat p = Mat::Zero(nx, nx);
  p.topLeftCorner(np, np) = random_block(rng, np, position);
  if (nx > np) p.bottomRightCorner(nx - np, nx - np) = random_block(rng, nx - np, rest);
  return p;
}

std::vector<BeliefNode> sample_nodes(const Scenario& sc, std::uint64_t seed) {
  const SamplingConfig& s = sc.sampling;
  const int nx = sc.model.state_dim(), np = sc.position_dim();
  std::vector<BeliefNode> nodes;
  nodes.push_back(make_node(sc, 0, sc.start.mean, sc.start.est_cov, sc.start.err_cov));
  nodes.push_back(make_node(sc, 1, sc.goal.mean, sc.goal.est_cov, sc.goal.err_cov));

  std::vector<Vec> means;
  if (!s.grid.empty()) {
    means = s.grid;
  } else {
    auto rng = make_rng(seed, "positions");
    std::vector<std::uniform_real_distribution<double>> axis;
    for (int i = 0; i < np; ++i) axis.emplace_back(sc.world_lower(i), sc.world_upper(i));
    int attempts = 0;
    while (static_cast<int>(means.size()) < s.positions) {
      if (++attempts > s.max_attempts) {
        throw ValidationError("sample_nodes: free space sampling exhausted after " +
                              std::to_string(s.max_attempts) + " attempts");
      }
      Vec p(np);
      for (int i = 0; i < np; ++i) p(i) = axis[i](rng);
      if (collision(sc, p, sc.roadmap.inflation)) continue;
      Vec x = Vec::Zero(nx);
      x.head(np) = p;
      means.push_back(x);
    }
  }

  for (std::size_t i = 0; i < means.size(); ++i) {
    if (collision(sc, means[i].head(np), sc.roadmap.inflation)) {
      throw ValidationError("scenario.sampling.grid[" + std::to_string(i) + "]: inside an obstacle");
    }
    auto crng = make_rng(seed, "covariance", {i});
    const Mat est = sample_covariance(crng, nx, np, s.est_position, s.est_rest);
    const Mat err = sample_covariance(crng, nx, np, s.err_position, s.err_rest);
    std::vector<Vec> variants;
    const bool sample_velocity = s.grid.empty() && sc.model.kind == ModelKind::DoubleIntegrator2D &&
                                 s.mode == NodeMode::Nonstationary;
    if (!sample_velocity || s.include_stationary) variants.push_back(means[i]);
    if (sample_velocity) {
      auto vrng = make_rng(seed, "velocity", {i});
      for (int v = 0; v < s.velocities_per_position; ++v) {
        Vec x = means[i];
        x.tail(2) = random_velocity(vrng, s.speed_max);
        variants.push_back(x);
      }
    }
    for (const auto& x : variants) {
      nodes.push_back(make_node(sc, static_cast<int>(nodes.size()), x, est, err));
    }
  }
  return nodes;
}

std::vector<int> neighbor(const std::vector<BeliefNode>& nodes, int node, double d1, int np) {
  if (!(d1 > 0.0)) throw ValidationError("neighbor: d1 must be positive");
  if (node < 0 || node >= static_cast<int>(nodes.size())) throw ValidationError("neighbor: bad node id");
  const Vec c = nodes[node].mean.head(np);
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.id != node && (n.mean.head(np) - c).norm() <= d1) out.push_back(n.id);
  }
  return out;
}

std::string to_string(Gate gate) {
  switch (gate) {
    case Gate::Accepted: return "accepted";
    case Gate::MeanTrajectory: return "mean_trajectory";
    case Gate::Obstacle: return "obstacle";
    case Gate::Filter: return "filter";
    case Gate::Admission: return "admission";
    case Gate::Covariance: return "covariance";
  }
  return "unknown";
}

double edge_cost(const EdgeWeights& w, const EdgeCosts& c) {
  return w.mean * c.mean + w.cov * c.cov + w.collision * c.collision_probability;
}

Vec edge_target(const Scenario& sc, const Vec& from, const Vec& to) {
  Vec t = to;
  if (sc.model.kind == ModelKind::FixedWing) t(3) = from(3) + wrap_angle(to(3) - from(3));
  return t;
}

std::pair<Vec, Vec> sample_start(const BeliefNode& node, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto nx = node.mean.size();
  auto draw = [&] {
    Vec v(nx);
    for (Eigen::Index i = 0; i < nx; ++i) v(i) = gauss(rng);
    return v;
  };
  const Vec est = node.mean + linalg::sqrtm_psd(node.est_prior) * draw();
  const Vec x = est + linalg::sqrtm_psd(node.err_prior) * draw();
  return {x, est};
}

bool rollout_collides(const Scenario& sc, const EdgeRollout& r) {
  if (r.failed) return true;
  const int np = sc.position_dim();
  return std::any_of(r.states.begin(), r.states.end(), [&](const Vec& x) {
    return collision(sc, x.head(np), sc.roadmap.inflation);
  });
}

double monte_carlo_collision(const Scenario& sc, const RoadmapEdge& edge, const BeliefNode& from,
                             int samples, std::mt19937_64& rng) {
  if (samples < 1) throw ValidationError("monte_carlo_collision: need at least one sample");
  int hits = 0;
  for (int m = 0; m < samples; ++m) {
    const auto [x0, est0] = sample_start(from, rng);
    const EdgeRollout r = simulate_edge(edge.controller, edge.system, sc.model, sc.sensing, x0, est0, rng);
    if (rollout_collides(sc, r)) ++hits;
  }
  return static_cast<double>(hits) / samples;
}

namespace {

// Filter, stacked system, covariance program and controller for a fixed
// nominal. Throws with the gate that failed.
struct GateFailure {
  Gate gate;
  std::string reason;
};

void finish_edge(const Scenario& sc, const BeliefNode& from, const BeliefNode& to, RoadmapEdge& e,
                 const MeanSolution& mean) {
  try {
    e.system.validate();
    e.filter = kf_rollout(e.system, from.err_prior);
  } catch (const Error& ex) {
    throw GateFailure{Gate::Filter, ex.what()};
  }
  const int n = sc.horizon;
  if (!linalg::psd_leq(e.filter.prior_error[n], to.err_prior, sc.roadmap.admission_tol)) {
    throw GateFailure{Gate::Admission,
                      "lambda_min(P~_j- - P~_N-) = " +
                          std::to_string(linalg::lambda_min(to.err_prior - e.filter.prior_error[n]))};
  }
  e.stacked = assemble(e.system, e.filter);
  const CostWeights w = edge_weights(sc, from.mean, e.target);
  CovSolution cov;
  try {
    cov = solve_cov(e.stacked, w, from.est_prior, e.filter.innovation, to.est_post);
  } catch (const Error& ex) {
    throw GateFailure{Gate::Covariance, ex.what()};
  }
  e.controller = make_controller(e.stacked, mean, cov, e.filter, from.est_prior);
}

}  // namespace

EdgeAttempt build_edge(const Scenario& sc, const BeliefNode& from, const BeliefNode& to,
                       std::uint64_t seed) {
  if (from.id == to.id) throw ValidationError("build_edge: nodes must be distinct");
  EdgeAttempt out;
  RoadmapEdge e;
  e.from = from.id;
  e.to = to.id;
  e.seed = seed;
  e.target = edge_target(sc, from.mean, to.mean);
  try {
    const CostWeights w = edge_weights(sc, from.mean, e.target);
    CntResult cnt;
    try {
      cnt = compute_cnt(sc.model, sc.sensing, from.mean, e.target, w,
                        straight_line_initialization(sc.model, from.mean, e.target, sc.horizon),
                        sc.roadmap.cnt);
    } catch (const Error& ex) {
      throw GateFailure{Gate::MeanTrajectory, ex.what()};
    }
    if (!cnt.converged) throw GateFailure{Gate::MeanTrajectory, cnt.failure};
    e.nominal = cnt.trajectory;
    e.cnt_iterations = cnt.iterations;
    e.cnt_residuals = cnt.residual_history;
    e.system = cnt.system;

    const int np = sc.position_dim(), nx = sc.model.state_dim();
    for (int k = 0; k <= sc.horizon; ++k) {
      if (collision(sc, cnt.mean.states.segment(k * nx, np), sc.roadmap.inflation)) {
        throw GateFailure{Gate::Obstacle, "mean trajectory enters an obstacle at k=" + std::to_string(k)};
      }
    }
    finish_edge(sc, from, to, e, cnt.mean);
  } catch (const GateFailure& f) {
    out.gate = f.gate;
    out.reason = f.reason;
    return out;
  }
  auto rng = std::mt19937_64(seed);
  e.costs.mean = e.controller.mean_cost;
  e.costs.cov = e.controller.cov_cost;
  e.costs.collision_probability = monte_carlo_collision(sc, e, from, sc.roadmap.mc_samples, rng);
  e.costs.total = edge_cost(sc.roadmap.weights, e.costs);
  out.edge = std::move(e);
  return out;
}

RoadmapEdge rebuild_edge(const Scenario& sc, const BeliefNode& from, const BeliefNode& to,
                         const Vec& target, NominalTrajectory nominal, std::uint64_t seed,
                         const EdgeCosts& costs) {
  RoadmapEdge e;
  e.from = from.id;
  e.to = to.id;
  e.seed = seed;
  e.target = target;
  nominal.validate(sc.model);
  e.nominal = std::move(nominal);
  e.system = linearize(sc.model, sc.sensing, e.nominal);
  const MeanSolution mean =
      solve_mean(assemble_dynamics(e.system), edge_weights(sc, from.mean, target), from.mean, target);
  try {
    finish_edge(sc, from, to, e, mean);
  } catch (const GateFailure& f) {
    throw SolverError("stored edge " + std::to_string(from.id) + "->" + std::to_string(to.id) +
                      " no longer passes gate " + to_string(f.gate) + ": " + f.reason);
  }
  e.costs = costs;
  return e;
}

int RoadmapGraph::find(int from, int to) const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].from == from && edges[i].to == to) return static_cast<int>(i);
  }
  return -1;
}

int default_threads() {
  if (const char* env = std::getenv("CSBRM_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RoadmapGraph build_roadmap(const Scenario& sc, std::vector<BeliefNode> nodes, std::uint64_t seed,
                           int threads) {
  RoadmapGraph g;
  g.mode = sc.sampling.mode;
  g.seed = seed;
  g.scenario_hash = scenario_hash(sc);
  g.nodes = std::move(nodes);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].id != static_cast<int>(i)) throw ValidationError("build_roadmap: node ids must be 0..n-1");
  }

  // Each unordered pair once, both directions, in a fixed order.
  std::vector<std::pair<int, int>> tasks;
  for (const auto& n : g.nodes) {
    for (int j : neighbor(g.nodes, n.id, sc.roadmap.neighbor_radius, sc.position_dim())) {
      if (j > n.id) {
        tasks.emplace_back(n.id, j);
        tasks.emplace_back(j, n.id);
      }
    }
  }

  std::vector<EdgeAttempt> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const auto [i, j] = tasks[t];
      results[t] = build_edge(sc, g.nodes[i], g.nodes[j],
                              derive_seed(seed, "edge", {static_cast<std::uint64_t>(i),
                                                         static_cast<std::uint64_t>(j)}));
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    ++g.attempts[tasks[t]];
    if (results[t].edge) {
      g.edges.push_back(std::move(*results[t].edge));
    } else {
      ++g.rejections[to_string(results[t].gate)];
    }
  }
  return g;
}

RoadmapGraph build_roadmap(const Scenario& sc, std::uint64_t seed, int threads) {
  return build_roadmap(sc, sample_nodes(sc, seed), seed, threads);
}

PathResult shortest_path(int node_count, const std::vector<WeightedArc>& arcs, int start, int goal) {
  if (start < 0 || start >= node_count || goal < 0 || goal >= node_count) {
    throw ValidationError("shortest_path: start or goal not in the graph");
  }
  std::vector<std::vector<int>> out(node_count);
  for (std::size_t a = 0; a < arcs.size(); ++a) {
    if (arcs[a].cost < 0.0) throw ValidationError("shortest_path: negative arc cost");
    out[arcs[a].from].push_back(static_cast<int>(a));
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(node_count, inf);
  std::vector<int> via(node_count, -1);
  std::vector<bool> done(node_count, false);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[start] = 0.0;
  open.emplace(0.0, start);
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u == goal) break;
    for (int a : out[u]) {
      const int v = arcs[a].to;
      const double nd = d + arcs[a].cost;
      if (nd < dist[v]) {
        dist[v] = nd;
        via[v] = a;
        open.emplace(nd, v);
      }
    }
  }
  PathResult r;
  if (dist[goal] == inf) return r;
  r.found = true;
  r.cost = dist[goal];
  for (int v = goal; v != start; v = arcs[via[v]].from) {
    r.arcs.push_back(via[v]);
    r.nodes.push_back(v);
  }
  r.nodes.push_back(start);
  std::reverse(r.nodes.begin(), r.nodes.end());
  std::reverse(r.arcs.begin(), r.arcs.end());
  return r;
}

PathResult shortest_path(const RoadmapGraph& g, int start, int goal) {
  check_node_id(g, start);
  check_node_id(g, goal);
  std::vector<WeightedArc> arcs;
  for (const auto& e : g.edges) arcs.push_back({e.from, e.to, e.costs.total});
  return shortest_path(static_cast<int>(g.nodes.size()), arcs, start, goal);
}

}  // namespace csbrm
