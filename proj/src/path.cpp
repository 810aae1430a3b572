#include "csbrm/rng.hpp"
#include "csbrm/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace csbrm {

namespace {

const RoadmapEdge& path_edge(const RoadmapGraph& g, int from, int to, int* index = nullptr) {
  const int e = g.find(from, to);
  if (e < 0) {
    throw ValidationError("path uses missing edge " + std::to_string(from) + "->" + std::to_string(to));
  }
  if (index) *index = e;
  return g.edges[e];
}

void check_path(const RoadmapGraph& g, const std::vector<int>& path) {
  if (path.size() < 2) throw ValidationError("path needs at least two nodes");
  for (int v : path) {
    if (v < 0 || v >= static_cast<int>(g.nodes.size())) {
      throw ValidationError("path node " + std::to_string(v) + " is not in the roadmap");
    }
  }
}

}  // namespace

std::vector<EdgeExecution> predict_path(const RoadmapGraph& g, const std::vector<int>& path,
                                        const std::optional<EntryCovariance>& entry) {
  check_path(g, path);
  std::vector<EdgeExecution> out;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    EdgeExecution x;
    const RoadmapEdge& e = path_edge(g, path[i], path[i + 1], &x.edge);
    if (i == 0 && !entry) {
      x.filter = e.filter;
      x.est_cov = e.controller.est_cov;
      x.err_cov = e.controller.err_cov;
      out.push_back(std::move(x));
      continue;
    }
    const Mat est0 = i == 0 ? entry->est_post : out.back().est_cov.back();
    const Mat err0 = i == 0 ? entry->err_post : out.back().err_cov.back();
    x.from_posterior = true;
    x.filter = kf_rollout_from_posterior(e.system, err0);
    std::vector<Mat> injected;
    for (int k = 0; k <= x.filter.horizon(); ++k) injected.push_back(x.filter.injected(k));
    const Mat pz = open_loop_covariance_from_posterior(e.stacked, est0, injected);
    const Mat cl = closed_loop_stacked_covariance(e.stacked, e.controller.K, pz);
    const int nx = e.controller.nx;
    for (int k = 0; k <= e.controller.horizon; ++k) {
      x.est_cov.push_back(linalg::symmetrize(cl.block(k * nx, k * nx, nx, nx)));
      x.err_cov.push_back(x.filter.posterior_error[k]);
    }
    out.push_back(std::move(x));
  }
  return out;
}

double ConcatenationReport::worst() const {
  double w = std::numeric_limits<double>::infinity();
  for (const auto& a : arrivals) w = std::min({w, a.est_margin, a.err_margin});
  return w;
}

ConcatenationReport verify_concatenation(const RoadmapGraph& g, const std::vector<int>& path,
                                         const std::optional<EntryCovariance>& entry) {
  const auto exec = predict_path(g, path, entry);
  ConcatenationReport r;
  for (std::size_t i = 0; i < exec.size(); ++i) {
    const BeliefNode& node = g.nodes[path[i + 1]];
    NodeArrival a;
    a.node = node.id;
    a.est_margin = linalg::lambda_min(node.est_post - exec[i].est_cov.back());
    a.err_margin = linalg::lambda_min(node.err_post - exec[i].err_cov.back());
    r.arrivals.push_back(a);
  }
  return r;
}

PathRollouts simulate_path(const Scenario& sc, const RoadmapGraph& g, const std::vector<int>& path,
                           int rollouts, std::uint64_t seed) {
  if (rollouts < 1) throw ValidationError("simulate_path: need at least one rollout");
  const auto exec = predict_path(g, path);
  std::vector<EdgeController> ctrl;
  std::vector<Vec> shift;
  for (const auto& x : exec) {
    const RoadmapEdge& e = g.edges[x.edge];
    ctrl.push_back(e.controller);
    ctrl.back().filter_gain = x.filter.gain;
    shift.push_back(e.target - g.nodes[e.to].mean);
  }

  PathRollouts out;
  std::vector<std::vector<Vec>> arrivals(exec.size());
  for (int m = 0; m < rollouts; ++m) {
    auto rng = make_rng(seed, "path-rollout", {static_cast<std::uint64_t>(m)});
    auto [x, est] = sample_start(g.nodes[path.front()], rng);
    std::vector<Vec> states{x};
    bool hit = false;
    for (std::size_t i = 0; i < exec.size() && !hit; ++i) {
      const RoadmapEdge& e = g.edges[exec[i].edge];
      SimulationOptions opts;
      opts.start_from_posterior = exec[i].from_posterior;
      const EdgeRollout r = simulate_edge(ctrl[i], e.system, sc.model, sc.sensing, x, est, rng, opts);
      hit = rollout_collides(sc, r);
      states.insert(states.end(), r.states.begin() + 1, r.states.end());
      if (r.failed) break;
      x = r.states.back() - shift[i];
      est = r.estimates.back() - shift[i];
      if (sc.model.kind == ModelKind::FixedWing) {
        // A rollout that looped arrives 2 pi k off in heading; hand over the
        // same physical state.
        const double turns = 2.0 * std::numbers::pi *
                             std::round((est(3) - g.nodes[e.to].mean(3)) / (2.0 * std::numbers::pi));
        x(3) -= turns;
        est(3) -= turns;
      }
      arrivals[i].push_back(x);
    }
    out.states.push_back(std::move(states));
    out.collided.push_back(hit);
  }
  out.collision_probability =
      static_cast<double>(std::count(out.collided.begin(), out.collided.end(), true)) / rollouts;
  for (const auto& a : arrivals) {
    const auto n = static_cast<Eigen::Index>(a.size());
    if (n < 2) {
      out.arrival_cov.push_back(Mat());
      continue;
    }
    Mat x(a.front().size(), n);
    for (Eigen::Index c = 0; c < n; ++c) x.col(c) = a[c];
    const Mat centered = x.colwise() - x.rowwise().mean();
    out.arrival_cov.push_back(centered * centered.transpose() / static_cast<double>(n - 1));
  }
  return out;
}

}  // namespace csbrm
