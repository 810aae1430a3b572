// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "csbrm/cli.hpp"
#include "csbrm/cnt.hpp"
#include "csbrm/rng.hpp"
#include "csbrm/roadmap.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace csbrm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string scenario_path(const char* name) { return std::string(CSBRM_SCENARIO_DIR) + "/" + name; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Outcome mean_steering_exactness() {
  Clock clock;
  std::mt19937_64 rng(101);
  double worst_terminal = 0.0, worst_rel = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int nx = 2 + t % 5;
    const int nu = 1 + (t / 5) % nx;
    const int n = std::max(nx, 4 + (7 * t) % 27);
    const auto e = testing::random_edge(rng, nx, nu, 2, n, Mat::Identity(nx, nx));
    const Mat q = testing::random_spd(rng, nx, 0.0, 1.0);
    const Mat r = testing::random_spd(rng, nu, 0.5, 2.0);
    const Vec x0 = testing::random_vector(rng, nx), xn = testing::random_vector(rng, nx);
    const auto w = CostWeights::uniform(n, q, r, straight_line_reference(x0, xn, n));
    const auto sol = solve_mean(e.st, w, x0, xn);
    const Vec oracle = testing::kkt_mean_oracle(e.sys, w, x0, xn);
    const double j_sol = mean_objective(e.st, w, x0, sol.controls);
    const double j_oracle = mean_objective(e.st, w, x0, oracle);
    worst_terminal = std::max(worst_terminal, (sol.states.tail(nx) - xn).cwiseAbs().maxCoeff());
    worst_rel = std::max(worst_rel, std::abs(j_sol - j_oracle) / std::max(1.0, std::abs(j_oracle)));
  }
  const double secs = clock.seconds();
  return {worst_terminal <= 1e-9 && worst_rel <= 1e-8 && secs < 10.0,
          "50 systems, max terminal error " + fmt(worst_terminal) + ", max objective gap " + fmt(worst_rel) +
              ", " + fmt(secs) + " s"};
}

Outcome covariance_control() {
  std::mt19937_64 rng(202);
  double worst_constraint = 0.0, worst_margin = std::numeric_limits<double>::infinity();
  int solved = 0;
  while (solved < 25) {
    const int nx = 2 + solved % 3, nu = 1 + solved % 2, n = 3 + solved % 8;
    const auto e = testing::random_edge(rng, nx, nu, 2, n, Mat::Identity(nx, nx));
    const auto w = CostWeights::uniform(n, testing::random_spd(rng, nx, 0.0, 0.3), Mat::Identity(nu, nu),
                                        std::vector<Vec>(n + 1, Vec::Zero(nx)));
    const Mat p0 = testing::random_spd(rng, nx, 0.2, 1.0);
    const Mat pz = open_loop_covariance(e.st, p0, e.filter.innovation);
    std::vector<Mat> ks;
    for (int k = 0; k < n; ++k) {
      const Mat& b = e.sys.B[k];
      ks.push_back(-0.6 * (b.transpose() * b).inverse() * b.transpose() * e.sys.A[k]);
    }
    const Mat t0 = testing::terminal_of(e.st, testing::gains_to_f(e.st, ks), pz);
    const Mat target = t0 + 0.05 * linalg::lambda_max(t0) * Mat::Identity(nx, nx);
    const auto sol = solve_cov(e.st, w, p0, e.filter.innovation, target);
    worst_constraint = std::max(worst_constraint, sol.constraint_value);
    worst_margin = std::min(worst_margin, linalg::lambda_min(target - testing::terminal_of(e.st, sol.F, pz)));
    ++solved;
  }

  // Scalar case: x^_1 = x^_0 + u_0, Var(x^_0) = 1, bound 0.25 gives f* = -0.5 and cost 0.25.
  const auto sys = testing::scalar_system(1, 1.0, 1.0, 0.0, 1.0);
  const auto f = kf_rollout(sys, Mat::Identity(1, 1));
  const auto st = assemble(sys, f);
  const auto scalar = solve_cov(st, testing::zero_q_identity_r(1, 1, 1), Mat::Identity(1, 1), f.innovation,
                                0.25 * Mat::Identity(1, 1));
  double grid_best = std::numeric_limits<double>::infinity();
  const Mat pz1 = open_loop_covariance(st, Mat::Identity(1, 1), f.innovation);
  for (int i = 0; i <= 200000; ++i) {
    Mat fg = Mat::Zero(1, 2);
    fg(0, 0) = -2.0 + 2.0 * i / 200000.0;
    if (testing::terminal_of(st, fg, pz1)(0, 0) <= 0.25) {
      grid_best = std::min(grid_best, covariance_cost(st, testing::zero_q_identity_r(1, 1, 1), fg, pz1));
    }
  }
  double worst_rel = std::abs(scalar.cost - grid_best) / grid_best;
  const bool scalar_ok = std::abs(scalar.F(0, 0) + 0.5) <= 1e-3 && std::abs(scalar.cost - 0.25) <= 2.5e-4;

  // 2-state cases against the primal barrier oracle.
  int compared = 0;
  while (compared < 4) {
    const int n = 2, nx = 2, nu = 1;
    const auto e = testing::random_edge(rng, nx, nu, 1, n, Mat::Identity(nx, nx));
    const auto w = CostWeights::uniform(n, compared % 2 ? testing::random_spd(rng, nx, 0.0, 0.3) : Mat::Zero(nx, nx),
                                        Mat::Identity(nu, nu), std::vector<Vec>(n + 1, Vec::Zero(nx)));
    const Mat p0 = testing::random_spd(rng, nx, 0.2, 1.0);
    const Mat pz = open_loop_covariance(e.st, p0, e.filter.innovation);
    std::vector<Mat> ks;
    for (int k = 0; k < n; ++k) {
      const Mat& b = e.sys.B[k];
      ks.push_back(-0.6 * (b.transpose() * b).inverse() * b.transpose() * e.sys.A[k]);
    }
    const Mat f0 = testing::gains_to_f(e.st, ks);
    const Mat t0 = testing::terminal_of(e.st, f0, pz);
    const Mat target = t0 + 0.05 * linalg::lambda_max(t0) * Mat::Identity(nx, nx);
    if (linalg::psd_leq(testing::terminal_of(e.st, Mat::Zero(n * nu, (n + 1) * nx), pz), target)) continue;
    const auto sol = solve_cov(e.st, w, p0, e.filter.innovation, target);
    const double oracle = testing::primal_cov_oracle(e.st, w, pz, target, f0);
    worst_rel = std::max(worst_rel, std::abs(sol.cost - oracle) / std::max(1e-12, oracle));
    ++compared;
  }
  return {worst_constraint <= 1.0 + 1e-8 && worst_margin >= -1e-6 && scalar_ok && worst_rel <= 1e-3,
          "25 problems, max constraint " + fmt(worst_constraint) + ", min margin " + fmt(worst_margin) +
              "; scalar f " + fmt(scalar.F(0, 0)) + " cost " + fmt(scalar.cost) + "; max oracle gap " +
              fmt(worst_rel)};
}

Outcome monte_carlo_moments() {
  std::mt19937_64 rng(303);
  const auto model = NonlinearModel::double_integrator_2d(0.2);
  Sensing sensing;
  sensing.landmarks = {Vec::Zero(2), (Vec(2) << 4.0, 4.0).finished()};
  const int n = 20;
  const Vec start = (Vec(4) << 0.5, 0.5, 0.0, 0.0).finished();
  const Vec goal = (Vec(4) << 3.0, 2.0, 0.0, 0.0).finished();
  const Mat est0 = 0.02 * Mat::Identity(4, 4), err0 = 0.05 * Mat::Identity(4, 4);
  NominalTrajectory nom;
  nom.states = straight_line_reference(start, goal, n);
  for (int k = 0; k < n; ++k) nom.controls.push_back(Vec::Zero(2));
  const auto sys = linearize(model, sensing, nom);
  const auto filter = kf_rollout(sys, err0);
  const auto st = assemble(sys, filter);
  const auto w = testing::zero_q_identity_r(n, 4, 2);
  const auto mean = solve_mean(st, w, start, goal);
  const Mat pz = open_loop_covariance(st, est0, filter.innovation);
  const auto cov = solve_cov(st, w, est0, filter.innovation, 0.5 * pz.bottomRightCorner(4, 4));
  const auto ctrl = make_controller(st, mean, cov, filter, est0);

  const int samples = 10000;
  std::vector<Vec> xs, errs;
  Vec m = Vec::Zero(4);
  for (int s = 0; s < samples; ++s) {
    const Vec est = testing::sample_gaussian(rng, start, est0);
    const Vec x0 = testing::sample_gaussian(rng, est, err0);
    SimulationOptions opts;
    opts.linear_model = true;
    const auto r = simulate_edge(ctrl, sys, model, sensing, x0, est, rng, opts);
    xs.push_back(r.states.back());
    errs.push_back(r.states.back() - r.estimates.back());
    m += r.states.back();
  }
  m /= samples;
  const Mat pn = ctrl.state_cov[n];
  double worst_se = 0.0;
  for (int i = 0; i < 4; ++i) worst_se = std::max(worst_se, std::abs(m(i) - goal(i)) / std::sqrt(pn(i, i) / samples));
  const double cov_err = testing::rel_frobenius(testing::sample_cov(xs), pn);
  const double err_err = testing::rel_frobenius(testing::sample_cov(errs), ctrl.err_cov[n]);
  return {worst_se <= 3.0 && cov_err <= 0.05 && err_err <= 0.05,
          "10^4 rollouts, mean off by " + fmt(worst_se) + " s.e., Cov(x_N) " + fmt(100 * cov_err) +
              "%, Cov(x_N - x^_N) " + fmt(100 * err_err) + "%"};
}

Outcome filter_monotonicity() {
  std::mt19937_64 rng(404);
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    const auto sys = testing::random_ltv(rng, 4, 1 + t % 3, 1 + t % 4, 10);
    const Mat smaller = testing::random_spd(rng, 4, 0.01, 2.0);
    const Mat larger = smaller + testing::random_spd(rng, 4, 0.0, 1.0);
    const auto a = kf_rollout(sys, larger), b = kf_rollout(sys, smaller);
    for (std::size_t k = 0; k < a.prior_error.size(); ++k) {
      worst = std::min(worst, linalg::lambda_min(a.prior_error[k] + 1e-9 * Mat::Identity(4, 4) - b.prior_error[k]));
    }
  }
  return {worst >= 0.0, "100 systems, min lambda(P~_k- + 1e-9 I - P~'_k-) = " + fmt(worst)};
}

Outcome cnt_convergence() {
  const auto fw = NonlinearModel::fixed_wing(0.2);
  Sensing s;
  s.landmarks = {(Vec(3) << 2, 2, 0).finished(), (Vec(3) << 8, 2, 0).finished(), (Vec(3) << 5, 8, 0).finished()};
  const Vec a = (Vec(4) << 1, 1, 2, 0).finished(), b = (Vec(4) << 5, 3, 2.5, 0.6).finished();
  const auto w = CostWeights::uniform(20, Vec((Vec(4) << 1.0, 1.0, 1.0, 0.0).finished()).asDiagonal(),
                                      Vec((Vec(3) << 0.1, 1.0, 1.0).finished()).asDiagonal(),
                                      straight_line_reference(a, b, 20));
  CntOptions opts;
  const auto r = compute_cnt(fw, s, a, b, w, straight_line_initialization(fw, a, b, 20), opts);
  const double defect = r.converged ? open_loop_defect(fw, as_trajectory(r.mean, 4, 3)) : INFINITY;

  const auto di = NonlinearModel::double_integrator_2d(0.2);
  Sensing ds;
  ds.landmarks = {Vec::Zero(2)};
  const Vec c = (Vec(4) << 0, 0, 1, 0).finished(), d = (Vec(4) << 3, 2, 0, -1).finished();
  const auto lin = compute_cnt(di, ds, c, d,
                               CostWeights::uniform(20, Mat::Zero(4, 4), Mat::Identity(2, 2),
                                                    straight_line_reference(c, d, 20)),
                               straight_line_initialization(di, c, d, 20));
  const bool pass = r.converged && r.iterations <= 50 && r.residual_history.back() <= 1e-4 &&
                    defect <= 10 * opts.tol && lin.converged && lin.iterations == 2;
  return {pass, "fixed wing: " + std::to_string(r.iterations) + " iterations, residual " +
                    fmt(r.residual_history.back()) + ", defect " + fmt(defect) + "; linear: " +
                    std::to_string(lin.iterations) + " iterations"};
}

struct Breakdown {
  bool found = false;
  double total = 0.0, mean = 0.0, cov = 0.0, p = 0.0;
  std::size_t nodes = 0;
  std::string text() const {
    return "total " + fmt(total) + " = mean " + fmt(mean) + " + cov " + fmt(cov) + " + w3 * p " + fmt(p);
  }
};

Breakdown breakdown(const RoadmapGraph& g) {
  Breakdown b;
  b.nodes = g.nodes.size();
  const auto path = shortest_path(g, 0, 1);
  b.found = path.found;
  b.total = path.cost;
  for (int a : path.arcs) {
    b.mean += g.edges[a].costs.mean;
    b.cov += g.edges[a].costs.cov;
    b.p += g.edges[a].costs.collision_probability;
  }
  return b;
}

Outcome double_integrator_modes(RoadmapGraph& moving) {
  Clock clock;
  Scenario sc = load_scenario_file(scenario_path("double_integrator_2d.json"));
  sc.sampling.mode = NodeMode::Stationary;
  const RoadmapGraph still = build_roadmap(sc, 1, default_threads());
  sc.sampling.mode = NodeMode::Nonstationary;
  moving = build_roadmap(sc, 1, default_threads());
  const double secs = clock.seconds();
  const Breakdown s = breakdown(still), m = breakdown(moving);
  const bool pass = s.found && m.found && m.total < s.total && m.mean < s.mean &&
                    s.mean - m.mean >= 0.5 * (s.total - m.total) && secs < 300.0 && s.nodes <= 40 &&
                    m.nodes <= 40 && sc.roadmap.mc_samples == 500;
  return {pass, "stationary (" + std::to_string(s.nodes) + " nodes): " + s.text() + "; nonstationary (" +
                    std::to_string(m.nodes) + " nodes): " + m.text() + "; " + fmt(secs) + " s"};
}

Outcome concatenation(const RoadmapGraph& g) {
  std::mt19937_64 rng(505);
  std::vector<std::vector<int>> next(g.nodes.size());
  for (const auto& e : g.edges) next[e.from].push_back(e.to);
  double worst = std::numeric_limits<double>::infinity();
  int paths = 0, arrivals = 0, tries = 0;
  while (paths < 100 && ++tries < 10000) {
    const auto& first = g.edges[rng() % g.edges.size()];
    std::vector<int> p{first.from, first.to};
    const int edges = 2 + static_cast<int>(rng() % 3);
    while (static_cast<int>(p.size()) <= edges && !next[p.back()].empty()) {
      p.push_back(next[p.back()][rng() % next[p.back()].size()]);
    }
    if (p.size() < 3) continue;
    const auto r = verify_concatenation(g, p);
    worst = std::min(worst, r.worst());
    arrivals += static_cast<int>(r.arrivals.size());
    ++paths;
  }
  return {paths == 100 && worst >= -1e-6,
          std::to_string(paths) + " paths, " + std::to_string(arrivals) + " arrivals, min margin " + fmt(worst)};
}

Outcome fixed_wing_smoke() {
  Clock clock;
  const Scenario sc = load_scenario_file(scenario_path("fixed_wing_3d.json"));
  const RoadmapGraph g = build_roadmap(sc, 1, default_threads());
  // Connected ignoring edge direction.
  std::vector<std::vector<int>> adj(g.nodes.size());
  for (const auto& e : g.edges) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::vector<bool> seen(g.nodes.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  const bool connected = reached == g.nodes.size();
  const auto path = shortest_path(g, 0, 1);
  if (!path.found) return {false, "no path between start and goal"};
  const PathRollouts mc = simulate_path(sc, g, path.nodes, 2000, derive_seed(1, "acceptance-recheck"));

  // The corridor is the box spanned by the sphere centers.
  Vec lo = sc.obstacles.front().center, hi = lo;
  for (const auto& o : sc.obstacles) {
    lo = lo.cwiseMin(o.center);
    hi = hi.cwiseMax(o.center);
  }
  auto in_corridor = [&](const std::vector<int>& nodes) {
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      for (const auto& x : g.edges[g.find(nodes[i], nodes[i + 1])].controller.mean_states) {
        if (x(0) >= lo(0) && x(0) <= hi(0) && x(1) >= lo(1) && x(1) <= hi(1)) return true;
      }
    }
    return false;
  };

  // For contrast: the same roadmap searched without the collision term.
  std::vector<WeightedArc> arcs;
  for (const auto& e : g.edges) arcs.push_back({e.from, e.to, sc.roadmap.weights.mean * e.costs.mean + sc.roadmap.weights.cov * e.costs.cov});
  const auto cheap = shortest_path(static_cast<int>(g.nodes.size()), arcs, 0, 1);
  const double cheap_p = simulate_path(sc, g, cheap.nodes, 2000, derive_seed(1, "acceptance-recheck")).collision_probability;

  std::string nodes;
  for (int v : path.nodes) nodes += (nodes.empty() ? "" : "-") + std::to_string(v);
  const bool avoids = !in_corridor(path.nodes);
  return {connected && mc.collision_probability <= sc.collision_threshold && avoids,
          std::to_string(g.nodes.size()) + " nodes (" + std::to_string(reached) + " connected), " +
              std::to_string(g.edges.size()) + " edges, path " + nodes +
              (avoids ? " outside" : " inside") + " the corridor, recheck p = " + fmt(mc.collision_probability) +
              " (threshold " + fmt(sc.collision_threshold) + "); with w3 = 0 the path " +
              (in_corridor(cheap.nodes) ? "takes" : "avoids") + " the corridor, p = " + fmt(cheap_p) + "; " +
              fmt(clock.seconds()) + " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("csbrm-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::ostringstream sink;
  auto run = [&](const std::string& dir, const std::string& threads) {
    const std::string out = (root / dir).string();
    const std::string sc = scenario_path("double_integrator_2d.json");
    const int b = cli::run({"build", "--scenario", sc, "--seed", "7", "--threads", threads, "--out", out}, sink, sink);
    const int p = cli::run({"plan", "--scenario", sc, "--out", out}, sink, sink);
    return b == 0 && p == 0;
  };
  const bool ran = run("a", "1") && run("b", "1") && run("c", "4");
  bool same = ran;
  for (const char* f : {"roadmap.json", "result.json"}) {
    const std::string a = slurp(root / "a" / f);
    same = same && !a.empty() && a == slurp(root / "b" / f) && a == slurp(root / "c" / f);
  }
  fs::remove_all(root);
  return {same, ran ? (same ? "roadmap.json and result.json identical across runs and for 1 vs 4 threads"
                            : "outputs differ")
                    : "cli run failed"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  };
  RoadmapGraph moving;
  report("mean-steering-exactness", mean_steering_exactness);
  report("covariance-control", covariance_control);
  report("monte-carlo-moments", monte_carlo_moments);
  report("filter-monotonicity", filter_monotonicity);
  report("cnt-convergence", cnt_convergence);
  report("double-integrator-modes", [&] { return double_integrator_modes(moving); });
  report("concatenation", [&] {
    if (moving.edges.empty()) return Outcome{false, "no roadmap"};
    return concatenation(moving);
  });
  report("fixed-wing-smoke", fixed_wing_smoke);
  report("determinism", determinism);
  return failed;
}
