#include "csbrm/cnt.hpp"

#include <algorithm>
#include <cmath>

namespace csbrm {

namespace {

double max_deviation(const NominalTrajectory& a, const NominalTrajectory& b) {
  double r = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    r = std::max(r, (a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
  }
  for (std::size_t k = 0; k < a.controls.size(); ++k) {
    r = std::max(r, (a.controls[k] - b.controls[k]).cwiseAbs().maxCoeff());
  }
  return r;
}

struct Pass {
  LinearizedSystem sys;
  MeanSolution sol;
  NominalTrajectory next;
  double residual = 0.0;
};

// Sum of |x_{k+1} - f(x_k, u_k)|_1; throws outside the model's domain.
double defect_l1(const NonlinearModel& model, const NominalTrajectory& t) {
  double d = 0.0;
  for (int k = 0; k < t.horizon(); ++k) {
    d += (t.states[k + 1] - step(model, t.states[k], t.controls[k])).lpNorm<1>();
  }
  return d;
}

double running_cost(const CostWeights& w, const NominalTrajectory& t) {
  double c = 0.0;
  for (int k = 0; k < t.horizon(); ++k) {
    const Vec e = t.states[k] - w.reference[k];
    c += e.dot(w.Q[k] * e) + t.controls[k].dot(w.R[k] * t.controls[k]);
  }
  return c;
}

NominalTrajectory move(const NominalTrajectory& t, const NominalTrajectory& target, double a) {
  NominalTrajectory out = t;
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    out.states[k] += a * (target.states[k] - t.states[k]);
  }
  for (std::size_t k = 0; k < t.controls.size(); ++k) {
    out.controls[k] += a * (target.controls[k] - t.controls[k]);
  }
  return out;
}

}  // namespace

NominalTrajectory as_trajectory(const MeanSolution& sol, int nx, int nu) {
  const auto horizon = static_cast<int>(sol.controls.size() / nu);
  NominalTrajectory t;
  for (int k = 0; k <= horizon; ++k) t.states.push_back(sol.states.segment(k * nx, nx));
  for (int k = 0; k < horizon; ++k) t.controls.push_back(sol.controls.segment(k * nu, nu));
  return t;
}

NominalTrajectory straight_line_initialization(const NonlinearModel& model, const Vec& from,
                                               const Vec& to, int horizon) {
  if (horizon < 1) throw ValidationError("straight-line initialization: horizon must be >= 1");
  if (from.size() != model.state_dim() || to.size() != model.state_dim()) {
    throw DimensionError("straight-line initialization: endpoint size");
  }
  NominalTrajectory t;
  t.states = straight_line_reference(from, to, horizon);
  Vec u = Vec::Zero(model.control_dim());
  if (model.kind == ModelKind::FixedWing) {
    const double duration = horizon * model.dt;
    const Vec d = (to - from).head(3);
    const double dist = d.norm();
    if (dist <= 0.0) throw ValidationError("straight-line initialization: coincident endpoints");
    const double v = dist / duration;
    u << v, std::asin(std::clamp(d(2) / dist, -1.0, 1.0)),
        std::atan((to(3) - from(3)) * v / (model.gravity * duration));
  }
  t.controls.assign(horizon, u);
  return t;
}

CntResult compute_cnt(const NonlinearModel& model, const Sensing& sensing, const Vec& x0,
                      const Vec& xN, const CostWeights& weights, NominalTrajectory init,
                      const CntOptions& opts) {
  init.validate(model);
  if ((init.states.front() - x0).cwiseAbs().maxCoeff() > 1e-12 ||
      (init.states.back() - xN).cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("compute_cnt: initial nominal does not match the endpoints");
  }
  if (opts.tol <= 0.0 || opts.max_iter < 1) throw ValidationError("compute_cnt: bad options");
  weights.validate(init.horizon(), model.state_dim(), model.control_dim());
  const int n = init.horizon(), nx = model.state_dim(), nu = model.control_dim();

  auto evaluate = [&](const NominalTrajectory& ref) {
    Pass p;
    p.sys = linearize(model, sensing, ref);
    p.sol = solve_mean(assemble_dynamics(p.sys), weights, x0, xN);
    p.next = as_trajectory(p.sol, nx, nu);
    p.residual = max_deviation(p.next, ref);
    return p;
  };

  CntResult out;
  NominalTrajectory ref = std::move(init);
  Pass cur;
  double penalty = 0.0;
  try {
    cur = evaluate(ref);
    out.iterations = 1;
    out.residual_history.push_back(cur.residual);
    while (cur.residual > opts.tol) {
      if (out.iterations >= opts.max_iter) {
        out.failure = "no convergence within max_iter";
        break;
      }
      // Directional derivative of the cost along the update, and the
      // quadratic-model curvature used to keep the penalty large enough.
      double slope = 0.0, curvature = 0.0;
      for (int k = 0; k < n; ++k) {
        const Vec dx = cur.next.states[k] - ref.states[k];
        const Vec du = cur.next.controls[k] - ref.controls[k];
        slope += 2.0 * (ref.states[k] - weights.reference[k]).dot(weights.Q[k] * dx) +
                 2.0 * ref.controls[k].dot(weights.R[k] * du);
        curvature += 2.0 * dx.dot(weights.Q[k] * dx) + 2.0 * du.dot(weights.R[k] * du);
      }
      const double defect = defect_l1(model, ref);
      if (defect > 0.0) penalty = std::max(penalty, (slope + 0.5 * curvature) / (0.5 * defect));
      const double merit = running_cost(weights, ref) + penalty * defect;
      const double decrease = slope - penalty * defect;

      double alpha = 1.0;
      bool accepted = false;
      NominalTrajectory trial;
      for (; alpha > 1e-10; alpha *= 0.5) {
        trial = move(ref, cur.next, alpha);
        try {
          const double m = running_cost(weights, trial) + penalty * defect_l1(model, trial);
          if (m <= merit + 1e-4 * alpha * std::min(decrease, 0.0)) {
            accepted = true;
            break;
          }
        } catch (const ValidationError&) {
          // outside the model's domain (V <= 0); shorten the step
        }
      }
      if (!accepted) {
        out.failure = "line search failed";
        break;
      }
      ref = std::move(trial);
      cur = evaluate(ref);
      ++out.iterations;
      out.residual_history.push_back(cur.residual);
      out.step_lengths.push_back(alpha);
    }
  } catch (const Error& e) {
    out.failure = e.what();
  }
  out.converged = out.failure.empty() && cur.residual <= opts.tol;
  out.trajectory = std::move(ref);
  out.system = std::move(cur.sys);
  out.mean = std::move(cur.sol);
  return out;
}

double open_loop_defect(const NonlinearModel& model, const NominalTrajectory& traj) {
  traj.validate(model);
  Vec x = traj.states.front();
  double defect = 0.0;
  for (int k = 0; k < traj.horizon(); ++k) {
    x = step(model, x, traj.controls[k]);
    defect = std::max(defect, (x - traj.states[k + 1]).cwiseAbs().maxCoeff());
  }
  return defect;
}

}  // namespace csbrm
