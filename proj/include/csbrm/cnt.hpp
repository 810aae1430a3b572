#pragma once

#include "csbrm/core.hpp"
#include "csbrm/steering.hpp"
#include "csbrm/sysmodels.hpp"

#include <string>
#include <vector>

namespace csbrm {

struct CntOptions {
  double tol = 1e-4;
  /// Budget of iterations (linearize + mean solve).
  int max_iter = 50;
};

/// Result of the compatible-nominal-trajectory iteration.
struct CntResult {
  NominalTrajectory trajectory;  // last linearization point
  MeanSolution mean;             // mean solution on that linearization
  LinearizedSystem system;       // linearization along `trajectory`
  int iterations = 0;
  /// max_k max(|x^c_k - x^r_k|_inf, |u^c_k - u^r_k|_inf), one entry per iteration
  std::vector<double> residual_history;
  /// Accepted fraction of each update, 1 for a plain iteration.
  std::vector<double> step_lengths;
  bool converged = false;
  std::string failure;
};

/// The mean solution as a state/control sequence.
NominalTrajectory as_trajectory(const MeanSolution& sol, int nx, int nu);

/// Straight line in every state and control coordinate. For the fixed-wing
/// model the control is the constant trim that covers the distance and the
/// heading change in N steps; the double integrator starts from zero input.
NominalTrajectory straight_line_initialization(const NonlinearModel& model, const Vec& from,
                                               const Vec& to, int horizon);

/// Linearize, solve the mean problem, take the controlled trajectory as the
/// new nominal, and repeat until successive trajectories agree within tol.
/// The update is the full step whenever that lowers an l1 penalty merit
/// (cost plus weighted dynamics defects of the nominal), and a backtracked
/// fraction of it otherwise. Fixed points are those of the plain iteration.
/// Failures are reported through `failure`.
CntResult compute_cnt(const NonlinearModel& model, const Sensing& sensing, const Vec& x0,
                      const Vec& xN, const CostWeights& weights, NominalTrajectory init,
                      const CntOptions& opts = {});

/// Max over k of |x_k - x^r_k|_inf when the controls of `traj` are rolled
/// through the noise-free nonlinear model from traj.states[0].
double open_loop_defect(const NonlinearModel& model, const NominalTrajectory& traj);

}  // namespace csbrm
