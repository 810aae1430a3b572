#pragma once

#include "csbrm/core.hpp"
#include "csbrm/estimation.hpp"
#include "csbrm/sysmodels.hpp"

#include <random>
#include <string>
#include <vector>

namespace csbrm {

/// Stacked form of the estimated-state dynamics over one edge,
///   X^ = A x^_{0-} + B U + H + L Xi,
/// with X^ = (x^_0, ..., x^_N), U = (u_0, ..., u_{N-1}), Xi = (xi_0, ..., xi_N).
struct StackedSystem {
  int horizon = 0;
  int nx = 0;
  int nu = 0;
  int ny = 0;

  Mat A;           // (N+1)nx x nx
  Mat B;           // (N+1)nx x N nu, strictly lower block-triangular
  Vec H;           // (N+1)nx
  Mat L;           // (N+1)nx x (N+1)ny
  Mat transition;  // (N+1)nx x (N+1)nx, block (j,k) = A_{j-1} ... A_k for j >= k

  // Per-step copies used by the recursive solvers.
  std::vector<Mat> step_A;
  std::vector<Mat> step_B;
  std::vector<Mat> filter_gain;

  /// E_k, the selector with E_k X = x_k.
  Mat selector(int k) const;
  Mat block_row_A(int k) const { return A.middleRows(k * nx, nx); }
  Mat block_row_B(int k) const { return B.middleRows(k * nx, nx); }
  Vec block_H(int k) const { return H.segment(k * nx, nx); }
};

StackedSystem assemble(const LinearizedSystem& sys, const FilterRollout& filter);
/// Everything except L and the filter gains; enough for the mean problem.
StackedSystem assemble_dynamics(const LinearizedSystem& sys);

/// Quadratic weights and the reference trajectory m_k. Q has N blocks (the
/// terminal block of the stacked weight is zero), R has N blocks, the
/// reference has N + 1 entries.
struct CostWeights {
  std::vector<Mat> Q;
  std::vector<Mat> R;
  std::vector<Vec> reference;

  static CostWeights uniform(int horizon, const Mat& q, const Mat& r, std::vector<Vec> reference);

  void validate(int horizon, int nx, int nu) const;
  Mat stacked_Q() const;
  Mat stacked_R() const;
  Vec stacked_reference() const;
};

/// m_k on the straight line between the two endpoint means.
std::vector<Vec> straight_line_reference(const Vec& from, const Vec& to, int horizon);

struct MeanSolution {
  Vec controls;  // U-bar, N nu
  Vec states;    // X-bar, (N+1) nx
  /// (X - M_r)^T Q (X - M_r) + U^T R U. Differs from the minimized objective
  /// X^T Q X + U^T R U - 2 X^T Q M_r only by the constant M_r^T Q M_r.
  double cost = 0.0;
  double control_energy = 0.0;  // U^T R U
};

/// Objective of the mean problem without the constant term.
double mean_objective(const StackedSystem& st, const CostWeights& w, const Vec& x0, const Vec& u);

/// Closed-form minimum of the mean problem with hard endpoint constraints.
/// Throws SolverError when the horizon-N reachability Gramian is singular.
MeanSolution solve_mean(const StackedSystem& st, const CostWeights& w, const Vec& x0,
                        const Vec& xN);

/// Covariance of Z = A x_{0-} + L Xi, i.e. A P^_{0-} A^T + L P_Xi L^T.
Mat open_loop_covariance(const StackedSystem& st, const Mat& est_prior0,
                         const std::vector<Mat>& innovation_cov);

/// Covariance of Z when x^_0 (after the k = 0 update) has covariance
/// est_posterior0 and the innovations inject `injected[k]` for k >= 1.
Mat open_loop_covariance_from_posterior(const StackedSystem& st, const Mat& est_posterior0,
                                        const std::vector<Mat>& injected);

struct CovSolverOptions {
  double constraint_slack = 1e-8;
  double psd_slack = 1e-6;
  double duality_gap = 1e-8;
  int max_iterations = 200;
};

struct CovSolution {
  Mat F;  // N nu x (N+1) nx, causal
  Mat K;  // N nu x (N+1) nx, K = F (I + B F)^-1
  std::vector<Mat> step_gain;  // diagonal blocks K_{k,k}
  double cost = 0.0;
  /// || P_Z^{1/2} (I + B F)^T E_N^T S^{-1/2} ||_2 for target S.
  double constraint_value = 0.0;
  Mat terminal_cov;  // E_N (I+BF) P_Z (I+BF)^T E_N^T
  Mat multiplier;    // Lagrange multiplier of the terminal constraint
  double duality_gap = 0.0;
  int iterations = 0;
  bool constraint_active = false;
};

/// trace[((I+BF)^T Q (I+BF) + F^T R F) P_Z]
double covariance_cost(const StackedSystem& st, const CostWeights& w, const Mat& F,
                       const Mat& pz);
/// Spectral norm of P_Z^{1/2} (I+BF)^T E_N^T S^{-1/2}.
double covariance_constraint_value(const StackedSystem& st, const Mat& F, const Mat& pz,
                                   const Mat& target);

/// Minimum-cost causal feedback that keeps the terminal estimated-state
/// covariance below `target`. The terminal constraint is dualized; for a fixed
/// multiplier the problem is a finite-horizon LQ problem on the estimated
/// state, solved by a Riccati recursion, and the multiplier is found with a
/// log-barrier Newton method. Throws SolverError when the target is
/// unreachable or the iteration budget runs out.
CovSolution solve_cov(const StackedSystem& st, const CostWeights& w, const Mat& est_prior0,
                      const std::vector<Mat>& innovation_cov, const Mat& target,
                      const CovSolverOptions& opts = {});

/// The full policy of one edge: mean control, causal feedback on the
/// estimated-state deviation and the Kalman filter gains.
struct EdgeController {
  int horizon = 0;
  int nx = 0;
  int nu = 0;
  Vec mean_controls;
  std::vector<Vec> mean_states;
  Mat K;
  Mat F;
  std::vector<Mat> filter_gain;
  std::vector<Mat> est_cov;    // P^_k
  std::vector<Mat> err_cov;    // P~_k
  std::vector<Mat> state_cov;  // P_k = P^_k + P~_k
  double mean_cost = 0.0;
  double cov_cost = 0.0;

  Vec mean_control(int k) const { return mean_controls.segment(k * nu, nu); }
  /// K_{k,i}
  Mat gain_block(int k, int i) const { return K.block(k * nu, i * nx, nu, nx); }
};

struct ClosedLoopMoments {
  std::vector<Vec> mean;
  std::vector<Mat> est_cov;
  std::vector<Mat> err_cov;
  std::vector<Mat> state_cov;
  Mat stacked_cov;  // Cov(X-check)
};

/// Bundles the solutions and fills the predicted moments for the edge
/// started from estimated-state prior covariance est_prior0.
EdgeController make_controller(const StackedSystem& st, const MeanSolution& mean,
                               const CovSolution& cov, const FilterRollout& filter,
                               const Mat& est_prior0);

ClosedLoopMoments closed_loop_moments(const EdgeController& ctrl, const StackedSystem& st,
                                      const Mat& est_prior0,
                                      const std::vector<Mat>& innovation_cov,
                                      const FilterRollout& filter);

/// Same, for a feedback K applied to an arbitrary open-loop covariance P_Z.
Mat closed_loop_stacked_covariance(const StackedSystem& st, const Mat& K, const Mat& pz);

struct SimulationOptions {
  /// Propagate and measure with the linearized model instead of the
  /// nonlinear one (range-dependent noise frozen at the nominal).
  bool linear_model = false;
  /// The given estimate is already x^_0 (measurement at k = 0 done), as when
  /// an edge continues from the previous one on a path.
  bool start_from_posterior = false;
};

struct EdgeRollout {
  std::vector<Vec> states;     // x_0 .. x_N
  std::vector<Vec> estimates;  // x^_0 .. x^_N
  std::vector<Vec> controls;   // u_0 .. u_{N-1}
  bool failed = false;
  std::string failure;
};

/// One closed-loop rollout: true dynamics with process noise, landmark
/// measurements, Kalman filter on the linearized model and
/// u_k = u-bar_k + sum_i K_{k,i} (x^_i - x-bar_i).
EdgeRollout simulate_edge(const EdgeController& ctrl, const LinearizedSystem& sys,
                          const NonlinearModel& model, const Sensing& sensing, const Vec& x0,
                          const Vec& est0, std::mt19937_64& rng,
                          const SimulationOptions& opts = {});

}  // namespace csbrm
