#include "csbrm/steering.hpp"

#include <cmath>

namespace csbrm {

Mat StackedSystem::selector(int k) const {
  Mat e = Mat::Zero(nx, (horizon + 1) * nx);
  e.middleCols(k * nx, nx).setIdentity();
  return e;
}

StackedSystem assemble_dynamics(const LinearizedSystem& sys) {
  sys.validate(false);
  const int n = sys.horizon();
  StackedSystem st;
  st.horizon = n;
  st.nx = sys.state_dim();
  st.nu = sys.control_dim();
  st.ny = sys.measurement_dim();
  const int nx = st.nx, nu = st.nu;

  const int rows = (n + 1) * nx;
  st.transition = Mat::Zero(rows, rows);
  for (int k = 0; k <= n; ++k) {
    st.transition.block(k * nx, k * nx, nx, nx).setIdentity();
    for (int j = k; j < n; ++j) {
      st.transition.block((j + 1) * nx, k * nx, nx, nx) =
          sys.A[j] * st.transition.block(j * nx, k * nx, nx, nx);
    }
  }

  st.A = st.transition.leftCols(nx);
  st.B = Mat::Zero(rows, n * nu);
  st.H = Vec::Zero(rows);
  for (int i = 0; i < n; ++i) {
    // u_i and h_i enter x_{i+1}.
    for (int j = i + 1; j <= n; ++j) {
      const auto phi = st.transition.block(j * nx, (i + 1) * nx, nx, nx);
      st.B.block(j * nx, i * nu, nx, nu) = phi * sys.B[i];
      st.H.segment(j * nx, nx) += phi * sys.h[i];
    }
  }
  st.step_A = sys.A;
  st.step_B = sys.B;
  return st;
}

StackedSystem assemble(const LinearizedSystem& sys, const FilterRollout& filter) {
  sys.validate();
  StackedSystem st = assemble_dynamics(sys);
  const int n = st.horizon, nx = st.nx, ny = st.ny;
  if (filter.horizon() != n) throw DimensionError("assemble: filter horizon differs from system");
  for (int k = 0; k <= n; ++k) {
    if (filter.gain[k].rows() != nx || filter.gain[k].cols() != ny) {
      throw DimensionError("assemble: filter gain shape mismatch at k=" + std::to_string(k));
    }
  }
  st.L = Mat::Zero((n + 1) * nx, (n + 1) * ny);
  for (int i = 0; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      st.L.block(j * nx, i * ny, nx, ny) =
          st.transition.block(j * nx, i * nx, nx, nx) * filter.gain[i];
    }
  }
  st.filter_gain = filter.gain;
  return st;
}

CostWeights CostWeights::uniform(int horizon, const Mat& q, const Mat& r,
                                 std::vector<Vec> reference) {
  CostWeights w;
  w.Q.assign(horizon, q);
  w.R.assign(horizon, r);
  w.reference = std::move(reference);
  return w;
}

void CostWeights::validate(int horizon, int nx, int nu) const {
  if (static_cast<int>(Q.size()) != horizon || static_cast<int>(R.size()) != horizon) {
    throw DimensionError("cost weights: Q and R need N blocks");
  }
  if (static_cast<int>(reference.size()) != horizon + 1) {
    throw DimensionError("cost weights: reference needs N+1 entries");
  }
  for (int k = 0; k < horizon; ++k) {
    linalg::require_square(Q[k], nx, "cost weights: Q_k");
    linalg::require_square(R[k], nu, "cost weights: R_k");
    if (!linalg::is_psd(Q[k], 1e-12)) throw ValidationError("cost weights: Q_k must be PSD");
    if (linalg::lambda_min(R[k]) <= 0.0) throw ValidationError("cost weights: R_k must be PD");
  }
  for (const auto& m : reference) {
    if (m.size() != nx) throw DimensionError("cost weights: reference entry size");
  }
}

Mat CostWeights::stacked_Q() const {
  std::vector<Mat> blocks = Q;
  blocks.push_back(Mat::Zero(Q.front().rows(), Q.front().cols()));
  return linalg::block_diag(blocks);
}

Mat CostWeights::stacked_R() const { return linalg::block_diag(R); }

Vec CostWeights::stacked_reference() const {
  const auto nx = reference.front().size();
  Vec m(static_cast<Eigen::Index>(reference.size()) * nx);
  for (std::size_t k = 0; k < reference.size(); ++k) m.segment(k * nx, nx) = reference[k];
  return m;
}

std::vector<Vec> straight_line_reference(const Vec& from, const Vec& to, int horizon) {
  std::vector<Vec> ref;
  ref.reserve(horizon + 1);
  for (int k = 0; k <= horizon; ++k) {
    const double s = static_cast<double>(k) / horizon;
    ref.push_back((1.0 - s) * from + s * to);
  }
  return ref;
}

double mean_objective(const StackedSystem& st, const CostWeights& w, const Vec& x0,
                      const Vec& u) {
  const Mat q = w.stacked_Q();
  const Mat r = w.stacked_R();
  const Vec x = st.A * x0 + st.B * u + st.H;
  return x.dot(q * x) + u.dot(r * u) - 2.0 * x.dot(q * w.stacked_reference());
}

MeanSolution solve_mean(const StackedSystem& st, const CostWeights& w, const Vec& x0,
                        const Vec& xN) {
  const int n = st.horizon, nx = st.nx;
  w.validate(n, nx, st.nu);
  if (x0.size() != nx || xN.size() != nx) throw DimensionError("solve_mean: endpoint size");

  const Mat q = w.stacked_Q();
  const Mat r = w.stacked_R();
  const Vec mr = w.stacked_reference();

  const Mat w_inv = linalg::symmetrize(st.B.transpose() * q * st.B + r);
  const Vec v = st.B.transpose() * (q * (st.A * x0 + st.H - mr));
  Eigen::LLT<Mat> w_llt(w_inv);
  if (w_inv.size() > 0 && w_llt.info() != Eigen::Success) {
    throw SolverError("solve_mean: B^T Q B + R is not positive definite");
  }

  const Mat bN = st.block_row_B(n);
  const Mat aN = st.block_row_A(n);
  const Vec hN = st.block_H(n);
  const Mat w_bt = w_llt.solve(bN.transpose());  // W B_N^T
  const Mat gram = linalg::symmetrize(bN * w_bt);

  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin <= 1e-13 * lmax) {
    throw SolverError("solve_mean: edge is not controllable over the horizon");
  }
  Eigen::LLT<Mat> g_llt(gram);

  const Vec wv = w_llt.solve(v);
  const Vec rhs = xN - aN * x0 - hN + bN * wv;
  Vec u = -wv + w_bt * g_llt.solve(rhs);

  // One step of refinement on the terminal equality.
  const Vec residual = xN - (aN * x0 + bN * u + hN);
  u += w_bt * g_llt.solve(residual);

  MeanSolution out;
  out.controls = u;
  out.states = st.A * x0 + st.B * u + st.H;
  const Vec dev = out.states - mr;
  out.control_energy = u.dot(r * u);
  out.cost = dev.dot(q * dev) + out.control_energy;
  return out;
}

Mat open_loop_covariance(const StackedSystem& st, const Mat& est_prior0,
                         const std::vector<Mat>& innovation_cov) {
  linalg::require_square(est_prior0, st.nx, "open_loop_covariance: P^_0-");
  if (static_cast<int>(innovation_cov.size()) != st.horizon + 1) {
    throw DimensionError("open_loop_covariance: need N+1 innovation covariances");
  }
  const Mat p_xi = linalg::block_diag(innovation_cov);
  if (p_xi.rows() != st.L.cols()) throw DimensionError("open_loop_covariance: P_Xi size");
  return linalg::symmetrize(st.A * est_prior0 * st.A.transpose() +
                            st.L * p_xi * st.L.transpose());
}

Mat open_loop_covariance_from_posterior(const StackedSystem& st, const Mat& est_posterior0,
                                        const std::vector<Mat>& injected) {
  linalg::require_square(est_posterior0, st.nx, "open_loop_covariance_from_posterior: P^_0");
  if (static_cast<int>(injected.size()) != st.horizon + 1) {
    throw DimensionError("open_loop_covariance_from_posterior: need N+1 injections");
  }
  std::vector<Mat> blocks;
  blocks.reserve(st.horizon + 1);
  blocks.push_back(est_posterior0);
  for (int k = 1; k <= st.horizon; ++k) blocks.push_back(injected[k]);
  const Mat w = linalg::block_diag(blocks);
  return linalg::symmetrize(st.transition * w * st.transition.transpose());
}

double covariance_cost(const StackedSystem& st, const CostWeights& w, const Mat& F,
                       const Mat& pz) {
  const auto rows = st.B.rows();
  const Mat closed = Mat::Identity(rows, rows) + st.B * F;
  const Mat m = closed.transpose() * w.stacked_Q() * closed + F.transpose() * w.stacked_R() * F;
  return (m * pz).trace();
}

double covariance_constraint_value(const StackedSystem& st, const Mat& F, const Mat& pz,
                                   const Mat& target) {
  const auto rows = st.B.rows();
  const Mat terminal = st.selector(st.horizon) * (Mat::Identity(rows, rows) + st.B * F);
  const Mat cov = terminal * pz * terminal.transpose();
  const Mat s_half_inv = linalg::inv_sqrtm_pd(target);
  return std::sqrt(std::max(0.0, linalg::lambda_max(s_half_inv * cov * s_half_inv)));
}

Mat closed_loop_stacked_covariance(const StackedSystem& st, const Mat& K, const Mat& pz) {
  const auto rows = st.B.rows();
  // X-check = (I - B K)^-1 Z
  const Mat m = (Mat::Identity(rows, rows) - st.B * K)
                    .triangularView<Eigen::Lower>()
                    .solve(Mat::Identity(rows, rows));
  return linalg::symmetrize(m * pz * m.transpose());
}

EdgeController make_controller(const StackedSystem& st, const MeanSolution& mean,
                               const CovSolution& cov, const FilterRollout& filter,
                               const Mat& est_prior0) {
  EdgeController c;
  c.horizon = st.horizon;
  c.nx = st.nx;
  c.nu = st.nu;
  c.mean_controls = mean.controls;
  for (int k = 0; k <= st.horizon; ++k) c.mean_states.push_back(mean.states.segment(k * st.nx, st.nx));
  c.K = cov.K;
  c.F = cov.F;
  c.filter_gain = filter.gain;
  c.mean_cost = mean.cost;
  c.cov_cost = cov.cost;
  const ClosedLoopMoments mom = closed_loop_moments(c, st, est_prior0, filter.innovation, filter);
  c.est_cov = mom.est_cov;
  c.err_cov = mom.err_cov;
  c.state_cov = mom.state_cov;
  return c;
}

ClosedLoopMoments closed_loop_moments(const EdgeController& ctrl, const StackedSystem& st,
                                      const Mat& est_prior0,
                                      const std::vector<Mat>& innovation_cov,
                                      const FilterRollout& filter) {
  if (ctrl.K.rows() != st.B.cols() || ctrl.K.cols() != st.B.rows()) {
    throw DimensionError("closed_loop_moments: K shape mismatch");
  }
  if (filter.horizon() != st.horizon) throw DimensionError("closed_loop_moments: filter horizon");
  const Mat pz = open_loop_covariance(st, est_prior0, innovation_cov);
  ClosedLoopMoments out;
  out.stacked_cov = closed_loop_stacked_covariance(st, ctrl.K, pz);
  for (int k = 0; k <= st.horizon; ++k) {
    const Mat pk = linalg::symmetrize(out.stacked_cov.block(k * st.nx, k * st.nx, st.nx, st.nx));
    out.mean.push_back(ctrl.mean_states[k]);
    out.est_cov.push_back(pk);
    out.err_cov.push_back(filter.posterior_error[k]);
    out.state_cov.push_back(pk + filter.posterior_error[k]);
  }
  return out;
}

EdgeRollout simulate_edge(const EdgeController& ctrl, const LinearizedSystem& sys,
                          const NonlinearModel& model, const Sensing& sensing, const Vec& x0,
                          const Vec& est0, std::mt19937_64& rng, const SimulationOptions& opts) {
  const int n = ctrl.horizon;
  if (sys.horizon() != n) throw DimensionError("simulate_edge: system horizon differs");
  if (x0.size() != ctrl.nx || est0.size() != ctrl.nx) {
    throw DimensionError("simulate_edge: initial state size");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int ny = sys.measurement_dim();
  auto draw = [&](int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
    return v;
  };
  auto observe = [&](int k, const Vec& x) -> Vec {
    const Vec v = draw(ny);
    if (opts.linear_model) return sys.C[k] * x + sys.D[k] * v;
    return measure(model, sensing, x, v);
  };

  EdgeRollout out;
  out.states.push_back(x0);
  Vec est = est0;
  if (!opts.start_from_posterior) {
    const Vec y = observe(0, x0);
    est = est + ctrl.filter_gain[0] * (y - sys.C[0] * est);
  }
  out.estimates.push_back(est);

  Vec x = x0;
  for (int k = 0; k < n; ++k) {
    Vec u = ctrl.mean_control(k);
    for (int i = 0; i <= k; ++i) {
      u += ctrl.gain_block(k, i) * (out.estimates[i] - ctrl.mean_states[i]);
    }
    out.controls.push_back(u);
    const Vec w = draw(sys.noise_dim());
    if (opts.linear_model) {
      x = sys.A[k] * x + sys.B[k] * u + sys.h[k] + sys.G[k] * w;
    } else {
      if (model.kind == ModelKind::FixedWing && !(u(0) > 0.0)) {
        out.failed = true;
        out.failure = "airspeed bound violated at k=" + std::to_string(k);
        return out;
      }
      x = step(model, x, u, w);
    }
    const Vec pred = sys.A[k] * est + sys.B[k] * u + sys.h[k];
    const Vec y = observe(k + 1, x);
    est = pred + ctrl.filter_gain[k + 1] * (y - sys.C[k + 1] * pred);
    out.states.push_back(x);
    out.estimates.push_back(est);
  }
  return out;
}

}  // namespace csbrm
