#include "csbrm/steering.hpp"

#include <cmath>
#include <limits>

namespace csbrm {

namespace {

// LQ problem on the estimated-state deviation
//   x_{k+1} = A_k x_k + B_k u_k + (innovation injecting W_{k+1}),
//   Cov(x_0) = sigma0,
// cost sum_k x_k^T Q_k x_k + u_k^T R_k u_k + x_N^T Lambda x_N.
struct LqData {
  int n = 0;
  std::vector<Mat> A, B, Q, R;
  std::vector<Mat> W;  // W_0 .. W_N
  Mat sigma0;
};

struct LqPass {
  std::vector<Mat> K, Acl, S_inv;
  std::vector<Mat> Pi;     // N+1
  std::vector<Mat> sigma;  // N+1
  double value = 0.0;      // optimal cost including the terminal term
  double running = 0.0;    // cost without the terminal term
};

LqPass lq_solve(const LqData& d, const Mat& lambda) {
  const int n = d.n;
  LqPass p;
  p.K.resize(n);
  p.Acl.resize(n);
  p.S_inv.resize(n);
  p.Pi.resize(n + 1);
  p.sigma.resize(n + 1);
  p.Pi[n] = lambda;
  for (int k = n - 1; k >= 0; --k) {
    const Mat& a = d.A[k];
    const Mat& b = d.B[k];
    const Mat pb = p.Pi[k + 1] * b;
    const Mat s = linalg::symmetrize(d.R[k] + b.transpose() * pb);
    p.S_inv[k] = linalg::spd_inverse(s, "riccati gain");
    p.K[k] = -p.S_inv[k] * (pb.transpose() * a);
    p.Acl[k] = a + b * p.K[k];
    p.Pi[k] = linalg::symmetrize(d.Q[k] + p.Acl[k].transpose() * p.Pi[k + 1] * p.Acl[k] +
                                 p.K[k].transpose() * d.R[k] * p.K[k]);
  }
  p.sigma[0] = d.sigma0;
  for (int k = 0; k < n; ++k) {
    p.sigma[k + 1] =
        linalg::symmetrize(p.Acl[k] * p.sigma[k] * p.Acl[k].transpose() + d.W[k + 1]);
    p.running += ((d.Q[k] + p.K[k].transpose() * d.R[k] * p.K[k]) * p.sigma[k]).trace();
  }
  p.value = (p.Pi[0] * p.sigma[0]).trace();
  for (int k = 1; k <= n; ++k) p.value += (p.Pi[k] * d.W[k]).trace();
  return p;
}

// Directional derivative of the terminal covariance with respect to Lambda.
Mat d_terminal_cov(const LqData& d, const LqPass& p, const Mat& d_lambda) {
  const int n = d.n;
  std::vector<Mat> dK(n);
  Mat d_pi = d_lambda;
  for (int k = n - 1; k >= 0; --k) {
    dK[k] = -p.S_inv[k] * d.B[k].transpose() * d_pi * p.Acl[k];
    d_pi = p.Acl[k].transpose() * d_pi * p.Acl[k];
  }
  Mat d_sigma = Mat::Zero(d.sigma0.rows(), d.sigma0.cols());
  for (int k = 0; k < n; ++k) {
    const Mat cross = d.B[k] * dK[k] * p.sigma[k] * p.Acl[k].transpose();
    d_sigma = p.Acl[k] * d_sigma * p.Acl[k].transpose() + cross + cross.transpose();
  }
  return linalg::symmetrize(d_sigma);
}

// Orthonormal basis of symmetric matrices under the Frobenius inner product.
class SymBasis {
 public:
  explicit SymBasis(int n) : n_(n) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) pairs_.emplace_back(i, j);
  }
  int size() const { return static_cast<int>(pairs_.size()); }
  Mat element(int a) const {
    Mat e = Mat::Zero(n_, n_);
    const auto [i, j] = pairs_[a];
    if (i == j) {
      e(i, i) = 1.0;
    } else {
      e(i, j) = e(j, i) = 1.0 / std::sqrt(2.0);
    }
    return e;
  }
  Vec coords(const Mat& m) const {
    Vec c(size());
    for (int a = 0; a < size(); ++a) {
      const auto [i, j] = pairs_[a];
      c(a) = i == j ? m(i, i) : std::sqrt(2.0) * m(i, j);
    }
    return c;
  }
  Mat matrix(const Vec& c) const {
    Mat m = Mat::Zero(n_, n_);
    for (int a = 0; a < size(); ++a) m += c(a) * element(a);
    return m;
  }

 private:
  int n_;
  std::vector<std::pair<int, int>> pairs_;
};

bool is_pd(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

double log_det_pd(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

CovSolution solve_cov(const StackedSystem& st, const CostWeights& w, const Mat& est_prior0,
                      const std::vector<Mat>& innovation_cov, const Mat& target,
                      const CovSolverOptions& opts) {
  const int n = st.horizon, nx = st.nx;
  w.validate(n, nx, st.nu);
  linalg::require_square(target, nx, "solve_cov: target");
  linalg::require_square(est_prior0, nx, "solve_cov: P^_0-");
  if (!linalg::is_psd(est_prior0, 1e-10)) throw ValidationError("solve_cov: P^_0- is not PSD");
  if (linalg::lambda_min(target) <= 0.0) {
    throw SolverError("solve_cov: terminal covariance bound is not positive definite");
  }
  if (static_cast<int>(innovation_cov.size()) != n + 1) {
    throw DimensionError("solve_cov: need N+1 innovation covariances");
  }

  LqData d;
  d.n = n;
  d.A = st.step_A;
  d.B = st.step_B;
  d.Q = w.Q;
  d.R = w.R;
  for (int k = 0; k <= n; ++k) {
    d.W.push_back(linalg::symmetrize(st.filter_gain[k] * innovation_cov[k] *
                                     st.filter_gain[k].transpose()));
  }
  d.sigma0 = linalg::symmetrize(est_prior0 + d.W[0]);

  const Mat t = linalg::inv_sqrtm_pd(target);  // S^{-1/2}
  const Mat eye = Mat::Identity(nx, nx);
  auto normalized_terminal = [&](const LqPass& p) {
    return linalg::symmetrize(t * p.sigma[n] * t);
  };

  CovSolution sol;
  Mat lambda = Mat::Zero(nx, nx);
  LqPass pass = lq_solve(d, lambda);
  const double open_value = linalg::lambda_max(normalized_terminal(pass));

  if (open_value >= 1.0 - 1e-12) {
    sol.constraint_active = true;
    const SymBasis basis(nx);
    const int m = basis.size();
    auto lambda_of = [&](const Mat& mm) { return linalg::symmetrize(t * mm * t); };
    auto barrier_value = [&](const LqPass& p, const Mat& mm, double mu) {
      return p.value - mm.trace() + mu * log_det_pd(mm);
    };

    Mat mult = eye;  // normalized multiplier, Lambda = S^{-1/2} M S^{-1/2}
    pass = lq_solve(d, lambda_of(mult));
    const double scale = std::max(1.0, std::abs(pass.running));
    double mu = scale;
    const double blowup = 1e12 * scale;
    int iterations = 0;
    bool done = false;

    while (!done) {
      // Centering by damped Newton.
      for (;;) {
        if (++iterations > opts.max_iterations) {
          const bool infeasible = linalg::lambda_max(mult) > 1e6 * scale;
          throw SolverError(infeasible
                                ? "solve_cov: terminal covariance target is infeasible"
                                : "solve_cov: interior-point iteration limit reached");
        }
        const Mat m_inv = linalg::spd_inverse(mult, "barrier multiplier");
        const Mat grad_m = normalized_terminal(pass) - eye + mu * m_inv;
        const Vec grad = basis.coords(grad_m);
        Mat hess(m, m);
        for (int b = 0; b < m; ++b) {
          const Mat e = basis.element(b);
          const Mat col = t * d_terminal_cov(d, pass, t * e * t) * t - mu * m_inv * e * m_inv;
          hess.col(b) = basis.coords(linalg::symmetrize(col));
        }
        const Mat neg_h = linalg::symmetrize(-hess);
        Eigen::LDLT<Mat> ldlt(neg_h);
        Vec delta = ldlt.solve(grad);
        if (ldlt.info() != Eigen::Success || !delta.allFinite()) delta = grad;
        const double decrement = grad.dot(delta);
        if (decrement <= 1e-20 * scale || grad.norm() <= 1e-13) break;

        const Mat step = basis.matrix(delta);
        const double phi0 = barrier_value(pass, mult, mu);
        double s = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 80; ++ls, s *= 0.5) {
          const Mat trial = linalg::symmetrize(mult + s * step);
          if (!is_pd(trial)) continue;
          LqPass trial_pass = lq_solve(d, lambda_of(trial));
          const double phi = barrier_value(trial_pass, trial, mu);
          if (phi >= phi0 + 0.25 * s * decrement || (s < 1e-6 && phi >= phi0)) {
            mult = trial;
            pass = std::move(trial_pass);
            accepted = true;
            break;
          }
        }
        if (!accepted) break;  // no further progress possible at this precision
        if (linalg::lambda_max(mult) > blowup) {
          throw SolverError("solve_cov: terminal covariance target is infeasible");
        }
        if (decrement <= 1e-14 * scale) break;
      }
      const double gap = nx * mu;
      if (gap <= opts.duality_gap * std::max(1.0, std::abs(pass.running))) {
        done = true;
      } else {
        mu *= 0.1;
      }
    }
    lambda = lambda_of(mult);
    sol.iterations = iterations;
    sol.duality_gap = (mult * (eye - normalized_terminal(pass))).trace();
  }
  sol.multiplier = lambda;

  // Stacked feedback: K = [blkdiag(K_0, ..., K_{N-1}) | 0], F = K (I - B K)^-1.
  const auto rows = st.B.rows();
  Mat k_stacked = Mat::Zero(st.B.cols(), rows);
  for (int k = 0; k < n; ++k) {
    k_stacked.block(k * st.nu, k * nx, st.nu, nx) = pass.K[k];
    sol.step_gain.push_back(pass.K[k]);
  }
  const Mat i_bk = Mat::Identity(rows, rows) - st.B * k_stacked;
  sol.K = k_stacked;
  sol.F = i_bk.transpose()
              .triangularView<Eigen::Upper>()
              .solve(k_stacked.transpose())
              .transpose();

  const Mat pz = open_loop_covariance(st, est_prior0, innovation_cov);
  sol.cost = covariance_cost(st, w, sol.F, pz);
  const Mat closed_terminal =
      st.selector(n) * (Mat::Identity(rows, rows) + st.B * sol.F);
  sol.terminal_cov = linalg::symmetrize(closed_terminal * pz * closed_terminal.transpose());
  sol.constraint_value = covariance_constraint_value(st, sol.F, pz, target);

  if (sol.constraint_value > 1.0 + opts.constraint_slack ||
      linalg::lambda_min(target - sol.terminal_cov) < -opts.psd_slack) {
    throw SolverError("solve_cov: solution violates the terminal covariance bound (value " +
                      std::to_string(sol.constraint_value) + ")");
  }
  return sol;
}

}  // namespace csbrm
