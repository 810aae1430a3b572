#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance suite.

#include "csbrm/core.hpp"
#include "csbrm/estimation.hpp"
#include "csbrm/steering.hpp"

#include <random>
#include <stdexcept>
#include <vector>

namespace csbrm::testing {

// Mean problem as an equality-constrained QP in (x_0..x_N, u_0..u_{N-1}),
// solved through its KKT system.
inline Vec kkt_mean_oracle(const LinearizedSystem& sys, const CostWeights& w, const Vec& x0,
                           const Vec& xN) {
  const int n = sys.horizon(), nx = sys.state_dim(), nu = sys.control_dim();
  const int nxv = (n + 1) * nx, nv = nxv + n * nu;
  const int nc = nx + n * nx + nx;
  Mat h = Mat::Zero(nv, nv);
  Vec g = Vec::Zero(nv);
  for (int k = 0; k < n; ++k) {
    h.block(k * nx, k * nx, nx, nx) = 2.0 * w.Q[k];
    g.segment(k * nx, nx) = -2.0 * w.Q[k] * w.reference[k];
    h.block(nxv + k * nu, nxv + k * nu, nu, nu) = 2.0 * w.R[k];
  }
  Mat a = Mat::Zero(nc, nv);
  Vec b = Vec::Zero(nc);
  a.block(0, 0, nx, nx).setIdentity();
  b.head(nx) = x0;
  for (int k = 0; k < n; ++k) {
    const int r = nx + k * nx;
    a.block(r, (k + 1) * nx, nx, nx).setIdentity();
    a.block(r, k * nx, nx, nx) = -sys.A[k];
    a.block(r, nxv + k * nu, nx, nu) = -sys.B[k];
    b.segment(r, nx) = sys.h[k];
  }
  a.block(nx + n * nx, n * nx, nx, nx).setIdentity();
  b.tail(nx) = xN;
  Mat kkt = Mat::Zero(nv + nc, nv + nc);
  kkt.topLeftCorner(nv, nv) = h;
  kkt.topRightCorner(nv, nc) = a.transpose();
  kkt.bottomLeftCorner(nc, nv) = a;
  Vec rhs(nv + nc);
  rhs << -g, b;
  const Vec sol = kkt.fullPivLu().solve(rhs);
  return sol.segment(nxv, n * nu);
}

// Lower-block-triangular feedback F over the causal pattern, parametrized by
// its free entries.
struct CausalPattern {
  int n, nx, nu;
  int size() const {
    int s = 0;
    for (int k = 0; k < n; ++k) s += nu * (k + 1) * nx;
    return s;
  }
  Mat unpack(const Vec& p) const {
    Mat f = Mat::Zero(n * nu, (n + 1) * nx);
    int idx = 0;
    for (int k = 0; k < n; ++k)
      for (int r = 0; r < nu; ++r)
        for (int c = 0; c < (k + 1) * nx; ++c) f(k * nu + r, c) = p(idx++);
    return f;
  }
  Vec pack(const Mat& f) const {
    Vec p(size());
    int idx = 0;
    for (int k = 0; k < n; ++k)
      for (int r = 0; r < nu; ++r)
        for (int c = 0; c < (k + 1) * nx; ++c) p(idx++) = f(k * nu + r, c);
    return p;
  }
};

inline Mat terminal_of(const StackedSystem& st, const Mat& f, const Mat& pz) {
  const auto rows = st.B.rows();
  const Mat t = st.selector(st.horizon) * (Mat::Identity(rows, rows) + st.B * f);
  return linalg::symmetrize(t * pz * t.transpose());
}

// Primal log-barrier method over the free entries of F with finite-difference
// derivatives. Small problems only.
inline double primal_cov_oracle(const StackedSystem& st, const CostWeights& w, const Mat& pz,
                                const Mat& target, const Mat& f_start) {
  const CausalPattern pat{st.horizon, st.nx, st.nu};
  const int m = pat.size();
  Vec p = pat.pack(f_start);
  auto feasible = [&](const Vec& q) {
    Eigen::LLT<Mat> llt(target - terminal_of(st, pat.unpack(q), pz));
    return llt.info() == Eigen::Success;
  };
  if (!feasible(p)) throw std::invalid_argument("primal_cov_oracle: infeasible start");
  double t = 1.0;
  auto phi = [&](const Vec& q) {
    const Mat f = pat.unpack(q);
    Eigen::LLT<Mat> llt(target - terminal_of(st, f, pz));
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return t * covariance_cost(st, w, f, pz) - logdet;
  };
  const double h = 1e-5;
  for (int outer = 0; outer < 12; ++outer) {
    for (int it = 0; it < 100; ++it) {
      Vec g(m);
      Mat hess(m, m);
      const double f0 = phi(p);
      std::vector<double> fp(m), fm(m);
      for (int i = 0; i < m; ++i) {
        Vec a = p, b = p;
        a(i) += h;
        b(i) -= h;
        fp[i] = phi(a);
        fm[i] = phi(b);
        g(i) = (fp[i] - fm[i]) / (2 * h);
        hess(i, i) = (fp[i] - 2 * f0 + fm[i]) / (h * h);
      }
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
          Vec a = p;
          a(i) += h;
          a(j) += h;
          hess(i, j) = hess(j, i) = (phi(a) - fp[i] - fp[j] + f0) / (h * h);
        }
      Vec dir = -hess.ldlt().solve(g);
      if (!dir.allFinite() || g.dot(dir) >= 0) dir = -g;
      const double dec = -g.dot(dir);
      if (dec < 1e-12) break;
      double s = 1.0;
      while (s > 1e-12) {
        const Vec trial = p + s * dir;
        if (feasible(trial) && phi(trial) <= f0 - 0.25 * s * dec) break;
        s *= 0.5;
      }
      if (s <= 1e-12) break;
      p += s * dir;
    }
    t *= 10.0;
  }
  return covariance_cost(st, w, pat.unpack(p), pz);
}

inline Mat gains_to_f(const StackedSystem& st, const std::vector<Mat>& k_steps) {
  const auto rows = st.B.rows();
  Mat k = Mat::Zero(st.B.cols(), rows);
  for (int i = 0; i < st.horizon; ++i) k.block(i * st.nu, i * st.nx, st.nu, st.nx) = k_steps[i];
  return k * (Mat::Identity(rows, rows) - st.B * k).inverse();
}

inline Mat sample_cov(const std::vector<Vec>& xs) {
  Vec mean = Vec::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Mat c = Mat::Zero(mean.size(), mean.size());
  for (const auto& x : xs) c += (x - mean) * (x - mean).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

inline Vec sample_gaussian(std::mt19937_64& rng, const Vec& mean, const Mat& cov) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
  return mean + linalg::sqrtm_psd(cov) * z;
}

}  // namespace csbrm::testing
