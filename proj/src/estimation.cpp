#include "csbrm/estimation.hpp"

#include <algorithm>

namespace csbrm {

Mat FilterRollout::injected(int k) const {
  return linalg::symmetrize(gain[k] * innovation[k] * gain[k].transpose());
}

MeasurementUpdate measurement_update(const Mat& prior_error, const Mat& c, const Mat& d) {
  const auto nx = prior_error.rows();
  linalg::require_square(prior_error, nx, "measurement_update: prior");
  if (c.cols() != nx || d.rows() != c.rows() || d.cols() != c.rows()) {
    throw DimensionError("measurement_update: C/D shape mismatch");
  }
  MeasurementUpdate out;
  out.innovation = linalg::symmetrize(c * prior_error * c.transpose() + d * d.transpose());
  Eigen::LLT<Mat> llt(out.innovation);
  if (llt.info() != Eigen::Success) {
    throw SolverError("innovation covariance is not invertible; check D (landmark at zero range?)");
  }
  // L = P C^T S^-1  <=>  S L^T = C P
  out.gain = llt.solve(c * prior_error).transpose();
  const Mat i_lc = Mat::Identity(nx, nx) - out.gain * c;
  out.posterior = linalg::symmetrize(i_lc * prior_error);
  return out;
}

namespace {

FilterRollout run_filter(const LinearizedSystem& sys, const Mat& initial, bool skip_first) {
  const int n = sys.horizon();
  const auto nx = sys.state_dim();
  linalg::require_square(initial, nx, "kf_rollout: initial error covariance");
  if (!linalg::is_psd(initial, 1e-10)) {
    throw ValidationError("kf_rollout: initial error covariance is not symmetric PSD");
  }
  FilterRollout out;
  out.gain.reserve(n + 1);
  out.prior_error.reserve(n + 1);
  out.posterior_error.reserve(n + 1);
  out.innovation.reserve(n + 1);

  Mat prior = linalg::symmetrize(initial);
  for (int k = 0; k <= n; ++k) {
    MeasurementUpdate upd = measurement_update(prior, sys.C[k], sys.D[k]);
    if (k == 0 && skip_first) {
      upd.gain.setZero();
      upd.posterior = prior;
    }
    out.prior_error.push_back(prior);
    out.posterior_error.push_back(upd.posterior);
    out.gain.push_back(std::move(upd.gain));
    out.innovation.push_back(std::move(upd.innovation));
    if (k < n) {
      prior = linalg::symmetrize(sys.A[k] * out.posterior_error.back() * sys.A[k].transpose() +
                                 sys.G[k] * sys.G[k].transpose());
    }
  }
  return out;
}

}  // namespace

FilterRollout kf_rollout(const LinearizedSystem& sys, const Mat& initial_prior_error) {
  return run_filter(sys, initial_prior_error, false);
}

FilterRollout kf_rollout_from_posterior(const LinearizedSystem& sys, const Mat& posterior0) {
  return run_filter(sys, posterior0, true);
}

bool MonotoneReport::all() const {
  return std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

MonotoneReport check_monotone(const LinearizedSystem& sys, const Mat& larger, const Mat& smaller,
                              double tol) {
  if (!linalg::psd_leq(smaller, larger, tol)) {
    throw ValidationError("check_monotone: initial covariances are not ordered");
  }
  const FilterRollout big = kf_rollout(sys, larger);
  const FilterRollout small = kf_rollout(sys, smaller);
  MonotoneReport report;
  for (std::size_t k = 0; k < big.prior_error.size(); ++k) {
    const double m = linalg::lambda_min(big.prior_error[k] - small.prior_error[k]);
    report.margin.push_back(m);
    report.holds.push_back(m >= -tol);
  }
  return report;
}

}  // namespace csbrm
