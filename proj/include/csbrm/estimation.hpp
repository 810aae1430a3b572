#pragma once

#include "csbrm/core.hpp"
#include "csbrm/sysmodels.hpp"

#include <vector>

namespace csbrm {

/// Covariance side of a Kalman filter run along a linearized edge. A
/// measurement is processed at every k = 0..N, including k = 0.
struct FilterRollout {
  std::vector<Mat> gain;             // L_k
  std::vector<Mat> prior_error;      // P~_{k-}
  std::vector<Mat> posterior_error;  // P~_k
  std::vector<Mat> innovation;       // P_xi_k = C P~_{k-} C^T + D D^T

  int horizon() const { return static_cast<int>(gain.size()) - 1; }

  /// L_k P_xi_k L_k^T, the covariance that the k-th innovation injects into the
  /// estimate (equal to P~_{k-} - P~_k for the optimal gain).
  Mat injected(int k) const;
};

struct MeasurementUpdate {
  Mat gain;
  Mat posterior;
  Mat innovation;
};

/// Single Kalman measurement update of an error covariance.
MeasurementUpdate measurement_update(const Mat& prior_error, const Mat& c, const Mat& d);

FilterRollout kf_rollout(const LinearizedSystem& sys, const Mat& initial_prior_error);

/// Filter run whose k = 0 measurement has already been processed elsewhere:
/// P~_0 = posterior0, gain[0] = 0 and nothing is injected at k = 0.
FilterRollout kf_rollout_from_posterior(const LinearizedSystem& sys, const Mat& posterior0);

struct MonotoneReport {
  /// lambda_min(P~_{k-} - P~'_{k-}) for k = 0..N.
  std::vector<double> margin;
  std::vector<bool> holds;
  bool all() const;
};

/// Runs the filter from both initial error covariances and compares the prior
/// error covariances step by step. Requires smaller <= larger.
MonotoneReport check_monotone(const LinearizedSystem& sys, const Mat& larger, const Mat& smaller,
                              double tol = linalg::kPsdTol);

}  // namespace csbrm
