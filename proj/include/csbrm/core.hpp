#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace csbrm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix or vector sizes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (bad scenario field, V <= 0, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a valid answer (singular system,
/// infeasible covariance target, non-convergence).
class SolverError : public Error {
 public:
  using Error::Error;
};

namespace linalg {

/// Default slack for PSD comparisons, lambda_min(B - A) >= -tol.
inline constexpr double kPsdTol = 1e-9;

Mat symmetrize(const Mat& m);

double lambda_min(const Mat& sym);
double lambda_max(const Mat& sym);

/// A <= B in the Loewner order, up to tol.
bool psd_leq(const Mat& a, const Mat& b, double tol = kPsdTol);

bool is_psd(const Mat& sym, double tol = kPsdTol);

/// Symmetric PSD square root via eigendecomposition (negative eigenvalues clipped).
Mat sqrtm_psd(const Mat& sym);

/// Inverse square root of a symmetric positive definite matrix.
Mat inv_sqrtm_pd(const Mat& sym);

/// Inverse of a symmetric positive definite matrix through LLT.
/// Throws SolverError if the factorization fails.
Mat spd_inverse(const Mat& sym, const char* what);

/// max_ij |a_ij - a_ji|
double asymmetry(const Mat& m);

Mat block_diag(const std::vector<Mat>& blocks);

void require_square(const Mat& m, Eigen::Index n, const char* what);

}  // namespace linalg

}  // namespace csbrm
