#include "csbrm/core.hpp"

#include <algorithm>
#include <cmath>

namespace csbrm::linalg {

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

double lambda_min(const Mat& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double lambda_max(const Mat& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool psd_leq(const Mat& a, const Mat& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("psd_leq: shape mismatch");
  }
  return lambda_min(b - a) >= -tol;
}

bool is_psd(const Mat& sym, double tol) {
  return asymmetry(sym) <= 1e-8 * std::max(1.0, sym.cwiseAbs().maxCoeff()) &&
         lambda_min(sym) >= -tol;
}

Mat sqrtm_psd(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Mat inv_sqrtm_pd(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw SolverError("inv_sqrtm_pd: matrix is not positive definite");
  }
  Vec d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Mat spd_inverse(const Mat& sym, const char* what) {
  Eigen::LLT<Mat> llt(symmetrize(sym));
  if (llt.info() != Eigen::Success) {
    throw SolverError(std::string(what) + ": matrix is not positive definite");
  }
  Mat inv = llt.solve(Mat::Identity(sym.rows(), sym.cols()));
  return symmetrize(inv);
}

double asymmetry(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

Mat block_diag(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

void require_square(const Mat& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + "x" +
                         std::to_string(n) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

}  // namespace csbrm::linalg
