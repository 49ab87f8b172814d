#pragma once

#include "entrofact/common.hpp"

#include <Eigen/Dense>

#include <string>

namespace entrofact {

inline double max_asymmetry(const Mat& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

// Eigenvalues of (m + m^T)/2, ascending order.
inline Vec symmetric_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// Largest eigenvalue of a symmetric matrix. The input is checked for
// symmetry within `tol` and then symmetrized, so float noise in an
// algebraically symmetric matrix does not leak into the spectrum.
inline double max_eigenvalue(const Mat& m, double tol = 1e-10) {
  require(m.rows() == m.cols(), "max_eigenvalue: matrix must be square");
  if (m.rows() == 0) return 0.0;
  const double asym = max_asymmetry(m);
  if (!(asym <= tol))
    fail("max_eigenvalue: matrix asymmetry " + std::to_string(asym) +
         " exceeds tolerance " + std::to_string(tol));
  return symmetric_eigenvalues(m).maxCoeff();
}

inline double min_eigenvalue(const Mat& m, double tol = 1e-10) {
  require(m.rows() == m.cols(), "min_eigenvalue: matrix must be square");
  if (m.rows() == 0) return 0.0;
  const double asym = max_asymmetry(m);
  if (!(asym <= tol))
    fail("min_eigenvalue: matrix asymmetry exceeds tolerance");
  return symmetric_eigenvalues(m).minCoeff();
}

// Spectral norm (largest singular value); used for small residual matrices.
inline double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(m.transpose() * m, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-neg_tol, 0) are clipped to zero; anything below -neg_tol is rejected.
inline Mat psd_sqrt(const Mat& m, double neg_tol = 1e-10) {
  require(m.rows() == m.cols(), "psd_sqrt: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec vals = es.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals[i] < -neg_tol)
      fail("psd_sqrt: negative eigenvalue " + std::to_string(vals[i]));
    vals[i] = vals[i] > 0.0 ? std::sqrt(vals[i]) : 0.0;
  }
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace entrofact
