#pragma once

// Projection algebra behind the Hotelling-RS statistic. For an SPD
// covariance S and the all-ones vector 1:
//
//   w(S) = (1' S^-1 1)^-1 S^-1 1
//   A(S) = S^-1/2 - S^-1/2 1 (1' S^-1 1)^-1 1' S^-1
//   B(S) = I - S^-1/2 1 (1' S^-1 1)^-1 1' S^-1/2
//
// so that A(S) g = S^-1/2 (g - 1 w(S)'g) and B(S) is the orthogonal
// projector onto the complement of S^-1/2 1 (idempotent, rank K-1).

#include <Eigen/Dense>

namespace rsclust {

template <typename Derived>
using DenseMatrixOf =
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Derived>
using DenseVectorOf = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;

/// Symmetric inverse square root via eigendecomposition.
template <typename Derived>
DenseMatrixOf<Derived> inverse_sqrt(const Eigen::MatrixBase<Derived>& sigma) {
  Eigen::SelfAdjointEigenSolver<DenseMatrixOf<Derived>> eig(sigma);
  return eig.eigenvectors() *
         eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

template <typename Derived>
DenseVectorOf<Derived> gls_weights(const Eigen::MatrixBase<Derived>& sigma) {
  using Vec = DenseVectorOf<Derived>;
  const Vec ones = Vec::Ones(sigma.rows());
  const Vec s_inv_ones = sigma.llt().solve(ones);
  return s_inv_ones / ones.dot(s_inv_ones);
}

template <typename Derived>
DenseMatrixOf<Derived> projection_a(const Eigen::MatrixBase<Derived>& sigma) {
  using Vec = DenseVectorOf<Derived>;
  const DenseMatrixOf<Derived> root = inverse_sqrt(sigma);
  const Vec ones = Vec::Ones(sigma.rows());
  return root - (root * ones) * gls_weights(sigma).transpose();
}

template <typename Derived>
DenseMatrixOf<Derived> projection_b(const Eigen::MatrixBase<Derived>& sigma) {
  using Vec = DenseVectorOf<Derived>;
  using Mat = DenseMatrixOf<Derived>;
  const Mat root = inverse_sqrt(sigma);
  const Vec u = root * Vec::Ones(sigma.rows());
  return Mat::Identity(sigma.rows(), sigma.rows()) - u * u.transpose() / u.squaredNorm();
}

/// R (g - 1 z)' S^-1 (g - 1 z) with z = w(S)'g.
template <typename DerivedG, typename DerivedS>
typename DerivedG::Scalar hotelling_quadratic_form(
    const Eigen::MatrixBase<DerivedG>& g_bar,
    const Eigen::MatrixBase<DerivedS>& sigma, double tours) {
  using Vec = DenseVectorOf<DerivedG>;
  const auto z = gls_weights(sigma).dot(g_bar);
  const Vec resid = g_bar - Vec::Constant(g_bar.size(), z);
  return tours * resid.dot(sigma.llt().solve(resid));
}

/// R |A(S) g|^2, the projection form of the same statistic.
template <typename DerivedG, typename DerivedS>
typename DerivedG::Scalar hotelling_projection_form(
    const Eigen::MatrixBase<DerivedG>& g_bar,
    const Eigen::MatrixBase<DerivedS>& sigma, double tours) {
  return tours * (projection_a(sigma) * g_bar).squaredNorm();
}

}  // namespace rsclust
