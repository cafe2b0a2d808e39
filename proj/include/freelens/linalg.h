#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "freelens/common.h"
#include "freelens/rng.h"

namespace freelens {

template <typename Scalar>
Scalar lambda_max_sym(const DenseMatrix<Scalar>& m) {
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(m,
                                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues()(m.rows() - 1);
}

template <typename Scalar>
Scalar lambda_min_sym(const DenseMatrix<Scalar>& m) {
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(m,
                                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

template <typename Scalar>
Scalar spectral_norm_sym(const DenseMatrix<Scalar>& m) {
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(m,
                                                        Eigen::EigenvaluesOnly);
  using std::abs;
  return std::max(abs(es.eigenvalues()(0)), abs(es.eigenvalues()(m.rows() - 1)));
}

// Largest singular value of a general dense matrix.
template <typename Scalar>
Scalar spectral_norm(const DenseMatrix<Scalar>& m) {
  if (m.rows() == 0 || m.cols() == 0) return Scalar(0);
  Eigen::JacobiSVD<DenseMatrix<Scalar>> svd(m);
  return svd.singularValues()(0);
}

// Deterministic pairwise summation; the result does not depend on how the
// values were produced, only on their order.
template <typename Scalar>
Scalar pairwise_sum(const std::vector<Scalar>& values) {
  std::vector<Scalar> level = values;
  if (level.empty()) return Scalar(0);
  while (level.size() > 1) {
    std::vector<Scalar> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(level[i] + level[i + 1]);
    if (level.size() % 2 == 1) next.push_back(level.back());
    level.swap(next);
  }
  return level[0];
}

// Largest algebraic eigenvalue of a symmetric operator given only by its
// matrix-vector product. Lanczos with full reorthogonalization and a
// deterministic start vector; intended for operators too large for a dense
// eigensolve.
template <typename Scalar, typename Apply>
Scalar lanczos_lambda_max(Index dim, Apply&& apply, int max_iters = 250,
                          Scalar tol = Scalar(1e-13),
                          std::uint64_t seed = 0x4c414e43ULL) {
  using Vector = DenseVector<Scalar>;
  if (dim <= 0) return Scalar(0);
  if (max_iters > dim) max_iters = static_cast<int>(dim);

  std::vector<Vector> basis;
  basis.reserve(static_cast<std::size_t>(max_iters));
  Vector v(dim);
  for (Index i = 0; i < dim; ++i)
    v(i) = static_cast<Scalar>(normal_draw(seed, static_cast<std::uint64_t>(i)));
  v /= v.norm();

  std::vector<Scalar> alpha, beta;
  Scalar theta_prev = Scalar(0);
  int stable = 0;
  for (int j = 0; j < max_iters; ++j) {
    basis.push_back(v);
    Vector w = apply(basis.back());
    const Scalar a = basis.back().dot(w);
    alpha.push_back(a);
    w -= a * basis.back();
    if (j > 0) w -= beta.back() * basis[static_cast<std::size_t>(j) - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q.dot(w) * q;

    DenseMatrix<Scalar> t = DenseMatrix<Scalar>::Zero(j + 1, j + 1);
    for (int i = 0; i <= j; ++i) t(i, i) = alpha[static_cast<std::size_t>(i)];
    for (int i = 0; i < j; ++i)
      t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(t);
    const Scalar theta = es.eigenvalues()(j);

    const Scalar b = w.norm();
    const Scalar scale = std::max(Scalar(1), std::abs(theta));
    const Scalar residual = b * std::abs(es.eigenvectors()(j, j));
    if (j > 0 && std::abs(theta - theta_prev) <= tol * scale &&
        residual <= std::sqrt(tol) * scale)
      ++stable;
    else
      stable = 0;
    theta_prev = theta;
    if (stable >= 3 || b <= tol * scale) return theta;

    beta.push_back(b);
    v = w / b;
  }
  return theta_prev;
}

}  // namespace freelens
