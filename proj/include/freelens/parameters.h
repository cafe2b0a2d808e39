#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/rng.h"

namespace freelens {

// Concentration parameters of the centered part of a model:
//   sigma^2   = ||sum A_k A_k^T|| v ||sum A_k^T A_k||   (operator scale)
//   v^2       = ||cov of the entries||                  (entrywise scale)
//   sigma_*^2 = sup_{|u|=|w|=1} sum (u^T A_k w)^2       (weak variance)
//   v_tilde   = sqrt(sigma * v)
// sigma_* has no known efficient exact algorithm, so it is reported as a
// bracket: a heuristic lower bound from alternating maximization and the
// provable upper bound sigma ^ v.
template <typename Scalar = double>
struct ModelParameters {
  Scalar sigma = 0;
  Scalar v = 0;
  Scalar sigma_star_lower = 0;
  Scalar sigma_star_upper = 0;
  Scalar v_tilde = 0;
};

namespace detail {

// (sum A_k A_k^T, sum A_k^T A_k) accumulated dense from sparse coefficients.
template <typename Scalar>
std::pair<DenseMatrix<Scalar>, DenseMatrix<Scalar>> gram_sums(
    const CoefficientModel<Scalar>& model) {
  DenseMatrix<Scalar> row_gram = DenseMatrix<Scalar>::Zero(model.d1, model.d1);
  DenseMatrix<Scalar> col_gram = DenseMatrix<Scalar>::Zero(model.d2, model.d2);
  for (const auto& a : model.coefficients) {
    row_gram += DenseMatrix<Scalar>(a * a.transpose());
    col_gram += DenseMatrix<Scalar>(a.transpose() * a);
  }
  return {std::move(row_gram), std::move(col_gram)};
}

}  // namespace detail

template <typename Scalar>
Scalar sigma(const CoefficientModel<Scalar>& model) {
  if (model.coefficient_count() == 0) return Scalar(0);
  auto [row_gram, col_gram] = detail::gram_sums(model);
  const Scalar m =
      std::max(lambda_max_sym(row_gram), lambda_max_sym(col_gram));
  return std::sqrt(std::max(m, Scalar(0)));
}

// ||cov(X)||^{1/2}: the largest singular value of the n x (d1 d2) matrix
// whose k-th row is vec(A_k). Small coefficient families go through a dense
// Gram eigensolve; large ones through Lanczos on b -> sum_k <A_k, b> A_k.
template <typename Scalar>
Scalar v_param(const CoefficientModel<Scalar>& model) {
  const Index n = model.coefficient_count();
  if (n == 0) return Scalar(0);
  if (n <= 512) {
    DenseMatrix<Scalar> gram(n, n);
    for (Index k = 0; k < n; ++k)
      for (Index l = k; l < n; ++l) {
        const Scalar dot =
            model.coefficients[static_cast<std::size_t>(k)]
                .cwiseProduct(model.coefficients[static_cast<std::size_t>(l)])
                .sum();
        gram(k, l) = dot;
        gram(l, k) = dot;
      }
    return std::sqrt(std::max(lambda_max_sym(gram), Scalar(0)));
  }
  const Index dim = model.d1 * model.d2;
  auto apply = [&](const DenseVector<Scalar>& b) {
    Eigen::Map<const DenseMatrix<Scalar>> bm(b.data(), model.d1, model.d2);
    DenseVector<Scalar> out = DenseVector<Scalar>::Zero(dim);
    Eigen::Map<DenseMatrix<Scalar>> om(out.data(), model.d1, model.d2);
    for (const auto& a : model.coefficients) {
      Scalar dot = Scalar(0);
      for (Index col = 0; col < a.outerSize(); ++col)
        for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it)
          dot += it.value() * bm(it.row(), it.col());
      if (dot == Scalar(0)) continue;
      for (Index col = 0; col < a.outerSize(); ++col)
        for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it)
          om(it.row(), it.col()) += dot * it.value();
    }
    return out;
  };
  return std::sqrt(std::max(lanczos_lambda_max<Scalar>(dim, apply), Scalar(0)));
}

// Bracket for sigma_*. The lower end is the best value of the bilinear
// sphere maximization found by alternating eigenvector steps over random
// restarts (deterministic per-restart seeds); the upper end is the provable
// bound sigma ^ v.
template <typename Scalar>
std::pair<Scalar, Scalar> sigma_star(const CoefficientModel<Scalar>& model,
                                     int restarts = 16, int iters = 200) {
  if (restarts < 1) throw InvalidParameter("sigma_star: restarts must be >= 1");
  if (iters < 1) throw InvalidParameter("sigma_star: iters must be >= 1");
  const Scalar upper = std::min(sigma(model), v_param(model));
  const Index n = model.coefficient_count();
  if (n == 0) return {Scalar(0), Scalar(0)};

  const auto objective = [&](const DenseVector<Scalar>& u,
                             const DenseVector<Scalar>& w) {
    Scalar s = Scalar(0);
    for (const auto& a : model.coefficients) {
      const Scalar b = u.dot(DenseVector<Scalar>(a * w));
      s += b * b;
    }
    return s;
  };

  std::vector<Scalar> found(static_cast<std::size_t>(restarts), Scalar(0));
  parallel_for(restarts, [&](std::ptrdiff_t restart) {
    const std::uint64_t seed =
        derive_seed(0x73696773746172ULL, static_cast<std::uint64_t>(restart));
    DenseVector<Scalar> u(model.d1), w(model.d2);
    for (Index i = 0; i < model.d1; ++i)
      u(i) = static_cast<Scalar>(normal_draw(seed, static_cast<std::uint64_t>(i)));
    for (Index i = 0; i < model.d2; ++i)
      w(i) = static_cast<Scalar>(
          normal_draw(seed, static_cast<std::uint64_t>(model.d1 + i)));
    u /= u.norm();
    w /= w.norm();

    Scalar prev = objective(u, w);
    for (int it = 0; it < iters; ++it) {
      // Fixing u, the objective is w^T M_u w with M_u = sum (A_k^T u)(A_k^T u)^T.
      DenseMatrix<Scalar> m_u = DenseMatrix<Scalar>::Zero(model.d2, model.d2);
      for (const auto& a : model.coefficients) {
        DenseVector<Scalar> y = a.transpose() * u;
        m_u.noalias() += y * y.transpose();
      }
      Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> esw(m_u);
      w = esw.eigenvectors().col(model.d2 - 1);

      DenseMatrix<Scalar> m_w = DenseMatrix<Scalar>::Zero(model.d1, model.d1);
      for (const auto& a : model.coefficients) {
        DenseVector<Scalar> y = a * w;
        m_w.noalias() += y * y.transpose();
      }
      Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> esu(m_w);
      u = esu.eigenvectors().col(model.d1 - 1);

      const Scalar cur = esu.eigenvalues()(model.d1 - 1);
      if (std::abs(cur - prev) < Scalar(1e-12)) {
        prev = cur;
        break;
      }
      prev = cur;
    }
    found[static_cast<std::size_t>(restart)] = prev;
  });

  const Scalar best = *std::max_element(found.begin(), found.end());
  const Scalar lower =
      std::min(std::sqrt(std::max(best, Scalar(0))), upper);
  return {lower, upper};
}

template <typename Scalar>
ModelParameters<Scalar> params_report(const CoefficientModel<Scalar>& model,
                                      int restarts = 16, int iters = 200) {
  ModelParameters<Scalar> p;
  p.sigma = sigma(model);
  p.v = v_param(model);
  auto [lo, hi] = sigma_star(model, restarts, iters);
  p.sigma_star_lower = lo;
  p.sigma_star_upper = hi;
  p.v_tilde = std::sqrt(p.sigma * p.v);
  if (p.sigma_star_lower > p.sigma_star_upper)
    throw InternalError("params_report: sigma_star bracket inverted");
  if (p.sigma_star_upper > std::min(p.sigma, p.v) + Scalar(1e-9))
    throw InternalError("params_report: sigma_star upper exceeds sigma ^ v");
  return p;
}

}  // namespace freelens
