#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "freelens/common.h"
#include "freelens/rng.h"

namespace freelens {

// Gaussian random matrix model X = mean + sum_k g_k A_k with g_k iid
// standard normal. The coefficients A_k are held sparse so that structured
// models (Wigner, band, spiked) scale to large dimension; dense views are
// available on demand. Models are immutable after construction and safe to
// share across threads.
template <typename Scalar = double>
struct CoefficientModel {
  Index d1 = 0;
  Index d2 = 0;
  bool self_adjoint = false;
  DenseMatrix<Scalar> mean;                        // A_0
  std::vector<SparseMatrix<Scalar>> coefficients;  // A_1 .. A_n

  Index coefficient_count() const {
    return static_cast<Index>(coefficients.size());
  }

  DenseMatrix<Scalar> coefficient_dense(Index k) const {
    return DenseMatrix<Scalar>(coefficients[static_cast<std::size_t>(k)]);
  }
};

namespace detail {

template <typename Scalar>
bool exactly_symmetric(const DenseMatrix<Scalar>& m) {
  if (m.rows() != m.cols()) return false;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i)
      if (m(i, j) != m(j, i)) return false;
  return true;
}

template <typename Scalar>
bool exactly_symmetric(const SparseMatrix<Scalar>& m) {
  if (m.rows() != m.cols()) return false;
  SparseMatrix<Scalar> diff = SparseMatrix<Scalar>(m.transpose()) - m;
  diff.prune(Scalar(0), Scalar(0));
  return diff.nonZeros() == 0;
}

}  // namespace detail

template <typename Scalar>
CoefficientModel<Scalar> make_model(Index d1, Index d2, bool self_adjoint,
                                    DenseMatrix<Scalar> mean,
                                    std::vector<SparseMatrix<Scalar>> coeffs) {
  if (d1 < 1 || d2 < 1) throw InvalidParameter("model dimensions must be positive");
  if (self_adjoint && d1 != d2)
    throw DimensionMismatch("self-adjoint model requires d1 == d2");
  if (mean.rows() != d1 || mean.cols() != d2)
    throw DimensionMismatch("mean matrix has wrong shape");
  for (const auto& a : coeffs)
    if (a.rows() != d1 || a.cols() != d2)
      throw DimensionMismatch("coefficient matrix has wrong shape");
  if (self_adjoint) {
    // Symmetry is an exact storage requirement, not a tolerance check.
    if (!detail::exactly_symmetric(mean))
      throw AsymmetricCoefficient("mean is not exactly symmetric");
    for (const auto& a : coeffs)
      if (!detail::exactly_symmetric(a))
        throw AsymmetricCoefficient("coefficient is not exactly symmetric");
  }
  CoefficientModel<Scalar> model;
  model.d1 = d1;
  model.d2 = d2;
  model.self_adjoint = self_adjoint;
  model.mean = std::move(mean);
  model.coefficients = std::move(coeffs);
  return model;
}

template <typename Scalar>
CoefficientModel<Scalar> make_model(Index d1, Index d2, bool self_adjoint,
                                    DenseMatrix<Scalar> mean,
                                    const std::vector<DenseMatrix<Scalar>>& coeffs) {
  std::vector<SparseMatrix<Scalar>> sparse;
  sparse.reserve(coeffs.size());
  for (const auto& a : coeffs) {
    SparseMatrix<Scalar> s = a.sparseView(Scalar(0), Scalar(0));
    s.makeCompressed();
    sparse.push_back(std::move(s));
  }
  return make_model(d1, d2, self_adjoint, std::move(mean), std::move(sparse));
}

// Embeds M as [[0, M], [M^T, 0]]; the dilation has the same spectral norm as
// M and squares to diag(M M^T, M^T M).
template <typename Scalar>
CoefficientModel<Scalar> hermitian_dilation(const CoefficientModel<Scalar>& model) {
  const Index d = model.d1 + model.d2;
  auto dilate_dense = [&](const DenseMatrix<Scalar>& m) {
    DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(d, d);
    out.block(0, model.d1, model.d1, model.d2) = m;
    out.block(model.d1, 0, model.d2, model.d1) = m.transpose();
    return out;
  };
  std::vector<SparseMatrix<Scalar>> coeffs;
  coeffs.reserve(model.coefficients.size());
  for (const auto& a : model.coefficients) {
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(static_cast<std::size_t>(2 * a.nonZeros()));
    for (Index col = 0; col < a.outerSize(); ++col)
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it) {
        trips.emplace_back(it.row(), model.d1 + it.col(), it.value());
        trips.emplace_back(model.d1 + it.col(), it.row(), it.value());
      }
    SparseMatrix<Scalar> s(d, d);
    s.setFromTriplets(trips.begin(), trips.end());
    s.makeCompressed();
    coeffs.push_back(std::move(s));
  }
  return make_model(d, d, true, dilate_dense(model.mean), std::move(coeffs));
}

// One draw of X. The k-th Gaussian is normal_draw(seed, k), so a model and
// its dilation see identical g's for the same seed.
template <typename Scalar>
DenseMatrix<Scalar> sample(const CoefficientModel<Scalar>& model,
                           std::uint64_t seed) {
  DenseMatrix<Scalar> x = model.mean;
  for (Index k = 0; k < model.coefficient_count(); ++k) {
    const Scalar g = static_cast<Scalar>(
        normal_draw(seed, static_cast<std::uint64_t>(k)));
    const auto& a = model.coefficients[static_cast<std::size_t>(k)];
    for (Index col = 0; col < a.outerSize(); ++col)
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it)
        x(it.row(), it.col()) += g * it.value();
  }
  return x;
}

// Standard Wigner model: entries N(0, 1/d) iid on and above the diagonal,
// so E X^2 = I exactly. Coefficients are ordered row-major over the upper
// triangle, diagonal included.
template <typename Scalar = double>
CoefficientModel<Scalar> wigner_model(Index d) {
  if (d < 1) throw InvalidParameter("wigner: d must be >= 1");
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  std::vector<SparseMatrix<Scalar>> coeffs;
  coeffs.reserve(static_cast<std::size_t>(d * (d + 1) / 2));
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) {
      SparseMatrix<Scalar> a(d, d);
      if (i == j) {
        a.insert(i, i) = scale;
      } else {
        a.insert(i, j) = scale;
        a.insert(j, i) = scale;
      }
      a.makeCompressed();
      coeffs.push_back(std::move(a));
    }
  return make_model<Scalar>(d, d, true, DenseMatrix<Scalar>::Zero(d, d),
                            std::move(coeffs));
}

// Unit-variance iid diagonal.
template <typename Scalar = double>
CoefficientModel<Scalar> diagonal_model(Index d) {
  if (d < 1) throw InvalidParameter("diagonal: d must be >= 1");
  std::vector<SparseMatrix<Scalar>> coeffs;
  coeffs.reserve(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) {
    SparseMatrix<Scalar> a(d, d);
    a.insert(i, i) = Scalar(1);
    a.makeCompressed();
    coeffs.push_back(std::move(a));
  }
  return make_model<Scalar>(d, d, true, DenseMatrix<Scalar>::Zero(d, d),
                            std::move(coeffs));
}

// Unit-variance entries on the band |i - j| <= bandwidth, diagonal included.
template <typename Scalar = double>
CoefficientModel<Scalar> band_model(Index d, Index bandwidth) {
  if (d < 1) throw InvalidParameter("band: d must be >= 1");
  if (bandwidth < 0) throw InvalidParameter("band: bandwidth must be >= 0");
  std::vector<SparseMatrix<Scalar>> coeffs;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d && j - i <= bandwidth; ++j) {
      SparseMatrix<Scalar> a(d, d);
      if (i == j) {
        a.insert(i, i) = Scalar(1);
      } else {
        a.insert(i, j) = Scalar(1);
        a.insert(j, i) = Scalar(1);
      }
      a.makeCompressed();
      coeffs.push_back(std::move(a));
    }
  return make_model<Scalar>(d, d, true, DenseMatrix<Scalar>::Zero(d, d),
                            std::move(coeffs));
}

// Rank-one deterministic spike lambda v v^T plus standard Wigner noise.
template <typename Scalar = double>
CoefficientModel<Scalar> spiked_wigner_model(Index d, Scalar lambda,
                                             const DenseVector<Scalar>& v) {
  if (d < 1) throw InvalidParameter("spiked_wigner: d must be >= 1");
  if (v.size() != d) throw InvalidParameter("spiked_wigner: spike vector size");
  if (std::abs(v.norm() - Scalar(1)) > Scalar(1e-10))
    throw InvalidParameter("spiked_wigner: spike vector must have unit norm");
  CoefficientModel<Scalar> model = wigner_model<Scalar>(d);
  model.mean = lambda * v * v.transpose();
  // Exact storage symmetry of the outer product can be lost to rounding.
  DenseMatrix<Scalar> sym =
      (model.mean + DenseMatrix<Scalar>(model.mean.transpose())) / Scalar(2);
  model.mean = sym;
  return model;
}

// A centered finite-atom random symmetric matrix: takes value atoms[i].second
// with probability atoms[i].first.
template <typename Scalar = double>
struct DiscreteMatrixSummand {
  std::vector<std::pair<Scalar, DenseMatrix<Scalar>>> atoms;
};

// Gaussian model with the same mean and entrywise covariance as
// Y0 + sum_i Y_i for independent centered finite-atom summands Y_i. The
// coefficients are sqrt(lambda_j) mat(u_j) from the eigendecomposition of the
// total d^2 x d^2 covariance; eigenvalues below 1e-12 of the top one are
// dropped and each mat(u_j) is symmetrized.
template <typename Scalar>
CoefficientModel<Scalar> gaussian_surrogate(
    const DenseMatrix<Scalar>& y0,
    const std::vector<DiscreteMatrixSummand<Scalar>>& summands) {
  const Index d = y0.rows();
  if (y0.cols() != d) throw DimensionMismatch("surrogate: Y0 must be square");
  if (!detail::exactly_symmetric(y0))
    throw AsymmetricCoefficient("surrogate: Y0 must be symmetric");

  const Index dd = d * d;
  DenseMatrix<Scalar> cov = DenseMatrix<Scalar>::Zero(dd, dd);
  for (const auto& summand : summands) {
    Scalar total = Scalar(0);
    DenseMatrix<Scalar> mixture_mean = DenseMatrix<Scalar>::Zero(d, d);
    for (const auto& [prob, atom] : summand.atoms) {
      if (atom.rows() != d || atom.cols() != d)
        throw DimensionMismatch("surrogate: atom dimension mismatch");
      if (!detail::exactly_symmetric(atom))
        throw AsymmetricCoefficient("surrogate: atoms must be symmetric");
      if (prob < Scalar(0) || prob > Scalar(1))
        throw InvalidParameter("surrogate: atom probability out of [0,1]");
      total += prob;
      mixture_mean += prob * atom;
    }
    if (std::abs(total - Scalar(1)) > Scalar(1e-12))
      throw InvalidParameter("surrogate: atom probabilities must sum to 1");
    if (mixture_mean.template lpNorm<Eigen::Infinity>() > Scalar(1e-12))
      throw NonCenteredSummand("surrogate: summand mixture mean is not zero");
    for (const auto& [prob, atom] : summand.atoms) {
      DenseVector<Scalar> vec =
          Eigen::Map<const DenseVector<Scalar>>(atom.data(), dd);
      cov.noalias() += prob * vec * vec.transpose();
    }
  }

  std::vector<SparseMatrix<Scalar>> coeffs;
  if (!summands.empty()) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(cov);
    const Scalar top = es.eigenvalues()(dd - 1);
    const Scalar cutoff = Scalar(1e-12) * std::max(top, Scalar(0));
    for (Index j = dd - 1; j >= 0; --j) {
      const Scalar lambda = es.eigenvalues()(j);
      if (lambda <= cutoff || lambda <= Scalar(0)) break;
      DenseMatrix<Scalar> a = Eigen::Map<const DenseMatrix<Scalar>>(
          es.eigenvectors().col(j).data(), d, d);
      DenseMatrix<Scalar> sym =
          std::sqrt(lambda) * (a + DenseMatrix<Scalar>(a.transpose())) / Scalar(2);
      SparseMatrix<Scalar> s = sym.sparseView(Scalar(0), Scalar(0));
      s.makeCompressed();
      coeffs.push_back(std::move(s));
    }
  }
  return make_model<Scalar>(d, d, true, y0, std::move(coeffs));
}

}  // namespace freelens
