#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/parameters.h"

namespace freelens {

template <typename Scalar = double>
struct BoundInputs {
  std::optional<Scalar> sigma;
  std::optional<Scalar> v;
  std::optional<Scalar> sigma_star;
  std::optional<Scalar> v_tilde;
  std::optional<Scalar> radius;  // a.s. bound R on the summands
  std::optional<Index> d;
  std::optional<Scalar> t;
};

// Evaluated bound with the substituted universal constant recorded. All
// logarithms in bound formulas are natural logarithms.
template <typename Scalar = double>
struct BoundReport {
  std::string name;
  std::optional<Scalar> lower;
  std::optional<Scalar> upper;
  Scalar constant_assumed = Scalar(1);
  std::optional<Scalar> failure_probability;
  BoundInputs<Scalar> inputs;
};

// Two-sided non-commutative Khintchine envelope for E||X||:
// sigma <= E||X|| <= d^{1/(2p)} sqrt(2p) sigma with d = d1 + d2 and
// p = max(1, ceil(ln d)).
template <typename Scalar>
std::pair<Scalar, Scalar> nck_interval(Scalar sigma, Index d1, Index d2) {
  if (sigma < Scalar(0)) throw InvalidParameter("nck_interval: sigma < 0");
  if (d1 < 1 || d2 < 0)
    throw InvalidParameter("nck_interval: need d1 >= 1 and d2 >= 0");
  const auto d = static_cast<Scalar>(d1 + d2);
  const Scalar p = std::max(Scalar(1), std::ceil(std::log(d)));
  const Scalar upper =
      std::pow(d, Scalar(1) / (Scalar(2) * p)) * std::sqrt(Scalar(2) * p) * sigma;
  return {sigma, upper};
}

// Matrix Bernstein tail: min(1, d exp(-t^2 / (2 sigma^2 + (2/3) R t))).
template <typename Scalar>
Scalar bernstein_tail(Scalar sigma_sq, Scalar radius, Index d, Scalar t) {
  if (sigma_sq < Scalar(0) || radius < Scalar(0))
    throw InvalidParameter("bernstein_tail: negative variance or radius");
  if (d < 1) throw InvalidParameter("bernstein_tail: d must be >= 1");
  if (t < Scalar(0)) throw InvalidParameter("bernstein_tail: t must be >= 0");
  const Scalar denom = Scalar(2) * sigma_sq + Scalar(2) / Scalar(3) * radius * t;
  if (denom == Scalar(0)) return t > Scalar(0) ? Scalar(0) : Scalar(1);
  const Scalar value = static_cast<Scalar>(d) * std::exp(-t * t / denom);
  return std::min(Scalar(1), value);
}

// Pisier's sandwich for ||X_free||:
//   (||A0|| v sigma)/2 <= ||X_free|| <= ||A0|| + ||sum A A^T||^{1/2} + ||sum A^T A||^{1/2}.
template <typename Scalar>
std::pair<Scalar, Scalar> pisier_interval(const CoefficientModel<Scalar>& model) {
  const Scalar a0_norm = model.self_adjoint
                             ? spectral_norm_sym<Scalar>(model.mean)
                             : spectral_norm<Scalar>(model.mean);
  auto [row_gram, col_gram] = detail::gram_sums(model);
  const Scalar row_norm = std::sqrt(std::max(lambda_max_sym(row_gram), Scalar(0)));
  const Scalar col_norm = std::sqrt(std::max(lambda_max_sym(col_gram), Scalar(0)));
  const Scalar lower = std::max(a0_norm, std::max(row_norm, col_norm)) / Scalar(2);
  const Scalar upper = a0_norm + row_norm + col_norm;
  return {lower, upper};
}

namespace detail {

template <typename Scalar>
struct LehnerState {
  DenseMatrix<Scalar> z_vectors;  // eigenvectors of Z
  DenseVector<Scalar> z_values;   // eigenvalues of Z (all >= floor)
  DenseMatrix<Scalar> inner;      // Z^{-1} + eps A0 + sum A_k Z A_k
  DenseVector<Scalar> inner_values;
  DenseMatrix<Scalar> inner_vectors;
  Scalar objective = 0;
};

template <typename Scalar>
DenseMatrix<Scalar> lehner_reconstruct(const DenseMatrix<Scalar>& vectors,
                                       const DenseVector<Scalar>& values) {
  return vectors * values.asDiagonal() * vectors.transpose();
}

template <typename Scalar>
void lehner_evaluate(const DenseMatrix<Scalar>& a0,
                     const std::vector<SparseMatrix<Scalar>>& coeffs,
                     Scalar eps, LehnerState<Scalar>& state) {
  const Index d = a0.rows();
  const DenseMatrix<Scalar> z =
      lehner_reconstruct(state.z_vectors, state.z_values);
  DenseMatrix<Scalar> m =
      lehner_reconstruct(state.z_vectors,
                         DenseVector<Scalar>(state.z_values.cwiseInverse())) +
      eps * a0;
  for (const auto& a : coeffs) {
    DenseMatrix<Scalar> az = a * z;
    m.noalias() += az * a;
  }
  // Symmetrize away the rounding skew before the eigensolve.
  state.inner = (m + DenseMatrix<Scalar>(m.transpose())) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(state.inner);
  state.inner_values = es.eigenvalues();
  state.inner_vectors = es.eigenvectors();
  state.objective = state.inner_values(d - 1);
}

// Minimizes lambda_max(Z^{-1} + eps A0 + sum A_k Z A_k) over Z >= floor * I
// by projected subgradient descent. The objective is convex in Z (operator
// convexity of inversion plus linear terms), so the best value found is an
// upper approximation of the global infimum that the diminishing-step rule
// drives to within tol.
//
// Subgradient at Z via the top eigenframe P of the inner matrix:
//   G = -Z^{-1} P Z^{-1} + sum_k A_k P A_k,
// where P averages the eigenvectors whose eigenvalue is within 1e-10 of the
// top one. Steps are a/sqrt(k) with the scale a tuned by halving until the
// step does not increase the objective; the tuned scale persists. Stops when
// the best objective has not improved by tol for 50 consecutive iterations.
template <typename Scalar>
Scalar lehner_branch(const DenseMatrix<Scalar>& a0,
                     const std::vector<SparseMatrix<Scalar>>& coeffs,
                     Scalar eps, Scalar sigma_hat, Scalar tol, int max_outer) {
  const Index d = a0.rows();
  constexpr Scalar kEigenvalueFloor = Scalar(1e-8);
  constexpr Scalar kFrameTie = Scalar(1e-10);
  constexpr int kStallLimit = 50;
  constexpr int kMaxBacktracks = 30;

  LehnerState<Scalar> state;
  state.z_vectors = DenseMatrix<Scalar>::Identity(d, d);
  state.z_values = DenseVector<Scalar>::Constant(
      d, Scalar(1) / std::max(sigma_hat, kEigenvalueFloor));
  lehner_evaluate(a0, coeffs, eps, state);

  Scalar best = state.objective;
  Scalar step_scale = Scalar(1);
  int stall = 0;

  for (int k = 1; k <= max_outer; ++k) {
    // Top eigenframe of the inner matrix.
    const Scalar top = state.inner_values(d - 1);
    Index first = d - 1;
    while (first > 0 && state.inner_values(first - 1) >= top - kFrameTie)
      --first;
    const Index frame = d - first;
    const DenseMatrix<Scalar> u =
        state.inner_vectors.rightCols(frame) / std::sqrt(static_cast<Scalar>(frame));

    const DenseMatrix<Scalar> zinv_u =
        lehner_reconstruct(state.z_vectors,
                           DenseVector<Scalar>(state.z_values.cwiseInverse())) *
        u;
    DenseMatrix<Scalar> grad = -(zinv_u * zinv_u.transpose());
    for (const auto& a : coeffs) {
      DenseMatrix<Scalar> au = a * u;
      grad.noalias() += au * au.transpose();
    }
    grad = (grad + DenseMatrix<Scalar>(grad.transpose())) / Scalar(2);

    const DenseMatrix<Scalar> z =
        lehner_reconstruct(state.z_vectors, state.z_values);
    Scalar gamma = step_scale / std::sqrt(static_cast<Scalar>(k));
    bool accepted = false;
    LehnerState<Scalar> candidate;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      DenseMatrix<Scalar> z_raw = z - gamma * grad;
      z_raw = (z_raw + DenseMatrix<Scalar>(z_raw.transpose())) / Scalar(2);
      Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(z_raw);
      candidate.z_vectors = es.eigenvectors();
      candidate.z_values = es.eigenvalues().cwiseMax(kEigenvalueFloor);
      lehner_evaluate(a0, coeffs, eps, candidate);
      if (candidate.objective <= state.objective) {
        accepted = true;
        break;
      }
      gamma /= Scalar(2);
    }
    if (accepted) {
      step_scale = gamma * std::sqrt(static_cast<Scalar>(k));
      state = std::move(candidate);
      if (state.objective < best - tol) {
        best = state.objective;
        stall = 0;
      } else {
        best = std::min(best, state.objective);
        ++stall;
      }
    } else {
      ++stall;
    }
    if (stall >= kStallLimit) return best;
  }
  throw NoConvergence(
      "lehner_norm: objective still improving when max_outer was reached");
}

}  // namespace detail

// ||X_free|| by Lehner's max-inf formula
//   max_{eps = +-1} inf_{Z > 0} lambda_max(Z^{-1} + eps A0 + sum A_k Z A_k),
// solved per branch by projected subgradient descent. When A0 = 0 the two
// branches coincide and only one is solved. The model is normalized so the
// solver always works at unit scale, which makes the result exactly
// positively homogeneous. The returned value is checked against Pisier's
// sandwich; a violation is an internal error.
template <typename Scalar>
Scalar lehner_norm(const CoefficientModel<Scalar>& model, Scalar tol = Scalar(1e-6),
                   int max_outer = 5000) {
  if (!model.self_adjoint)
    throw NotSelfAdjoint("lehner_norm: dilate rectangular models first");
  if (tol <= Scalar(0)) throw InvalidParameter("lehner_norm: tol must be > 0");
  if (max_outer < 1) throw InvalidParameter("lehner_norm: max_outer must be >= 1");

  const Scalar sigma_model = sigma(model);
  const Scalar a0_norm = spectral_norm_sym<Scalar>(model.mean);
  const Scalar scale = std::max(sigma_model, a0_norm);
  if (scale == Scalar(0)) return Scalar(0);

  // Normalized model X/scale: substituting Z -> scale * Z shows its Lehner
  // value is exactly 1/scale times the original one.
  const DenseMatrix<Scalar> a0 = model.mean / scale;
  std::vector<SparseMatrix<Scalar>> coeffs = model.coefficients;
  for (auto& a : coeffs) a /= scale;
  const Scalar sigma_hat = sigma_model / scale;

  const bool centered = model.mean.isZero(Scalar(0));
  std::vector<Scalar> eps_values = centered ? std::vector<Scalar>{Scalar(1)}
                                            : std::vector<Scalar>{Scalar(1), Scalar(-1)};
  std::vector<Scalar> branch(eps_values.size(), Scalar(0));
  const Scalar tol_hat = tol / scale;
  parallel_for(static_cast<std::ptrdiff_t>(eps_values.size()),
               [&](std::ptrdiff_t i) {
                 branch[static_cast<std::size_t>(i)] = detail::lehner_branch(
                     a0, coeffs, eps_values[static_cast<std::size_t>(i)],
                     sigma_hat, tol_hat, max_outer);
               });
  const Scalar value = scale * *std::max_element(branch.begin(), branch.end());

  const auto [lo, hi] = pisier_interval(model);
  const Scalar slack = Scalar(1e-7) * scale + Scalar(1e-12);
  if (value < lo - slack || value > hi + slack)
    throw InternalError("lehner_norm: result escaped the Pisier sandwich");
  return value;
}

// Intrinsic-freeness gap |E||X|| - ||X_free||| <= C v_tilde (ln d)^{3/4},
// plus C sigma_star t with failure probability exp(-t^2) when t is given.
// sigma_star enters through the safe upper end of its bracket.
template <typename Scalar>
BoundReport<Scalar> intrinsic_gap(const ModelParameters<Scalar>& params, Index d,
                                  Scalar constant,
                                  std::optional<Scalar> t = std::nullopt) {
  if (d < 2) throw InvalidParameter("intrinsic_gap: d must be >= 2");
  if (constant <= Scalar(0)) throw InvalidParameter("intrinsic_gap: C must be > 0");
  if (t && *t < Scalar(0)) throw InvalidParameter("intrinsic_gap: t must be >= 0");
  const Scalar log_d = std::log(static_cast<Scalar>(d));
  Scalar gap = constant * params.v_tilde * std::pow(log_d, Scalar(0.75));
  BoundReport<Scalar> report;
  report.name = "intrinsic_freeness_gap";
  report.constant_assumed = constant;
  report.inputs.sigma = params.sigma;
  report.inputs.v = params.v;
  report.inputs.sigma_star = params.sigma_star_upper;
  report.inputs.v_tilde = params.v_tilde;
  report.inputs.d = d;
  if (t) {
    gap += constant * params.sigma_star_upper * *t;
    report.failure_probability = std::exp(-*t * *t);
    report.inputs.t = *t;
  }
  report.upper = gap;
  return report;
}

// Sharp matrix Bernstein for independent bounded symmetric summands:
//   E||sum Y_i|| <= 2 sigma + C( (v sigma)^{1/2} (ln d)^{3/4}
//                                + R^{1/3} sigma^{2/3} (ln d)^{2/3} + R ln d ),
// and with t the tail variant at failure probability d e^{-t}.
template <typename Scalar>
BoundReport<Scalar> improved_bernstein(Scalar sigma, Scalar v, Scalar radius,
                                       Scalar sigma_star_upper, Index d,
                                       Scalar constant,
                                       std::optional<Scalar> t = std::nullopt) {
  if (sigma < Scalar(0) || v < Scalar(0) || radius < Scalar(0) ||
      sigma_star_upper < Scalar(0))
    throw InvalidParameter("improved_bernstein: negative input");
  if (d < 2) throw InvalidParameter("improved_bernstein: d must be >= 2");
  if (constant <= Scalar(0))
    throw InvalidParameter("improved_bernstein: C must be > 0");
  if (t && *t < Scalar(0))
    throw InvalidParameter("improved_bernstein: t must be >= 0");
  const Scalar log_d = std::log(static_cast<Scalar>(d));
  const Scalar smooth_term =
      std::sqrt(v * sigma) * std::pow(log_d, Scalar(0.75));
  BoundReport<Scalar> report;
  report.name = "improved_matrix_bernstein";
  report.constant_assumed = constant;
  report.inputs.sigma = sigma;
  report.inputs.v = v;
  report.inputs.sigma_star = sigma_star_upper;
  report.inputs.radius = radius;
  report.inputs.d = d;
  if (!t) {
    report.upper = Scalar(2) * sigma +
                   constant * (smooth_term +
                               std::cbrt(radius) * std::pow(sigma, Scalar(2) / 3) *
                                   std::pow(log_d, Scalar(2) / 3) +
                               radius * log_d);
  } else {
    report.inputs.t = *t;
    report.upper = Scalar(2) * sigma +
                   constant * (smooth_term + sigma_star_upper * std::sqrt(*t) +
                               std::cbrt(radius) * std::pow(sigma, Scalar(2) / 3) *
                                   std::pow(*t, Scalar(2) / 3) +
                               radius * *t);
    report.failure_probability =
        std::min(Scalar(1), static_cast<Scalar>(d) * std::exp(-*t));
  }
  return report;
}

// Universality distance between the spectrum of a bounded independent sum
// and its Gaussian surrogate:
//   d_H <= C( sigma_star t^{1/2} + R^{1/2} sigma^{2/3} t^{2/3} + R t )
// with failure probability d e^{-t}.
template <typename Scalar>
BoundReport<Scalar> universality_gap(Scalar sigma_star_upper, Scalar sigma,
                                     Scalar radius, Index d, Scalar constant,
                                     Scalar t) {
  if (sigma < Scalar(0) || radius < Scalar(0) || sigma_star_upper < Scalar(0))
    throw InvalidParameter("universality_gap: negative input");
  if (d < 1) throw InvalidParameter("universality_gap: d must be >= 1");
  if (constant <= Scalar(0))
    throw InvalidParameter("universality_gap: C must be > 0");
  if (t < Scalar(0)) throw InvalidParameter("universality_gap: t must be >= 0");
  BoundReport<Scalar> report;
  report.name = "universality_hausdorff";
  report.constant_assumed = constant;
  report.inputs.sigma = sigma;
  report.inputs.sigma_star = sigma_star_upper;
  report.inputs.radius = radius;
  report.inputs.d = d;
  report.inputs.t = t;
  report.upper = constant * (sigma_star_upper * std::sqrt(t) +
                             std::sqrt(radius) * std::pow(sigma, Scalar(2) / 3) *
                                 std::pow(t, Scalar(2) / 3) +
                             radius * t);
  report.failure_probability =
      std::min(Scalar(1), static_cast<Scalar>(d) * std::exp(-t));
  return report;
}

}  // namespace freelens
