#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/parameters.h"
#include "freelens/rng.h"
#include "freelens/sampling.h"

namespace freelens {

// BBP edge function: B(lambda) = 2 for lambda <= 1, lambda + 1/lambda above.
template <typename Scalar>
Scalar bbp_value(Scalar lambda) {
  if (lambda < Scalar(0)) throw InvalidParameter("bbp_value: lambda must be >= 0");
  return lambda <= Scalar(1) ? Scalar(2) : lambda + Scalar(1) / lambda;
}

template <typename Scalar = double>
struct IsotropyReport {
  bool isotropic = false;
  Scalar sigma = 0;
  Index rank_r = 0;
};

// Isotropy means E(X - EX)^2 = sigma^2 I; checked as
// ||sum A_k^2 - sigma^2 I|| <= tol * sigma^2. rank_r is the numerical rank
// of the mean at relative threshold 1e-9.
template <typename Scalar>
IsotropyReport<Scalar> isotropic_check(const CoefficientModel<Scalar>& model,
                                       Scalar tol = Scalar(1e-8)) {
  if (!model.self_adjoint)
    throw NotSelfAdjoint("isotropic_check: model must be self-adjoint");
  IsotropyReport<Scalar> report;
  report.sigma = sigma(model);
  DenseMatrix<Scalar> dev = DenseMatrix<Scalar>::Zero(model.d1, model.d1);
  for (const auto& a : model.coefficients) dev += DenseMatrix<Scalar>(a * a);
  dev.diagonal().array() -= report.sigma * report.sigma;
  report.isotropic =
      spectral_norm_sym(dev) <= tol * report.sigma * report.sigma;

  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(model.mean,
                                                        Eigen::EigenvaluesOnly);
  const Scalar top = es.eigenvalues().cwiseAbs().maxCoeff();
  const Scalar cut = Scalar(1e-9) * top;
  for (Index i = 0; i < model.d1; ++i)
    if (std::abs(es.eigenvalues()(i)) > cut) ++report.rank_r;
  if (top == Scalar(0)) report.rank_r = 0;
  return report;
}

template <typename Scalar = double>
struct TransitionPrediction {
  Scalar sigma = 0;
  Scalar spike = 0;           // lambda_max(EX) / sigma, dimensionless
  Scalar predicted_edge = 0;  // sigma * B(spike)
  Scalar error_radius = 0;    // 2 sigma_star_upper sqrt(r), model units
  Index rank_r = 0;
  bool isotropic_ok = false;
  bool precondition_ok = false;  // sigma_star sqrt(r) <= sigma
};

// Isotropic phase-transition prediction: lambda_max(X_free) lies within
// error_radius of sigma * B(lambda_max(EX)/sigma). B is evaluated on the
// dimensionless spike so the prediction is scale-equivariant; it reduces to
// the plain statement when sigma = 1. sigma_star enters through its safe
// upper bracket end sigma ^ v.
template <typename Scalar>
TransitionPrediction<Scalar> bbp_prediction(const CoefficientModel<Scalar>& model,
                                            Scalar isotropy_tol = Scalar(1e-8)) {
  const auto iso = isotropic_check(model, isotropy_tol);
  if (!iso.isotropic)
    throw NotIsotropic("bbp_prediction: E(X-EX)^2 is not a multiple of I");
  if (iso.sigma <= Scalar(0))
    throw InvalidParameter("bbp_prediction: deterministic model has no edge");
  TransitionPrediction<Scalar> pred;
  pred.sigma = iso.sigma;
  pred.rank_r = iso.rank_r;
  pred.isotropic_ok = true;
  const Scalar spike_raw = std::max(lambda_max_sym<Scalar>(model.mean), Scalar(0));
  pred.spike = spike_raw / iso.sigma;
  pred.predicted_edge = iso.sigma * bbp_value(pred.spike);
  const Scalar sigma_star_upper = std::min(iso.sigma, v_param(model));
  const Scalar root_r = std::sqrt(static_cast<Scalar>(pred.rank_r));
  pred.error_radius = Scalar(2) * sigma_star_upper * root_r;
  pred.precondition_ok = sigma_star_upper * root_r <= iso.sigma;
  return pred;
}

template <typename Scalar = double>
struct SweepRow {
  Scalar lambda = 0;
  Scalar mean_lambda_max = 0;
  Scalar std_error = 0;
  Scalar bbp = 0;
};

// Empirical largest eigenvalue of the spiked Wigner model
// X(lambda) = lambda e1 e1^T + W across a lambda grid, against B(lambda).
template <typename Scalar = double>
std::vector<SweepRow<Scalar>> spiked_sweep(Index d,
                                           const std::vector<Scalar>& lambdas,
                                           long trials, std::uint64_t seed) {
  if (d < 50) throw InvalidParameter("spiked_sweep: d must be >= 50");
  if (lambdas.empty()) throw InvalidParameter("spiked_sweep: empty lambda grid");
  if (trials < 2) throw InvalidParameter("spiked_sweep: trials must be >= 2");
  for (const Scalar lambda : lambdas)
    if (lambda < Scalar(0))
      throw InvalidParameter("spiked_sweep: lambda must be >= 0");

  const CoefficientModel<Scalar> noise = wigner_model<Scalar>(d);
  std::vector<SweepRow<Scalar>> rows(lambdas.size());
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    std::vector<Scalar> tops(static_cast<std::size_t>(trials), Scalar(0));
    parallel_for(trials, [&](std::ptrdiff_t t) {
      const std::uint64_t cell_seed = derive_seed(
          seed, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(t));
      DenseMatrix<Scalar> x = sample(noise, cell_seed);
      x(0, 0) += lambdas[li];
      Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(
          x, Eigen::EigenvaluesOnly);
      tops[static_cast<std::size_t>(t)] = es.eigenvalues()(d - 1);
    });
    const auto est = detail::summarize(tops);
    rows[li] = {lambdas[li], est.mean, est.std_error, bbp_value(lambdas[li])};
  }
  return rows;
}

}  // namespace freelens
