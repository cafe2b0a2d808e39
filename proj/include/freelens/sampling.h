#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/rng.h"

namespace freelens {

namespace detail {

// Stable content identity of a model, independent of file formatting:
// FNV-1a over dimensions, the mean, and the coefficient triplets.
inline void fnv_append(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

template <typename Scalar>
std::uint64_t model_content_digest(const CoefficientModel<Scalar>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t header[3] = {model.d1, model.d2,
                                  model.self_adjoint ? 1 : 0};
  fnv_append(h, header, sizeof(header));
  for (Index j = 0; j < model.mean.cols(); ++j)
    for (Index i = 0; i < model.mean.rows(); ++i) {
      const double value = static_cast<double>(model.mean(i, j));
      fnv_append(h, &value, sizeof(value));
    }
  for (Index k = 0; k < model.coefficient_count(); ++k) {
    const auto& a = model.coefficients[static_cast<std::size_t>(k)];
    for (Index col = 0; col < a.outerSize(); ++col)
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it) {
        const std::int64_t pos[3] = {k, it.row(), it.col()};
        const double value = static_cast<double>(it.value());
        fnv_append(h, pos, sizeof(pos));
        fnv_append(h, &value, sizeof(value));
      }
  }
  return h;
}

inline std::string digest_hex(std::uint64_t h) {
  static const char* hex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace detail

// Seed of the t-th Monte Carlo trial of a run with the given master seed.
constexpr std::uint64_t trial_seed(std::uint64_t seed, long trial) {
  return derive_seed(seed, 0x747269616cULL, static_cast<std::uint64_t>(trial));
}

template <typename Scalar = double>
struct SpectrumSample {
  std::vector<Scalar> eigenvalues;  // ascending
  std::uint64_t seed = 0;
  std::string model_digest;
};

template <typename Scalar = double>
struct Estimate {
  Scalar mean = 0;
  Scalar std_error = 0;
  long trials = 0;
};

namespace detail {

template <typename Scalar>
Estimate<Scalar> summarize(const std::vector<Scalar>& values) {
  Estimate<Scalar> e;
  e.trials = static_cast<long>(values.size());
  e.mean = pairwise_sum(values) / static_cast<Scalar>(values.size());
  std::vector<Scalar> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Scalar c = values[i] - e.mean;
    sq[i] = c * c;
  }
  if (values.size() >= 2) {
    const Scalar var =
        pairwise_sum(sq) / static_cast<Scalar>(values.size() - 1);
    e.std_error = std::sqrt(std::max(var, Scalar(0)) /
                          static_cast<Scalar>(values.size()));
  }
  return e;
}

}  // namespace detail

// Eigenvalues of one draw; rectangular models are dilated first, so the
// spectrum is the +- singular values.
template <typename Scalar>
SpectrumSample<Scalar> empirical_spectrum(const CoefficientModel<Scalar>& model,
                                          std::uint64_t seed) {
  SpectrumSample<Scalar> out;
  out.seed = seed;
  out.model_digest = detail::digest_hex(detail::model_content_digest(model));
  const CoefficientModel<Scalar>* m = &model;
  CoefficientModel<Scalar> dilated;
  if (!model.self_adjoint) {
    dilated = hermitian_dilation(model);
    m = &dilated;
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(sample(*m, seed),
                                                        Eigen::EigenvaluesOnly);
  out.eigenvalues.assign(es.eigenvalues().data(),
                         es.eigenvalues().data() + es.eigenvalues().size());
  return out;
}

// Mean and standard error of ||X|| over per-trial derived seeds.
template <typename Scalar>
Estimate<Scalar> empirical_norm(const CoefficientModel<Scalar>& model,
                                long trials, std::uint64_t seed) {
  if (trials < 2) throw InvalidParameter("empirical_norm: trials must be >= 2");
  const CoefficientModel<Scalar>* m = &model;
  CoefficientModel<Scalar> dilated;
  if (!model.self_adjoint) {
    dilated = hermitian_dilation(model);
    m = &dilated;
  }
  std::vector<Scalar> norms(static_cast<std::size_t>(trials), Scalar(0));
  parallel_for(trials, [&](std::ptrdiff_t t) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(
        sample(*m, trial_seed(seed, t)), Eigen::EigenvaluesOnly);
    norms[static_cast<std::size_t>(t)] =
        std::max(std::abs(es.eigenvalues()(0)),
                 std::abs(es.eigenvalues()(m->d1 - 1)));
  });
  return detail::summarize(norms);
}

// Mean and standard error of the normalized trace of X^{2p}.
template <typename Scalar>
Estimate<Scalar> empirical_trace_moment(const CoefficientModel<Scalar>& model,
                                        int p, long trials, std::uint64_t seed) {
  if (trials < 2)
    throw InvalidParameter("empirical_trace_moment: trials must be >= 2");
  if (p < 0) throw InvalidParameter("empirical_trace_moment: p must be >= 0");
  if (p == 0) {
    Estimate<Scalar> e;
    e.mean = Scalar(1);
    e.std_error = Scalar(0);
    e.trials = trials;
    return e;
  }
  const CoefficientModel<Scalar>* m = &model;
  CoefficientModel<Scalar> dilated;
  if (!model.self_adjoint) {
    dilated = hermitian_dilation(model);
    m = &dilated;
  }
  const Index d = m->d1;
  std::vector<Scalar> values(static_cast<std::size_t>(trials), Scalar(0));
  parallel_for(trials, [&](std::ptrdiff_t t) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(
        sample(*m, trial_seed(seed, t)), Eigen::EigenvaluesOnly);
    Scalar acc = Scalar(0);
    for (Index i = 0; i < d; ++i)
      acc += std::pow(es.eigenvalues()(i), Scalar(2 * p));
    values[static_cast<std::size_t>(t)] = acc / static_cast<Scalar>(d);
  });
  return detail::summarize(values);
}

// Monte Carlo estimate of tr W_{u(1)} ... W_{u(2p)} with an independent
// standard Wigner matrix per letter. Non-crossing assignment words approach
// 1, crossing ones vanish as d grows.
template <typename Scalar = double>
Estimate<Scalar> wigner_word_moment(Index d, const std::vector<int>& word,
                                    long trials, std::uint64_t seed) {
  if (d < 2) throw InvalidParameter("wigner_word_moment: d must be >= 2");
  if (trials < 2)
    throw InvalidParameter("wigner_word_moment: trials must be >= 2");
  if (word.empty() || word.size() % 2 != 0)
    throw InvalidWord("wigner_word_moment: word length must be positive and even");
  const int letters = static_cast<int>(word.size()) / 2;
  std::vector<int> multiplicity(static_cast<std::size_t>(letters) + 1, 0);
  for (int l : word) {
    if (l < 1 || l > letters)
      throw InvalidWord("wigner_word_moment: letters must cover 1..p");
    ++multiplicity[static_cast<std::size_t>(l)];
  }
  for (int l = 1; l <= letters; ++l)
    if (multiplicity[static_cast<std::size_t>(l)] != 2)
      throw InvalidWord("wigner_word_moment: each letter must appear exactly twice");

  const CoefficientModel<Scalar> wigner = wigner_model<Scalar>(d);
  std::vector<Scalar> values(static_cast<std::size_t>(trials), Scalar(0));
  parallel_for(trials, [&](std::ptrdiff_t t) {
    std::vector<DenseMatrix<Scalar>> w(static_cast<std::size_t>(letters));
    for (int l = 0; l < letters; ++l)
      w[static_cast<std::size_t>(l)] =
          sample(wigner, derive_seed(seed, static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(l)));
    DenseMatrix<Scalar> prod = w[static_cast<std::size_t>(word[0] - 1)];
    for (std::size_t i = 1; i + 1 < word.size(); ++i)
      prod = prod * w[static_cast<std::size_t>(word[i] - 1)];
    const auto& last = w[static_cast<std::size_t>(word.back() - 1)];
    values[static_cast<std::size_t>(t)] =
        prod.cwiseProduct(last.transpose()).sum() / static_cast<Scalar>(d);
  });
  return detail::summarize(values);
}

// Exact Hausdorff distance between two finite subsets of the real line.
template <typename Scalar>
Scalar hausdorff(std::vector<Scalar> a, std::vector<Scalar> b) {
  if (a.empty() || b.empty()) throw EmptySet("hausdorff: sets must be nonempty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto one_sided = [](const std::vector<Scalar>& from,
                            const std::vector<Scalar>& to) {
    Scalar worst = Scalar(0);
    std::size_t j = 0;
    for (const Scalar x : from) {
      while (j + 1 < to.size() &&
             std::abs(to[j + 1] - x) <= std::abs(to[j] - x))
        ++j;
      worst = std::max(worst, std::abs(to[j] - x));
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

}  // namespace freelens
