#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/parallel.h"
#include "freelens/rng.h"

namespace freelens {

inline std::uint64_t binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    // Exact at every step: result * (n-k+i) is divisible by i.
    result = result * static_cast<std::uint64_t>(n - k + i) /
             static_cast<std::uint64_t>(i);
  }
  return result;
}

// Colexicographic rank of a sorted k-subset of {0..n-1}: sum_i C(s_i, i).
// This indexing is the on-disk order of Kikuchi rows and noise entries.
inline std::uint64_t subset_colex_rank(const std::vector<int>& subset) {
  std::uint64_t rank = 0;
  for (std::size_t i = 0; i < subset.size(); ++i)
    rank += binomial_coefficient(subset[i], static_cast<int>(i) + 1);
  return rank;
}

inline std::vector<int> subset_colex_unrank(std::uint64_t rank, int k) {
  std::vector<int> subset(static_cast<std::size_t>(k));
  for (int i = k; i >= 1; --i) {
    int s = i - 1;
    while (binomial_coefficient(s + 1, i) <= rank) ++s;
    subset[static_cast<std::size_t>(i) - 1] = s;
    rank -= binomial_coefficient(s, i);
  }
  return subset;
}

// Tensor PCA instance: observations Y_S = lambda prod_{i in S} x_i + Z_S on
// the C(n,r) sorted r-subsets S, with iid standard Gaussian noise Z.
template <typename Scalar = double>
struct KikuchiInstance {
  int n = 0;
  int r = 0;
  Scalar lambda = 0;
  std::vector<int> signal;     // x in {+-1}^n
  std::vector<Scalar> noise;   // Z by colex rank of the r-subset

  Scalar y_value(const std::vector<int>& subset) const {
    Scalar sign = Scalar(1);
    for (int i : subset) sign *= static_cast<Scalar>(signal[static_cast<std::size_t>(i)]);
    return lambda * sign + noise[subset_colex_rank(subset)];
  }
};

template <typename Scalar = double>
KikuchiInstance<Scalar> generate_instance(int n, int r, Scalar lambda,
                                          std::uint64_t seed,
                                          const std::vector<int>* signal = nullptr) {
  if (r < 2 || r % 2 != 0) throw InvalidParameter("kikuchi: r must be even and >= 2");
  if (r > n) throw InvalidParameter("kikuchi: need r <= n");
  if (lambda < Scalar(0)) throw InvalidParameter("kikuchi: lambda must be >= 0");
  const std::uint64_t entries = binomial_coefficient(n, r);
  if (entries > 50000000ULL)
    throw SizeLimit("kikuchi: C(n,r) noise entries exceed the size guard");

  KikuchiInstance<Scalar> instance;
  instance.n = n;
  instance.r = r;
  instance.lambda = lambda;
  if (signal) {
    if (static_cast<int>(signal->size()) != n)
      throw InvalidParameter("kikuchi: signal length must be n");
    for (int s : *signal)
      if (s != 1 && s != -1)
        throw InvalidParameter("kikuchi: signal entries must be +-1");
    instance.signal = *signal;
  } else {
    const std::uint64_t seed_x = derive_seed(seed, 0x7369676eULL);
    instance.signal.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      instance.signal[static_cast<std::size_t>(i)] =
          (random_bits(seed_x, static_cast<std::uint64_t>(i)) & 1) ? 1 : -1;
  }
  const std::uint64_t seed_z = derive_seed(seed, 0x6e6f697365ULL);
  instance.noise.resize(static_cast<std::size_t>(entries));
  parallel_for(static_cast<std::ptrdiff_t>(entries), [&](std::ptrdiff_t i) {
    instance.noise[static_cast<std::size_t>(i)] = static_cast<Scalar>(
        normal_draw(seed_z, static_cast<std::uint64_t>(i)));
  });
  return instance;
}

// Degree of the Kikuchi support graph: d_l = C(l, r/2) C(n-l, r/2).
inline std::uint64_t kikuchi_degree(int n, int r, int l) {
  if (r < 2 || r % 2 != 0) throw InvalidParameter("kikuchi_degree: r must be even and >= 2");
  if (l < r / 2 || l > n - r / 2)
    throw InvalidParameter("kikuchi_degree: need r/2 <= l <= n - r/2");
  return binomial_coefficient(l, r / 2) * binomial_coefficient(n - l, r / 2);
}

namespace detail {

// Visits every pair (S, T) with S an (r/2)-subset of `inside` and T an
// (r/2)-subset of `outside`.
template <typename Visit>
void for_each_half_swap(const std::vector<int>& inside,
                        const std::vector<int>& outside, int half,
                        Visit&& visit) {
  const int ni = static_cast<int>(inside.size());
  const int no = static_cast<int>(outside.size());
  if (half > ni || half > no) return;
  std::vector<int> pick_in(static_cast<std::size_t>(half)),
      pick_out(static_cast<std::size_t>(half));
  std::vector<int> idx_in(static_cast<std::size_t>(half)),
      idx_out(static_cast<std::size_t>(half));
  for (int i = 0; i < half; ++i) idx_in[static_cast<std::size_t>(i)] = i;
  for (;;) {
    for (int i = 0; i < half; ++i)
      pick_in[static_cast<std::size_t>(i)] =
          inside[static_cast<std::size_t>(idx_in[static_cast<std::size_t>(i)])];
    for (int i = 0; i < half; ++i) idx_out[static_cast<std::size_t>(i)] = i;
    for (;;) {
      for (int i = 0; i < half; ++i)
        pick_out[static_cast<std::size_t>(i)] = outside[static_cast<std::size_t>(
            idx_out[static_cast<std::size_t>(i)])];
      visit(pick_in, pick_out);
      int j = half - 1;
      while (j >= 0 && idx_out[static_cast<std::size_t>(j)] == no - half + j) --j;
      if (j < 0) break;
      ++idx_out[static_cast<std::size_t>(j)];
      for (int i = j + 1; i < half; ++i)
        idx_out[static_cast<std::size_t>(i)] =
            idx_out[static_cast<std::size_t>(i) - 1] + 1;
    }
    int j = half - 1;
    while (j >= 0 && idx_in[static_cast<std::size_t>(j)] == ni - half + j) --j;
    if (j < 0) break;
    ++idx_in[static_cast<std::size_t>(j)];
    for (int i = j + 1; i < half; ++i)
      idx_in[static_cast<std::size_t>(i)] =
          idx_in[static_cast<std::size_t>(i) - 1] + 1;
  }
}

inline std::vector<int> sorted_union(const std::vector<int>& a,
                                     const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<int> sorted_difference(const std::vector<int>& a,
                                          const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size());
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return out;
}

inline std::vector<int> complement_of(const std::vector<int>& subset, int n) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) - subset.size());
  std::size_t j = 0;
  for (int i = 0; i < n; ++i) {
    if (j < subset.size() && subset[j] == i)
      ++j;
    else
      out.push_back(i);
  }
  return out;
}

}  // namespace detail

// Kikuchi matrix at level l: rows and columns are l-subsets of {0..n-1} in
// colex order, M(I,J) = Y_{I delta J} when |I delta J| = r and 0 otherwise.
// Symmetric, with exactly d_l entries per row on the support.
template <typename Scalar>
SparseMatrix<Scalar> build_kikuchi(const KikuchiInstance<Scalar>& instance,
                                   int l) {
  const int n = instance.n;
  const int r = instance.r;
  if (l < r / 2 || l > n)
    throw InvalidParameter("build_kikuchi: need r/2 <= l <= n");
  const std::uint64_t dim64 = binomial_coefficient(n, l);
  if (dim64 > 20000ULL)
    throw SizeLimit("build_kikuchi: C(n,l) exceeds the size guard of 20000");
  const Index dim = static_cast<Index>(dim64);

  std::vector<std::vector<Eigen::Triplet<Scalar>>> rows(
      static_cast<std::size_t>(dim));
  parallel_for(static_cast<std::ptrdiff_t>(dim), [&](std::ptrdiff_t row) {
    const std::vector<int> i_set =
        subset_colex_unrank(static_cast<std::uint64_t>(row), l);
    const std::vector<int> rest = detail::complement_of(i_set, n);
    auto& triplets = rows[static_cast<std::size_t>(row)];
    detail::for_each_half_swap(
        i_set, rest, r / 2,
        [&](const std::vector<int>& drop, const std::vector<int>& add) {
          const std::vector<int> j_set = detail::sorted_union(
              detail::sorted_difference(i_set, drop), add);
          const std::vector<int> delta = detail::sorted_union(drop, add);
          triplets.emplace_back(static_cast<Index>(row),
                                static_cast<Index>(subset_colex_rank(j_set)),
                                instance.y_value(delta));
        });
  });
  std::vector<Eigen::Triplet<Scalar>> all;
  for (const auto& row : rows) all.insert(all.end(), row.begin(), row.end());
  SparseMatrix<Scalar> m(dim, dim);
  m.setFromTriplets(all.begin(), all.end());
  m.makeCompressed();
  return m;
}

// Exhaustive combinatorial verification of E(M - EM)^2 = d_l I: for every
// row I, the walks I -> K -> J with |I delta K| = r and I delta K = K delta J
// land d_l times on J = I and never elsewhere. Failure would signal a bug in
// the subset machinery, not a property of the instance.
inline bool isotropy_certificate(int n, int r, int l) {
  if (r < 2 || r % 2 != 0)
    throw InvalidParameter("isotropy_certificate: r must be even and >= 2");
  if (l < r / 2 || l > n)
    throw InvalidParameter("isotropy_certificate: need r/2 <= l <= n");
  const std::uint64_t dim64 = binomial_coefficient(n, l);
  if (dim64 > 20000ULL)
    throw SizeLimit("isotropy_certificate: C(n,l) exceeds the size guard");
  const std::uint64_t degree =
      (l <= n - r / 2) ? kikuchi_degree(n, r, l) : 0;

  bool ok = true;
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(dim64), 0);
  std::vector<std::uint64_t> touched;
  for (std::uint64_t row = 0; row < dim64 && ok; ++row) {
    const std::vector<int> i_set = subset_colex_unrank(row, l);
    const std::vector<int> rest = detail::complement_of(i_set, n);
    touched.clear();
    detail::for_each_half_swap(
        i_set, rest, r / 2,
        [&](const std::vector<int>& drop, const std::vector<int>& add) {
          const std::vector<int> k_set = detail::sorted_union(
              detail::sorted_difference(i_set, drop), add);
          const std::vector<int> delta_ik = detail::sorted_union(drop, add);
          // J = K delta (I delta K)
          const std::vector<int> j_set = detail::sorted_union(
              detail::sorted_difference(k_set, delta_ik),
              detail::sorted_difference(delta_ik, k_set));
          const std::uint64_t j_rank = subset_colex_rank(j_set);
          if (counts[static_cast<std::size_t>(j_rank)] == 0)
            touched.push_back(j_rank);
          ++counts[static_cast<std::size_t>(j_rank)];
        });
    for (const std::uint64_t j : touched) {
      if (j != row || counts[static_cast<std::size_t>(j)] != degree) ok = false;
      counts[static_cast<std::size_t>(j)] = 0;
    }
    if (degree > 0 && touched.size() != 1) ok = false;
  }
  return ok;
}

template <typename Scalar = double>
struct DetectionResult {
  Scalar statistic = 0;  // lambda_max(M) / sqrt(d_l)
  bool detected = false;
};

// Spectral detection: flag when lambda_max(M)/sqrt(d_l) exceeds the
// threshold multiplier. The default 2.1 is the null edge 2 sqrt(d_l) plus a
// 0.1 margin.
template <typename Scalar>
DetectionResult<Scalar> kikuchi_detect(const KikuchiInstance<Scalar>& instance,
                                       int l,
                                       Scalar threshold_multiplier = Scalar(2.1)) {
  const std::uint64_t degree = kikuchi_degree(instance.n, instance.r, l);
  if (degree == 0)
    throw InvalidParameter("kikuchi_detect: empty support graph");
  const SparseMatrix<Scalar> m = build_kikuchi(instance, l);
  Scalar top;
  if (m.rows() <= 3000) {
    top = lambda_max_sym(DenseMatrix<Scalar>(m));
  } else {
    top = lanczos_lambda_max<Scalar>(m.rows(), [&](const DenseVector<Scalar>& v) {
      return DenseVector<Scalar>(m * v);
    });
  }
  DetectionResult<Scalar> result;
  result.statistic = top / std::sqrt(static_cast<Scalar>(degree));
  result.detected = result.statistic > threshold_multiplier;
  return result;
}

}  // namespace freelens
