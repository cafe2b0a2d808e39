#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "freelens/common.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/parameters.h"

namespace freelens {

// Partition of {1..2p} into p pairs. Canonical form: each pair (i,j) has
// i < j and pairs are sorted by first element.
struct PairPartition {
  std::vector<std::pair<int, int>> pairs;

  int ground_size() const { return 2 * static_cast<int>(pairs.size()); }
};

inline PairPartition make_pair_partition(
    std::vector<std::pair<int, int>> pairs) {
  for (auto& [i, j] : pairs) {
    if (i == j) throw InvalidParameter("pair partition: degenerate pair");
    if (i > j) std::swap(i, j);
  }
  std::sort(pairs.begin(), pairs.end());
  const int two_p = 2 * static_cast<int>(pairs.size());
  std::vector<char> seen(static_cast<std::size_t>(two_p) + 1, 0);
  for (const auto& [i, j] : pairs) {
    if (i < 1 || j > two_p) throw InvalidParameter("pair partition: element out of range");
    if (seen[static_cast<std::size_t>(i)] || seen[static_cast<std::size_t>(j)])
      throw InvalidParameter("pair partition: repeated element");
    seen[static_cast<std::size_t>(i)] = seen[static_cast<std::size_t>(j)] = 1;
  }
  PairPartition nu;
  nu.pairs = std::move(pairs);
  return nu;
}

// Word u : [m] -> [n], 1-based letters.
struct IndexWord {
  std::vector<int> letters;
  int alphabet = 0;
};

inline IndexWord make_index_word(std::vector<int> letters, int alphabet) {
  if (alphabet < 0) throw InvalidWord("index word: negative alphabet");
  for (int l : letters)
    if (l < 1 || l > alphabet) throw InvalidWord("index word: letter out of range");
  IndexWord u;
  u.letters = std::move(letters);
  u.alphabet = alphabet;
  return u;
}

namespace detail {

inline void enumerate_pairings_rec(std::vector<char>& used,
                                   std::vector<std::pair<int, int>>& current,
                                   std::vector<PairPartition>& out) {
  const int two_p = static_cast<int>(used.size()) - 1;
  int first = 0;
  for (int i = 1; i <= two_p; ++i)
    if (!used[static_cast<std::size_t>(i)]) {
      first = i;
      break;
    }
  if (first == 0) {
    PairPartition nu;
    nu.pairs = current;
    out.push_back(std::move(nu));
    return;
  }
  used[static_cast<std::size_t>(first)] = 1;
  for (int j = first + 1; j <= two_p; ++j) {
    if (used[static_cast<std::size_t>(j)]) continue;
    used[static_cast<std::size_t>(j)] = 1;
    current.emplace_back(first, j);
    enumerate_pairings_rec(used, current, out);
    current.pop_back();
    used[static_cast<std::size_t>(j)] = 0;
  }
  used[static_cast<std::size_t>(first)] = 0;
}

}  // namespace detail

// All (2p-1)!! pairings of {1..2p}, each in canonical form. Guarded at
// p <= 8 ((2*8-1)!! = 2,027,025).
inline std::vector<PairPartition> enumerate_pairings(int p) {
  if (p < 0 || p > 8) throw SizeLimit("enumerate_pairings: p must be in [0, 8]");
  std::vector<PairPartition> out;
  std::vector<char> used(static_cast<std::size_t>(2 * p) + 1, 0);
  std::vector<std::pair<int, int>> current;
  detail::enumerate_pairings_rec(used, current, out);
  return out;
}

// True iff no pairs (i1,i2), (j1,j2) interleave as i1 < j1 < i2 < j2.
inline bool is_noncrossing(const PairPartition& nu) {
  const auto& pairs = nu.pairs;
  for (std::size_t a = 0; a < pairs.size(); ++a)
    for (std::size_t b = a + 1; b < pairs.size(); ++b) {
      // Canonical order gives pairs[a].first < pairs[b].first.
      if (pairs[b].first < pairs[a].second && pairs[a].second < pairs[b].second)
        return false;
    }
  return true;
}

// u ~ nu: u(i) == u(j) for every pair (i,j).
inline bool compatible(const IndexWord& u, const PairPartition& nu) {
  if (static_cast<int>(u.letters.size()) != nu.ground_size())
    throw LengthMismatch("compatible: word length must equal 2p");
  for (const auto& [i, j] : nu.pairs)
    if (u.letters[static_cast<std::size_t>(i) - 1] !=
        u.letters[static_cast<std::size_t>(j) - 1])
      return false;
  return true;
}

// E[g_{u(1)} ... g_{u(m)}] for iid standard Gaussians: the number of pair
// partitions compatible with u. Evaluated as the product over letters of
// (multiplicity - 1)!!, which is zero as soon as some letter appears an odd
// number of times; tests cross-check this against pairing enumeration.
inline std::uint64_t wick_moment(const IndexWord& u) {
  if (u.letters.size() % 2 != 0) return 0;
  std::vector<int> multiplicity(static_cast<std::size_t>(u.alphabet) + 1, 0);
  for (int l : u.letters) ++multiplicity[static_cast<std::size_t>(l)];
  std::uint64_t total = 1;
  for (int m : multiplicity) {
    if (m % 2 != 0) return 0;
    for (int k = m - 1; k >= 1; k -= 2) total *= static_cast<std::uint64_t>(k);
  }
  return total;
}

namespace detail {

inline double double_factorial_odd(int p) {
  double r = 1;
  for (int k = 2 * p - 1; k >= 1; k -= 2) r *= k;
  return r;
}

inline double catalan_number(int p) {
  double r = 1;
  for (int k = 0; k < p; ++k) r = r * 2 * (2 * k + 1) / (k + 2);
  return r;
}

template <typename Scalar>
void check_centered_self_adjoint(const CoefficientModel<Scalar>& model) {
  if (!model.self_adjoint)
    throw NotSelfAdjoint("trace moments require a self-adjoint model");
  if (!model.mean.isZero(Scalar(0)))
    throw NotCentered("trace moments require a centered model (A0 = 0)");
}

// sum over words compatible with nu of Tr(A_{u(1)} ... A_{u(2p)}), by
// depth-first search over positions with prefix-product reuse: a letter is
// chosen when the first element of its pair is reached and is forced at the
// second.
template <typename Scalar>
void summand_rec(const std::vector<DenseMatrix<Scalar>>& a,
                 const std::vector<int>& pair_of,
                 const std::vector<char>& opens, std::vector<int>& letter,
                 std::size_t pos, const DenseMatrix<Scalar>& prefix,
                 Scalar& total) {
  if (pos == pair_of.size()) {
    total += prefix.trace();
    return;
  }
  if (opens[pos]) {
    for (std::size_t l = 0; l < a.size(); ++l) {
      letter[static_cast<std::size_t>(pair_of[pos])] = static_cast<int>(l);
      summand_rec(a, pair_of, opens, letter, pos + 1,
                  DenseMatrix<Scalar>(prefix * a[l]), total);
    }
  } else {
    const auto l =
        static_cast<std::size_t>(letter[static_cast<std::size_t>(pair_of[pos])]);
    summand_rec(a, pair_of, opens, letter, pos + 1,
                DenseMatrix<Scalar>(prefix * a[l]), total);
  }
}

template <typename Scalar>
Scalar pairing_summand_impl(const std::vector<DenseMatrix<Scalar>>& a, Index d,
                            const PairPartition& nu) {
  const std::size_t two_p = static_cast<std::size_t>(nu.ground_size());
  std::vector<int> pair_of(two_p, -1);
  std::vector<char> opens(two_p, 0);
  for (std::size_t k = 0; k < nu.pairs.size(); ++k) {
    const auto& [i, j] = nu.pairs[k];
    pair_of[static_cast<std::size_t>(i) - 1] = static_cast<int>(k);
    pair_of[static_cast<std::size_t>(j) - 1] = static_cast<int>(k);
    opens[static_cast<std::size_t>(i) - 1] = 1;
  }
  std::vector<int> letter(nu.pairs.size(), 0);
  Scalar total = Scalar(0);
  summand_rec(a, pair_of, opens, letter, 0,
              DenseMatrix<Scalar>(DenseMatrix<Scalar>::Identity(d, d)), total);
  return total / static_cast<Scalar>(d);
}

template <typename Scalar>
std::vector<DenseMatrix<Scalar>> dense_coefficients(
    const CoefficientModel<Scalar>& model) {
  std::vector<DenseMatrix<Scalar>> a;
  a.reserve(static_cast<std::size_t>(model.coefficient_count()));
  for (Index k = 0; k < model.coefficient_count(); ++k)
    a.push_back(model.coefficient_dense(k));
  return a;
}

}  // namespace detail

// The nu-summand sum_{u ~ nu} tr(A_{u(1)} ... A_{u(2p)}) with normalized
// trace. Buchholz's bound says this never exceeds tr(sum A_k^2)^p.
template <typename Scalar>
Scalar pairing_summand(const CoefficientModel<Scalar>& model,
                       const PairPartition& nu) {
  detail::check_centered_self_adjoint(model);
  const int p = static_cast<int>(nu.pairs.size());
  const double words = std::pow(static_cast<double>(model.coefficient_count()),
                                static_cast<double>(p));
  if (words > 1e7) throw SizeLimit("pairing_summand: n^p exceeds the size guard");
  return detail::pairing_summand_impl(detail::dense_coefficients(model),
                                      model.d1, nu);
}

// E tr X^{2p}, exactly, via Wick's formula: the sum of the nu-summand over
// all pairings of [2p].
template <typename Scalar>
Scalar gaussian_trace_moment(const CoefficientModel<Scalar>& model, int p) {
  if (p < 0) throw InvalidParameter("gaussian_trace_moment: p must be >= 0");
  if (p == 0) return Scalar(1);
  detail::check_centered_self_adjoint(model);
  const double words = std::pow(static_cast<double>(model.coefficient_count()),
                                static_cast<double>(p));
  if (words * detail::double_factorial_odd(p) > 1e7)
    throw SizeLimit("gaussian_trace_moment: n^p (2p-1)!! exceeds the size guard");
  const auto pairings = enumerate_pairings(p);
  const auto a = detail::dense_coefficients(model);
  std::vector<Scalar> terms(pairings.size(), Scalar(0));
  parallel_for(static_cast<std::ptrdiff_t>(pairings.size()),
               [&](std::ptrdiff_t i) {
                 terms[static_cast<std::size_t>(i)] = detail::pairing_summand_impl(
                     a, model.d1, pairings[static_cast<std::size_t>(i)]);
               });
  return pairwise_sum(terms);
}

// (tr x tau) X_free^{2p}, exactly: same sum restricted to non-crossing
// pairings.
template <typename Scalar>
Scalar free_trace_moment(const CoefficientModel<Scalar>& model, int p) {
  if (p < 0) throw InvalidParameter("free_trace_moment: p must be >= 0");
  if (p == 0) return Scalar(1);
  detail::check_centered_self_adjoint(model);
  const double words = std::pow(static_cast<double>(model.coefficient_count()),
                                static_cast<double>(p));
  if (words * detail::catalan_number(p) > 1e7)
    throw SizeLimit("free_trace_moment: n^p Catalan(p) exceeds the size guard");
  std::vector<PairPartition> noncrossing;
  for (auto& nu : enumerate_pairings(p))
    if (is_noncrossing(nu)) noncrossing.push_back(std::move(nu));
  const auto a = detail::dense_coefficients(model);
  std::vector<Scalar> terms(noncrossing.size(), Scalar(0));
  parallel_for(static_cast<std::ptrdiff_t>(noncrossing.size()),
               [&](std::ptrdiff_t i) {
                 terms[static_cast<std::size_t>(i)] = detail::pairing_summand_impl(
                     a, model.d1, noncrossing[static_cast<std::size_t>(i)]);
               });
  return pairwise_sum(terms);
}

template <typename Scalar = double>
struct InterpolationGap {
  Scalar lhs = 0;   // |(E tr X^{2p})^{1/2p} - ((tr x tau) X_free^{2p})^{1/2p}|
  Scalar rhs = 0;   // 2 p^{3/4} v_tilde(X)
  bool holds = false;
};

// The fully-explicit-constant trace-moment gap: the 2p-th moment roots of X
// and X_free differ by at most 2 p^{3/4} v_tilde(X).
template <typename Scalar>
InterpolationGap<Scalar> interpolation_gap(const CoefficientModel<Scalar>& model,
                                           int p) {
  InterpolationGap<Scalar> gap;
  if (p == 0) {
    gap.holds = true;
    return gap;
  }
  const Scalar g = std::max(gaussian_trace_moment(model, p), Scalar(0));
  const Scalar f = std::max(free_trace_moment(model, p), Scalar(0));
  const Scalar exponent = Scalar(1) / (Scalar(2) * static_cast<Scalar>(p));
  gap.lhs = std::abs(std::pow(g, exponent) - std::pow(f, exponent));
  const Scalar v_tilde = std::sqrt(sigma(model) * v_param(model));
  gap.rhs = Scalar(2) * std::pow(static_cast<Scalar>(p), Scalar(0.75)) * v_tilde;
  gap.holds = gap.lhs <= gap.rhs + Scalar(1e-12);
  return gap;
}

}  // namespace freelens
