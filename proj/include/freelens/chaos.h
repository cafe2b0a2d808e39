#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "freelens/common.h"
#include "freelens/free_bounds.h"
#include "freelens/linalg.h"
#include "freelens/model.h"
#include "freelens/parallel.h"
#include "freelens/rng.h"

namespace freelens {

// Coefficient tensor of an order-q Gaussian matrix chaos
// X = sum g_{i_1} ... g_{i_q} A_{i_1..i_q}: coordinates 1..q are chaos
// indices with range m, coordinates q+1 and q+2 are the matrix row and
// column indices. Entries are kept sparse in canonical (lexicographic)
// order; duplicate index tuples are rejected.
template <typename Scalar = double>
struct ChaosTensor {
  int q = 1;
  Index m = 0;
  Index d1 = 0;
  Index d2 = 0;
  std::vector<Index> indices;  // flat, q+2 coordinates per entry
  std::vector<Scalar> values;

  Index entry_count() const { return static_cast<Index>(values.size()); }

  // Range of 0-based coordinate position (0..q+1).
  Index range(int pos) const {
    return pos < q ? m : (pos == q ? d1 : d2);
  }

  Index coord(Index entry, int pos) const {
    return indices[static_cast<std::size_t>(entry) *
                       (static_cast<std::size_t>(q) + 2) +
                   static_cast<std::size_t>(pos)];
  }
};

template <typename Scalar>
void add_chaos_entry(ChaosTensor<Scalar>& tensor,
                     const std::vector<Index>& coords, Scalar value) {
  if (static_cast<int>(coords.size()) != tensor.q + 2)
    throw InvalidParameter("chaos entry: wrong number of coordinates");
  for (int pos = 0; pos < tensor.q + 2; ++pos)
    if (coords[static_cast<std::size_t>(pos)] < 0 ||
        coords[static_cast<std::size_t>(pos)] >= tensor.range(pos))
      throw InvalidParameter("chaos entry: coordinate out of range");
  tensor.indices.insert(tensor.indices.end(), coords.begin(), coords.end());
  tensor.values.push_back(value);
}

// Sorts entries lexicographically and rejects duplicate index tuples.
template <typename Scalar>
void finalize_chaos_tensor(ChaosTensor<Scalar>& tensor) {
  const std::size_t width = static_cast<std::size_t>(tensor.q) + 2;
  const std::size_t count = tensor.values.size();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto tuple_less = [&](std::size_t a, std::size_t b) {
    for (std::size_t p = 0; p < width; ++p) {
      const Index x = tensor.indices[a * width + p];
      const Index y = tensor.indices[b * width + p];
      if (x != y) return x < y;
    }
    return false;
  };
  std::sort(order.begin(), order.end(), tuple_less);
  for (std::size_t i = 0; i + 1 < count; ++i)
    if (!tuple_less(order[i], order[i + 1]))
      throw InvalidParameter("chaos tensor: duplicate index tuple");
  std::vector<Index> sorted_indices(tensor.indices.size());
  std::vector<Scalar> sorted_values(count);
  for (std::size_t i = 0; i < count; ++i) {
    sorted_values[i] = tensor.values[order[i]];
    for (std::size_t p = 0; p < width; ++p)
      sorted_indices[i * width + p] = tensor.indices[order[i] * width + p];
  }
  tensor.indices.swap(sorted_indices);
  tensor.values.swap(sorted_values);
}

// Coordinate split of [q+2] into row and column groups (1-based, ascending).
struct FlatteningSpec {
  std::vector<int> row_coords;
  std::vector<int> col_coords;
};

namespace detail {

template <typename Scalar>
void validate_spec(const ChaosTensor<Scalar>& tensor,
                   const FlatteningSpec& spec) {
  const int total = tensor.q + 2;
  std::vector<char> seen(static_cast<std::size_t>(total) + 1, 0);
  const auto take = [&](const std::vector<int>& group) {
    int prev = 0;
    for (int t : group) {
      if (t < 1 || t > total) throw InvalidSpec("flattening: coordinate out of range");
      if (t <= prev) throw InvalidSpec("flattening: coordinates must be ascending");
      if (seen[static_cast<std::size_t>(t)])
        throw InvalidSpec("flattening: coordinate in both groups");
      seen[static_cast<std::size_t>(t)] = 1;
      prev = t;
    }
  };
  take(spec.row_coords);
  take(spec.col_coords);
  for (int t = 1; t <= total; ++t)
    if (!seen[static_cast<std::size_t>(t)])
      throw InvalidSpec("flattening: groups must partition all coordinates");
}

// Mixed-radix key of an entry over a coordinate group; the first (smallest)
// coordinate varies fastest.
template <typename Scalar>
__int128 group_key(const ChaosTensor<Scalar>& tensor, Index entry,
                   const std::vector<int>& group) {
  __int128 key = 0;
  __int128 stride = 1;
  for (int t : group) {
    key += stride * static_cast<__int128>(tensor.coord(entry, t - 1));
    stride *= static_cast<__int128>(tensor.range(t - 1));
  }
  return key;
}

template <typename Scalar>
long double group_extent(const ChaosTensor<Scalar>& tensor,
                         const std::vector<int>& group) {
  long double extent = 1;
  for (int t : group) extent *= static_cast<long double>(tensor.range(t - 1));
  return extent;
}

}  // namespace detail

// Dense matricization Mat_{R,C}: rows indexed by the R coordinates, columns
// by the C coordinates, entries copied from the tensor. Intended for small
// tensors; norms of large flattenings go through flattening_norm.
template <typename Scalar>
DenseMatrix<Scalar> flatten(const ChaosTensor<Scalar>& tensor,
                            const FlatteningSpec& spec) {
  detail::validate_spec(tensor, spec);
  const long double rows_extent = detail::group_extent(tensor, spec.row_coords);
  const long double cols_extent = detail::group_extent(tensor, spec.col_coords);
  if (rows_extent * cols_extent > 5e7L)
    throw SizeLimit("flatten: dense matricization exceeds the size guard");
  DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(
      static_cast<Index>(rows_extent), static_cast<Index>(cols_extent));
  for (Index e = 0; e < tensor.entry_count(); ++e)
    out(static_cast<Index>(detail::group_key(tensor, e, spec.row_coords)),
        static_cast<Index>(detail::group_key(tensor, e, spec.col_coords))) =
        tensor.values[static_cast<std::size_t>(e)];
  return out;
}

// Spectral norm of Mat_{R,C} on its occupied rows and columns (zero rows and
// columns do not affect the norm, so the matricization is compressed before
// the solve). Small compressed sides use a dense Gram eigensolve, large ones
// Lanczos on the Gram operator.
template <typename Scalar>
Scalar flattening_norm(const ChaosTensor<Scalar>& tensor,
                       const FlatteningSpec& spec) {
  detail::validate_spec(tensor, spec);
  const Index nnz = tensor.entry_count();
  if (nnz == 0) return Scalar(0);

  std::vector<__int128> row_keys(static_cast<std::size_t>(nnz));
  std::vector<__int128> col_keys(static_cast<std::size_t>(nnz));
  for (Index e = 0; e < nnz; ++e) {
    row_keys[static_cast<std::size_t>(e)] =
        detail::group_key(tensor, e, spec.row_coords);
    col_keys[static_cast<std::size_t>(e)] =
        detail::group_key(tensor, e, spec.col_coords);
  }
  const auto compress = [](std::vector<__int128> keys) {
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
  };
  const std::vector<__int128> rows = compress(row_keys);
  const std::vector<__int128> cols = compress(col_keys);
  const auto id_of = [](const std::vector<__int128>& sorted, __int128 key) {
    return static_cast<Index>(
        std::lower_bound(sorted.begin(), sorted.end(), key) - sorted.begin());
  };

  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (Index e = 0; e < nnz; ++e)
    trips.emplace_back(id_of(rows, row_keys[static_cast<std::size_t>(e)]),
                       id_of(cols, col_keys[static_cast<std::size_t>(e)]),
                       tensor.values[static_cast<std::size_t>(e)]);
  const Index nr = static_cast<Index>(rows.size());
  const Index nc = static_cast<Index>(cols.size());
  SparseMatrix<Scalar> b(nr, nc);
  b.setFromTriplets(trips.begin(), trips.end());
  b.makeCompressed();

  const bool gram_on_cols = nc <= nr;
  const Index side = gram_on_cols ? nc : nr;
  if (side <= 1024) {
    SparseMatrix<Scalar> gram =
        gram_on_cols ? SparseMatrix<Scalar>(b.transpose() * b)
                     : SparseMatrix<Scalar>(b * b.transpose());
    return std::sqrt(
        std::max(lambda_max_sym(DenseMatrix<Scalar>(gram)), Scalar(0)));
  }
  auto apply = [&](const DenseVector<Scalar>& v) {
    if (gram_on_cols)
      return DenseVector<Scalar>(b.transpose() * DenseVector<Scalar>(b * v));
    return DenseVector<Scalar>(b * DenseVector<Scalar>(b.transpose() * v));
  };
  return std::sqrt(
      std::max(lanczos_lambda_max<Scalar>(side, apply), Scalar(0)));
}

namespace detail {

template <typename Scalar>
FlatteningSpec split_from_mask(const ChaosTensor<Scalar>& tensor,
                               unsigned mask, bool row_gets_q1) {
  FlatteningSpec spec;
  for (int t = 1; t <= tensor.q; ++t) {
    if (mask & (1u << (t - 1)))
      spec.row_coords.push_back(t);
    else
      spec.col_coords.push_back(t);
  }
  if (row_gets_q1) {
    spec.row_coords.push_back(tensor.q + 1);
    spec.col_coords.push_back(tensor.q + 2);
  } else {
    spec.col_coords.push_back(tensor.q + 1);
    spec.col_coords.push_back(tensor.q + 2);
  }
  return spec;
}

}  // namespace detail

// sigma(A): the largest flattening norm over the 2^q partition splits that
// keep the matrix row coordinate on the row side and the matrix column
// coordinate on the column side.
template <typename Scalar>
Scalar sigma_chaos(const ChaosTensor<Scalar>& tensor) {
  if (tensor.q < 1 || tensor.q > 20)
    throw SizeLimit("sigma_chaos: q out of the supported range");
  const unsigned splits = 1u << tensor.q;
  std::vector<Scalar> norms(splits, Scalar(0));
  parallel_for(static_cast<std::ptrdiff_t>(splits), [&](std::ptrdiff_t mask) {
    norms[static_cast<std::size_t>(mask)] = flattening_norm(
        tensor, detail::split_from_mask(tensor, static_cast<unsigned>(mask), true));
  });
  return *std::max_element(norms.begin(), norms.end());
}

// v(A): the largest flattening norm over the 2^q - 1 splits that place both
// matrix coordinates on the column side (nonempty row group).
template <typename Scalar>
Scalar v_chaos(const ChaosTensor<Scalar>& tensor) {
  if (tensor.q < 1 || tensor.q > 20)
    throw SizeLimit("v_chaos: q out of the supported range");
  const unsigned splits = 1u << tensor.q;
  std::vector<Scalar> norms(splits, Scalar(0));
  parallel_for(static_cast<std::ptrdiff_t>(splits) - 1, [&](std::ptrdiff_t i) {
    const unsigned mask = static_cast<unsigned>(i) + 1;  // skip empty R
    norms[static_cast<std::size_t>(mask)] = flattening_norm(
        tensor, detail::split_from_mask(tensor, mask, false));
  });
  return *std::max_element(norms.begin(), norms.end());
}

// Iterated intrinsic-freeness bound for a matrix chaos:
//   E||X|| <= C_q ( sigma(A) + ln(d1+d2+m)^{(q+2)/2} v(A) ).
template <typename Scalar>
BoundReport<Scalar> iterated_bound(const ChaosTensor<Scalar>& tensor,
                                   Scalar constant_q) {
  if (constant_q <= Scalar(0))
    throw InvalidParameter("iterated_bound: C_q must be > 0");
  const Scalar s = sigma_chaos(tensor);
  const Scalar v = v_chaos(tensor);
  const Scalar log_dim =
      std::log(static_cast<Scalar>(tensor.d1 + tensor.d2 + tensor.m));
  BoundReport<Scalar> report;
  report.name = "iterated_chaos_bound";
  report.constant_assumed = constant_q;
  report.upper =
      constant_q *
      (s + std::pow(log_dim, static_cast<Scalar>(tensor.q + 2) / 2) * v);
  report.inputs.sigma = s;
  report.inputs.v = v;
  report.inputs.d = tensor.d1 + tensor.d2 + tensor.m;
  return report;
}

// One draw of the chaos. Decoupled: independent Gaussian families
// g^{(1)}..g^{(q)} and the sum runs over all index tuples. Coupled: a single
// family and only square-free tuples (distinct chaos indices), guarded to
// q <= 3. For q = 1 both coincide with model sampling at equal seeds.
template <typename Scalar>
DenseMatrix<Scalar> sample_chaos(const ChaosTensor<Scalar>& tensor,
                                 std::uint64_t seed, bool decoupled) {
  if (!decoupled && tensor.q > 3)
    throw SizeLimit("sample_chaos: coupled sampling is guarded to q <= 3");
  DenseMatrix<Scalar> draws(tensor.q, tensor.m);
  for (int j = 0; j < tensor.q; ++j) {
    const int family = decoupled ? j : 0;
    for (Index i = 0; i < tensor.m; ++i)
      draws(j, i) = static_cast<Scalar>(normal_draw(
          seed, static_cast<std::uint64_t>(family) *
                        static_cast<std::uint64_t>(tensor.m) +
                    static_cast<std::uint64_t>(i)));
  }
  DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(tensor.d1, tensor.d2);
  for (Index e = 0; e < tensor.entry_count(); ++e) {
    if (!decoupled) {
      bool square_free = true;
      for (int a = 0; a < tensor.q && square_free; ++a)
        for (int b = a + 1; b < tensor.q; ++b)
          if (tensor.coord(e, a) == tensor.coord(e, b)) {
            square_free = false;
            break;
          }
      if (!square_free) continue;
    }
    Scalar g = tensor.values[static_cast<std::size_t>(e)];
    for (int j = 0; j < tensor.q; ++j) g *= draws(j, tensor.coord(e, j));
    out(tensor.coord(e, tensor.q), tensor.coord(e, tensor.q + 1)) += g;
  }
  return out;
}

// q = 1 view of a coefficient model: entries (k, s, t) -> (A_k)_{s,t}.
template <typename Scalar>
ChaosTensor<Scalar> to_chaos_tensor(const CoefficientModel<Scalar>& model) {
  ChaosTensor<Scalar> tensor;
  tensor.q = 1;
  tensor.m = model.coefficient_count();
  tensor.d1 = model.d1;
  tensor.d2 = model.d2;
  for (Index k = 0; k < model.coefficient_count(); ++k) {
    const auto& a = model.coefficients[static_cast<std::size_t>(k)];
    for (Index col = 0; col < a.outerSize(); ++col)
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, col); it; ++it)
        add_chaos_entry(tensor, {k, it.row(), it.col()}, it.value());
  }
  finalize_chaos_tensor(tensor);
  return tensor;
}

// The decoupled degree-6 sum-of-squares chaos for tensor PCA:
//   Y = sum 1_{(j1,k1) != (j2,k2)} g^{(1)}_{i,j1,k1} g^{(2)}_{i,j2,k2}
//       (e_{j1} x e_{j2})(e_{k1} x e_{k2})^T.
// Chaos order q = 2, chaos range m = n d^2 with (i,j,k) encoded as
// i + n j + n d k, matrix block d^2 x d^2 with (a,b) encoded as a + d b.
template <typename Scalar = double>
ChaosTensor<Scalar> sos_chaos_tensor(Index n, Index d) {
  if (n < 1 || d < 1) throw InvalidParameter("sos_chaos_tensor: need n, d >= 1");
  const double entries = static_cast<double>(n) * static_cast<double>(d * d) *
                         static_cast<double>(d * d - 1);
  if (entries > 2e7)
    throw SizeLimit("sos_chaos_tensor: entry count exceeds the size guard");
  ChaosTensor<Scalar> tensor;
  tensor.q = 2;
  tensor.m = n * d * d;
  tensor.d1 = d * d;
  tensor.d2 = d * d;
  const auto chaos_index = [&](Index i, Index j, Index k) {
    return i + n * j + n * d * k;
  };
  for (Index i = 0; i < n; ++i)
    for (Index j1 = 0; j1 < d; ++j1)
      for (Index k1 = 0; k1 < d; ++k1)
        for (Index j2 = 0; j2 < d; ++j2)
          for (Index k2 = 0; k2 < d; ++k2) {
            if (j1 == j2 && k1 == k2) continue;
            add_chaos_entry(tensor,
                            {chaos_index(i, j1, k1), chaos_index(i, j2, k2),
                             j1 + d * j2, k1 + d * k2},
                            Scalar(1));
          }
  finalize_chaos_tensor(tensor);
  return tensor;
}

}  // namespace freelens
