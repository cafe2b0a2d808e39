#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freelens/chaos.h"
#include "freelens/common.h"
#include "freelens/model.h"

namespace freelens {

// Model file format: {"d1", "d2", "self_adjoint", "A0": [row-major],
// "coefficients": [...]} where each coefficient is either a row-major dense
// array or {"triplets": [[i, j, value], ...]} (0-indexed). Writers emit
// dense; readers accept both.

template <typename Scalar>
nlohmann::json model_to_json(const CoefficientModel<Scalar>& model) {
  nlohmann::json j;
  j["d1"] = model.d1;
  j["d2"] = model.d2;
  j["self_adjoint"] = model.self_adjoint;
  std::vector<double> a0;
  a0.reserve(static_cast<std::size_t>(model.d1 * model.d2));
  for (Index r = 0; r < model.d1; ++r)
    for (Index c = 0; c < model.d2; ++c)
      a0.push_back(static_cast<double>(model.mean(r, c)));
  j["A0"] = a0;
  nlohmann::json coeffs = nlohmann::json::array();
  for (Index k = 0; k < model.coefficient_count(); ++k) {
    const DenseMatrix<Scalar> a = model.coefficient_dense(k);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(model.d1 * model.d2));
    for (Index r = 0; r < model.d1; ++r)
      for (Index c = 0; c < model.d2; ++c)
        flat.push_back(static_cast<double>(a(r, c)));
    coeffs.push_back(flat);
  }
  j["coefficients"] = coeffs;
  return j;
}

template <typename Scalar>
CoefficientModel<Scalar> model_from_json(const nlohmann::json& j) {
  try {
    const Index d1 = j.at("d1").get<Index>();
    const Index d2 = j.at("d2").get<Index>();
    const bool self_adjoint = j.at("self_adjoint").get<bool>();
    if (d1 < 1 || d2 < 1) throw IoError("model file: dimensions must be positive");

    const auto& a0_json = j.at("A0");
    if (static_cast<Index>(a0_json.size()) != d1 * d2)
      throw IoError("model file: A0 has wrong length");
    DenseMatrix<Scalar> mean(d1, d2);
    for (Index r = 0; r < d1; ++r)
      for (Index c = 0; c < d2; ++c)
        mean(r, c) = static_cast<Scalar>(
            a0_json.at(static_cast<std::size_t>(r * d2 + c)).get<double>());

    std::vector<SparseMatrix<Scalar>> coeffs;
    for (const auto& entry : j.at("coefficients")) {
      SparseMatrix<Scalar> a(d1, d2);
      if (entry.is_object()) {
        std::vector<Eigen::Triplet<Scalar>> trips;
        for (const auto& t : entry.at("triplets")) {
          if (t.size() != 3) throw IoError("model file: malformed triplet");
          const Index r = t.at(0).get<Index>();
          const Index c = t.at(1).get<Index>();
          if (r < 0 || r >= d1 || c < 0 || c >= d2)
            throw IoError("model file: triplet index out of range");
          trips.emplace_back(r, c, static_cast<Scalar>(t.at(2).get<double>()));
        }
        a.setFromTriplets(trips.begin(), trips.end());
      } else {
        if (static_cast<Index>(entry.size()) != d1 * d2)
          throw IoError("model file: dense coefficient has wrong length");
        DenseMatrix<Scalar> dense(d1, d2);
        for (Index r = 0; r < d1; ++r)
          for (Index c = 0; c < d2; ++c)
            dense(r, c) = static_cast<Scalar>(
                entry.at(static_cast<std::size_t>(r * d2 + c)).get<double>());
        a = dense.sparseView(Scalar(0), Scalar(0));
      }
      a.makeCompressed();
      coeffs.push_back(std::move(a));
    }
    return make_model<Scalar>(d1, d2, self_adjoint, std::move(mean),
                              std::move(coeffs));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
}

template <typename Scalar>
void write_model(const CoefficientModel<Scalar>& model,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << model_to_json(model).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

template <typename Scalar = double>
CoefficientModel<Scalar> read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file parse error: ") + e.what());
  }
  return model_from_json<Scalar>(j);
}

// Tensor file format: {"q", "m", "d1", "d2",
// "entries": [[i_1..i_q, s, t, value], ...]} 0-indexed.

template <typename Scalar>
nlohmann::json tensor_to_json(const ChaosTensor<Scalar>& tensor) {
  nlohmann::json j;
  j["q"] = tensor.q;
  j["m"] = tensor.m;
  j["d1"] = tensor.d1;
  j["d2"] = tensor.d2;
  nlohmann::json entries = nlohmann::json::array();
  for (Index e = 0; e < tensor.entry_count(); ++e) {
    nlohmann::json row = nlohmann::json::array();
    for (int pos = 0; pos < tensor.q + 2; ++pos) row.push_back(tensor.coord(e, pos));
    row.push_back(static_cast<double>(tensor.values[static_cast<std::size_t>(e)]));
    entries.push_back(row);
  }
  j["entries"] = entries;
  return j;
}

template <typename Scalar>
ChaosTensor<Scalar> tensor_from_json(const nlohmann::json& j) {
  try {
    ChaosTensor<Scalar> tensor;
    tensor.q = j.at("q").get<int>();
    tensor.m = j.at("m").get<Index>();
    tensor.d1 = j.at("d1").get<Index>();
    tensor.d2 = j.at("d2").get<Index>();
    if (tensor.q < 1) throw IoError("tensor file: q must be >= 1");
    if (tensor.m < 0 || tensor.d1 < 1 || tensor.d2 < 1)
      throw IoError("tensor file: bad dimensions");
    for (const auto& entry : j.at("entries")) {
      if (static_cast<int>(entry.size()) != tensor.q + 3)
        throw IoError("tensor file: entry has wrong length");
      std::vector<Index> coords;
      coords.reserve(static_cast<std::size_t>(tensor.q) + 2);
      for (int pos = 0; pos < tensor.q + 2; ++pos)
        coords.push_back(entry.at(static_cast<std::size_t>(pos)).get<Index>());
      add_chaos_entry(tensor, coords,
                      static_cast<Scalar>(
                          entry.at(static_cast<std::size_t>(tensor.q) + 2)
                              .get<double>()));
    }
    finalize_chaos_tensor(tensor);
    return tensor;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tensor file: ") + e.what());
  }
}

template <typename Scalar>
void write_tensor(const ChaosTensor<Scalar>& tensor, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << tensor_to_json(tensor).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

template <typename Scalar = double>
ChaosTensor<Scalar> read_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tensor file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tensor file parse error: ") + e.what());
  }
  return tensor_from_json<Scalar>(j);
}

}  // namespace freelens
