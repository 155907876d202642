#pragma once

#include <json.hpp>

#include "ldpf/core.hpp"

namespace ldpf {

using Json = nlohmann::ordered_json;

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(Json(std::vector<double>(m.row(r).begin(), m.row(r).end())));
  return rows;
}

inline Matrix matrix_from_json(const Json& j, std::size_t expected_cols = 0) {
  if (!j.is_array()) throw Error("expected a matrix (array of rows)");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : expected_cols;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error("ragged matrix row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace ldpf
