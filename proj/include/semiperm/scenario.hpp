/*
   Copyright 2026 The semiperm Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include "semiperm/coefficients.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace semiperm {

namespace detail {

inline Vec vec_from_json(const nlohmann::json& j, int expected, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != expected)
    throw Error(ErrorKind::dimension_mismatch,
                std::string(what) + ": expected " + std::to_string(expected) + " entries, got " +
                    std::to_string(v.size()));
  Vec out(expected);
  for (int i = 0; i < expected; ++i) out(i) = v[i];
  return out;
}

inline Mat mat_from_json(const nlohmann::json& j, int rows, int cols, const char* what) {
  const auto v = j.get<std::vector<std::vector<double>>>();
  if (static_cast<int>(v.size()) != rows)
    throw Error(ErrorKind::dimension_mismatch, std::string(what) + ": wrong number of rows");
  Mat out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(v[i].size()) != cols)
      throw Error(ErrorKind::dimension_mismatch, std::string(what) + ": wrong number of columns");
    for (int l = 0; l < cols; ++l) out(i, l) = v[i][l];
  }
  return out;
}

inline DensityProfile density_from_json(const nlohmann::json& j) {
  if (j.is_number()) return DensityProfile::constant(j.get<double>());
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return DensityProfile::constant(j.value("value", 1.0));
  if (kind == "sine")
    return DensityProfile::sine(j.value("offset", 2.0), j.value("amplitude", 1.0),
                                j.value("frequency", 1.0));
  throw Error(ErrorKind::invalid_argument, "unknown density kind '" + kind + "'");
}

inline GridAxis axis_from_json(const nlohmann::json& j) {
  return GridAxis{j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("count").get<int>()};
}

}  // namespace detail

/*!
 * Builds a coefficient field from a scenario description.
 *
 * Built-ins: "constant", "oned-skew", "fig2". Custom scenarios use
 * "table" with sampled values on a regular grid. See docs/config.md.
 */
inline FieldPtr build_scenario(const nlohmann::json& spec) {
  using detail::mat_from_json;
  using detail::vec_from_json;
  const std::string name = spec.value("name", "");

  if (name == "oned-skew") {
    Vec b = Vec::Zero(1);
    b(0) = spec.value("b", 0.0);
    Mat s(1, 1);
    s(0, 0) = spec.value("sigma", 1.0);
    const DensityProfile d = spec.contains("density") ? detail::density_from_json(spec["density"])
                                                      : DensityProfile::constant(1.0);
    return std::make_shared<ConstantField>("oned-skew", b, s, spec.value("beta", 0.5), Vec(0), d);
  }

  if (name == "constant") {
    const int n = spec.value("n", 0);
    const int m = spec.value("m", 1 + n);
    if (n < 0 || m < 1 || 1 + n > kMaxDim || m > kMaxDim)
      throw Error(ErrorKind::dimension_mismatch, "constant: unsupported (n, m)");
    const Vec b = spec.contains("b") ? vec_from_json(spec["b"], 1 + n, "b") : Vec::Zero(1 + n);
    Mat s;
    if (spec.contains("sigma")) {
      s = mat_from_json(spec["sigma"], 1 + n, m, "sigma");
    } else {
      if (m != 1 + n)
        throw Error(ErrorKind::dimension_mismatch, "constant: sigma required when m != 1+n");
      s = Mat::Identity(1 + n, m);
    }
    const Vec theta = spec.contains("theta") ? vec_from_json(spec["theta"], n, "theta") : Vec::Zero(n);
    const DensityProfile d = spec.contains("density") ? detail::density_from_json(spec["density"])
                                                      : DensityProfile::constant(1.0);
    return std::make_shared<ConstantField>("constant", b, s, spec.value("beta", 0.0), theta, d);
  }

  if (name == "fig2") {
    return std::make_shared<RotationField>(spec.value("gamma", 1e-2),
                                           spec.value("truncation_radius", 10.0),
                                           spec.value("truncation_width", 2.0));
  }

  if (name == "table") {
    const int n = spec.at("n").get<int>();
    const int m = spec.at("m").get<int>();
    TableField::Tables t;
    std::vector<GridAxis> axes;
    for (const auto& a : spec.at("axes")) axes.push_back(detail::axis_from_json(a));
    if (static_cast<int>(axes.size()) != 1 + n)
      throw Error(ErrorKind::dimension_mismatch, "table: need 1+n axes");
    t.grid = RegularGrid(axes);
    t.b = spec.at("b").get<std::vector<std::vector<double>>>();
    t.sigma = spec.at("sigma").get<std::vector<std::vector<double>>>();
    t.beta = spec.at("beta").get<std::vector<double>>();
    t.theta = spec.value("theta", std::vector<std::vector<double>>{});
    const auto& d = spec.at("density");
    t.density_axis = detail::axis_from_json(d);
    t.density = d.at("values").get<std::vector<double>>();
    return std::make_shared<TableField>(n, m, std::move(t));
  }

  throw Error(ErrorKind::unknown_scenario, "unknown scenario '" + name + "'");
}

}  // namespace semiperm
