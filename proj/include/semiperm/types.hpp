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

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace semiperm {

/// Upper bound on 1+n (state dimension) and on m (number of drivers).
/// Small fixed-capacity Eigen types keep the inner loops allocation-free.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

enum class ErrorKind {
  invalid_argument,
  unknown_scenario,
  dimension_mismatch,
  smallness_violation,
  quadrature_failure,
  window_exhausted,
  non_convergence,
  horizon_exhausted,
  spatial_box_exit,
  too_few_samples,
  assumption_failure,
  io_failure,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::unknown_scenario: return "unknown_scenario";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::smallness_violation: return "smallness_violation";
    case ErrorKind::quadrature_failure: return "quadrature_failure";
    case ErrorKind::window_exhausted: return "window_exhausted";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::horizon_exhausted: return "horizon_exhausted";
    case ErrorKind::spatial_box_exit: return "spatial_box_exit";
    case ErrorKind::too_few_samples: return "too_few_samples";
    case ErrorKind::assumption_failure: return "assumption_failure";
    case ErrorKind::io_failure: return "io_failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Point (x, y) in R^{1+n}; component 0 is the normal coordinate.
inline Vec make_point(double x, const Vec& y) {
  Vec p(1 + y.size());
  p(0) = x;
  p.tail(y.size()) = y;
  return p;
}

inline Vec empty_vec() { return Vec(0); }

}  // namespace semiperm
