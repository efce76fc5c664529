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

#include <cmath>

namespace semiperm {

/// Univariate second-order jet: value, first and second derivative.
/// Built-in coefficient formulas are written once as templates and
/// evaluated either on double or on Jet2 to obtain exact derivatives.
struct Jet2 {
  double v = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;

  constexpr Jet2() = default;
  constexpr Jet2(double value) : v(value) {}  // NOLINT: implicit constant lift
  constexpr Jet2(double value, double first, double second)
      : v(value), d1(first), d2(second) {}

  static constexpr Jet2 variable(double at) { return {at, 1.0, 0.0}; }
};

constexpr Jet2 operator+(Jet2 a, Jet2 b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
constexpr Jet2 operator-(Jet2 a, Jet2 b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
constexpr Jet2 operator-(Jet2 a) { return {-a.v, -a.d1, -a.d2}; }
constexpr Jet2 operator*(Jet2 a, Jet2 b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}
constexpr Jet2 operator/(Jet2 a, Jet2 b) {
  const double q = a.v / b.v;
  const double q1 = (a.d1 - q * b.d1) / b.v;
  const double q2 = (a.d2 - 2.0 * q1 * b.d1 - q * b.d2) / b.v;
  return {q, q1, q2};
}

// Composition with a scalar function g given g(v), g'(v), g''(v).
constexpr Jet2 chain(Jet2 a, double g0, double g1, double g2) {
  return {g0, g1 * a.d1, g2 * a.d1 * a.d1 + g1 * a.d2};
}

inline Jet2 exp(Jet2 a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}

inline Jet2 sqrt(Jet2 a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

inline double value_of(double a) { return a; }
inline double value_of(const Jet2& a) { return a.v; }

}  // namespace semiperm
