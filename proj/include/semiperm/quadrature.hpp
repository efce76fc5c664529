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

#include "semiperm/types.hpp"

#include <cmath>

namespace semiperm {

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth, bool& ok) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) {
    ok = false;
    return left + right + delta / 15.0;
  }
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance tol.
/// Throws quadrature_failure when the recursion budget runs out.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 48) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(fm))
    throw Error(ErrorKind::quadrature_failure, "integrand is not finite");
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  bool ok = true;
  const double r = detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth, ok);
  if (!ok || !std::isfinite(r))
    throw Error(ErrorKind::quadrature_failure, "adaptive Simpson did not converge");
  return r;
}

}  // namespace semiperm
