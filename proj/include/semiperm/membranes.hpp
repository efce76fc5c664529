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
#include "semiperm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <vector>

namespace semiperm {

struct Bracket {
  long k_lo = 0;
  long k_hi = 0;
  long nearest = 0;

  bool on_membrane() const { return k_lo == k_hi; }
  bool operator==(const Bracket&) const = default;
};

/// Membrane triple a_{k-1}, a_k, a_{k+1}.
struct StripPositions {
  double left;
  double center;
  double right;
};

/*!
 * Membrane abscissas a_k = int_0^{eps k} d(s) ds.
 *
 * Positions are computed lazily, outward from k = 0, so that a_{k+1} is
 * a_k plus the integral over one cell. The window may grow until it covers
 * [box_lo, box_hi] plus `margin` strips on either side; requests beyond
 * that raise window_exhausted.
 *
 * Reads take a shared lock; extension takes the exclusive lock.
 */
class MembraneLayout {
 public:
  static constexpr double kQuadTol = 1e-12;

  MembraneLayout(FieldPtr field, double epsilon, double box_lo = -1e3, double box_hi = 1e3,
                 long margin = 10, double quad_tol = kQuadTol)
      : field_(std::move(field)), eps_(epsilon), box_lo_(box_lo), box_hi_(box_hi),
        margin_(margin), quad_tol_(quad_tol) {
    if (!field_) throw Error(ErrorKind::invalid_argument, "layout needs a coefficient field");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw Error(ErrorKind::invalid_argument, "epsilon must be positive");
    if (!(box_lo <= 0.0 && box_hi >= 0.0))
      throw Error(ErrorKind::invalid_argument, "spatial box must contain the origin");
    pos_.push_back(0.0);
    neg_.push_back(0.0);
  }

  double epsilon() const { return eps_; }
  double box_lo() const { return box_lo_; }
  double box_hi() const { return box_hi_; }
  const CoefficientField& field() const { return *field_; }
  FieldPtr field_ptr() const { return field_; }

  static bool same_point(double x, double a) {
    return std::abs(x - a) <= 1e-14 * (1.0 + std::abs(a));
  }

  double position(long k) const {
    {
      std::shared_lock lock(mu_);
      if (auto v = lookup(k)) return *v;
    }
    std::unique_lock lock(mu_);
    extend_to(k);
    return *lookup(k);
  }

  StripPositions strip_positions(long k) const {
    {
      std::shared_lock lock(mu_);
      auto l = lookup(k - 1), c = lookup(k), r = lookup(k + 1);
      if (l && c && r) return {*l, *c, *r};
    }
    std::unique_lock lock(mu_);
    extend_to(k - 1);
    extend_to(k + 1);
    return {*lookup(k - 1), *lookup(k), *lookup(k + 1)};
  }

  /// Neighbouring membranes of k: (a_{k-1}, a_{k+1}).
  std::pair<double, double> strip(long k) const {
    const StripPositions s = strip_positions(k);
    return {s.left, s.right};
  }

  Bracket bracketing(double x) const {
    if (!std::isfinite(x)) throw Error(ErrorKind::invalid_argument, "bracketing: non-finite x");
    std::unique_lock lock(mu_);
    if (x >= 0.0) {
      while (pos_.back() < x && !same_point(x, pos_.back())) extend_to(static_cast<long>(pos_.size()));
      // pos_ is increasing; find first entry > x.
      auto it = std::upper_bound(pos_.begin(), pos_.end(), x);
      long hi = static_cast<long>(it - pos_.begin());
      return classify(x, hi - 1);
    }
    while (neg_.back() > x && !same_point(x, neg_.back()))
      extend_to(-static_cast<long>(neg_.size()));
    // neg_ is decreasing in the stored index j (a_{-j}); find first a_{-j} <= x.
    auto it = std::lower_bound(neg_.begin(), neg_.end(), x, std::greater<double>());
    const long j = static_cast<long>(it - neg_.begin());
    const long k_lo = -j;
    return classify(x, std::min(k_lo, 0L));
  }

  /// Computed index range [k_min, k_max].
  std::pair<long, long> window() const {
    std::shared_lock lock(mu_);
    return {-static_cast<long>(neg_.size()) + 1, static_cast<long>(pos_.size()) - 1};
  }

  void export_csv(std::ostream& os, long k_lo, long k_hi) const {
    os << "k,a_k\n";
    os.precision(17);
    for (long k = k_lo; k <= k_hi; ++k) os << k << "," << position(k) << "\n";
  }

 private:
  const double* lookup_ptr(long k) const {
    if (k >= 0) return static_cast<std::size_t>(k) < pos_.size() ? &pos_[k] : nullptr;
    const auto j = static_cast<std::size_t>(-k);
    return j < neg_.size() ? &neg_[j] : nullptr;
  }
  std::optional<double> lookup(long k) const {
    const double* p = lookup_ptr(k);
    return p ? std::optional<double>(*p) : std::nullopt;
  }

  double cell_integral(long j) const {
    const double a = eps_ * static_cast<double>(j);
    const double b = eps_ * static_cast<double>(j + 1);
    const CoefficientField& f = *field_;
    return adaptive_simpson([&f](double s) { return f.density(s); }, a, b, quad_tol_);
  }

  // Caller holds the exclusive lock.
  void extend_to(long k) const {
    while (k >= static_cast<long>(pos_.size())) {
      const long j = static_cast<long>(pos_.size()) - 1;
      if (pos_.back() >= box_hi_) {
        if (hi_box_index_ < 0) hi_box_index_ = j;
        if (j + 1 > hi_box_index_ + margin_)
          throw Error(ErrorKind::window_exhausted,
                      "membrane window exhausted above x=" + std::to_string(box_hi_));
      }
      const double w = cell_integral(j);
      if (!(w > 0.0)) throw Error(ErrorKind::quadrature_failure, "non-positive membrane spacing");
      pos_.push_back(pos_.back() + w);
    }
    while (-k >= static_cast<long>(neg_.size())) {
      const long j = static_cast<long>(neg_.size()) - 1;  // current lowest is a_{-j}
      if (neg_.back() <= box_lo_) {
        if (lo_box_index_ < 0) lo_box_index_ = j;
        if (j + 1 > lo_box_index_ + margin_)
          throw Error(ErrorKind::window_exhausted,
                      "membrane window exhausted below x=" + std::to_string(box_lo_));
      }
      const double w = cell_integral(-j - 1);
      if (!(w > 0.0)) throw Error(ErrorKind::quadrature_failure, "non-positive membrane spacing");
      neg_.push_back(neg_.back() - w);
    }
  }

  // Caller holds the lock and has extended the window around x; k_lo satisfies a_{k_lo} <= x.
  Bracket classify(double x, long k_lo) const {
    extend_to(k_lo + 1);
    const double a = *lookup(k_lo);
    const double b = *lookup(k_lo + 1);
    if (same_point(x, a)) return {k_lo, k_lo, k_lo};
    if (same_point(x, b)) return {k_lo + 1, k_lo + 1, k_lo + 1};
    const long nearest = (x - a) <= (b - x) ? k_lo : k_lo + 1;
    return {k_lo, k_lo + 1, nearest};
  }

  FieldPtr field_;
  double eps_;
  double box_lo_;
  double box_hi_;
  long margin_;
  double quad_tol_;
  mutable std::shared_mutex mu_;
  mutable std::vector<double> pos_;  // a_k, k >= 0
  mutable std::vector<double> neg_;  // a_{-j}, j >= 0
  mutable long hi_box_index_ = -1;
  mutable long lo_box_index_ = -1;
};

}  // namespace semiperm
