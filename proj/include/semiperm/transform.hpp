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

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>

namespace semiperm {

/// B, beta and theta at a membrane point with the y-derivatives used by the
/// transformed coefficients.
struct ChartJet {
  double skew = 0.0;  // eps * beta
  double B = 1.0;
  Vec grad_B;         // n
  Mat hess_B;         // n x n
  Vec theta;          // n
  Mat jac_theta;      // n x n
  std::array<Mat, kMaxDim> hess_theta;
};

struct TransformedCoeffs {
  double drift_u = 0.0;
  Vec drift_v;  // n
  Vec diff_u;   // m
  Mat diff_v;   // n x m

  // Corrections relative to the untransformed coefficients.
  double phi0 = 0.0;
  Vec phi;    // m
  Vec psi;    // n
  Mat psi_l;  // n x m
};

struct ChartPoint {
  double x = 0.0;  // offset from the chart center
  Vec y;
};

/*!
 * Coordinates (u, v) = (F(x, y), G(x, y)) around membrane a_k, with x the
 * offset from a_k:
 *
 *   F(x, y) = x + x^+ (B(y) - 1),   B(y) = (1 - eps beta) / (1 + eps beta),
 *   G(x, y) = y - x theta(y),
 *
 * where beta and theta are evaluated at (a_k, y). In these coordinates the
 * local-time term disappears and the process solves an ordinary SDE with
 * coefficients that jump across u = 0.
 */
class StripChart {
 public:
  static constexpr double kNewtonTol = 1e-12;
  static constexpr int kNewtonMaxIter = 50;

  StripChart(FieldPtr field, long center_k, double center, double epsilon, double max_skew = 0.25)
      : field_(std::move(field)), k_(center_k), center_(center), eps_(epsilon), max_skew_(max_skew) {
    if (!field_) throw Error(ErrorKind::invalid_argument, "chart needs a coefficient field");
    if (!(epsilon > 0.0)) throw Error(ErrorKind::invalid_argument, "epsilon must be positive");
    if (!(max_skew > 0.0 && max_skew < 1.0))
      throw Error(ErrorKind::invalid_argument, "max_skew must lie in (0, 1)");
    n_ = field_->n();
    if (field_->skew_independent_of_y()) cached_ = make_jet(Vec::Zero(n_), 2);
  }

  long center_k() const { return k_; }
  double center() const { return center_; }
  double epsilon() const { return eps_; }
  double max_skew() const { return max_skew_; }
  const CoefficientField& field() const { return *field_; }

  ChartJet jet(const Vec& y, int order = 2) const {
    if (cached_) return *cached_;
    return make_jet(y, order);
  }

  double b_factor(const Vec& y) const { return jet(y, 0).B; }

  ChartPoint forward(double x, const Vec& y) const { return forward(x, y, jet(y, 0)); }

  static ChartPoint forward(double x, const Vec& y, const ChartJet& j) {
    ChartPoint out;
    out.x = x > 0.0 ? x * j.B : x;
    out.y = x == 0.0 ? y : Vec(y - x * j.theta);
    return out;
  }

  /// Inverse map; u <= 0 uses the left branch. Newton starts from v + theta(v) u.
  ChartPoint inverse(double u, const Vec& v) const {
    if (u == 0.0 || n_ == 0 || cached_) return inverse_explicit(u, v);
    const Vec psi0 = v + make_jet(v, 0).theta * u;
    if (auto r = try_inverse(u, v, psi0)) return *r;
    throw Error(ErrorKind::non_convergence,
                "chart inverse did not converge at k=" + std::to_string(k_) + ", u=" + std::to_string(u));
  }

  /// Newton solve for the tangential preimage starting from psi0; empty on failure.
  std::optional<ChartPoint> try_inverse(double u, const Vec& v, const Vec& psi0) const {
    if (u == 0.0 || n_ == 0 || cached_) return inverse_explicit(u, v);
    const bool right = u > 0.0;
    constexpr double kBad = std::numeric_limits<double>::infinity();
    auto residual = [&](const Vec& psi, ChartJet& j, Vec& r) {
      if (!try_jet(psi, 1, j)) return kBad;
      r = right ? Vec(psi - (j.theta / j.B) * u - v) : Vec(psi - j.theta * u - v);
      return r.lpNorm<Eigen::Infinity>();
    };
    Vec psi = psi0;
    ChartJet j;
    Vec r;
    double rn = residual(psi, j, r);
    if (!std::isfinite(rn)) return std::nullopt;
    const double tol = kNewtonTol * (1.0 + v.lpNorm<Eigen::Infinity>());
    for (int it = 0; it <= kNewtonMaxIter; ++it) {
      if (rn <= tol) return ChartPoint{right ? u / j.B : u, psi};
      if (it == kNewtonMaxIter) break;
      Mat dc = j.jac_theta;
      if (right) dc = j.jac_theta / j.B - j.theta * j.grad_B.transpose() / (j.B * j.B);
      const Mat jac = Mat::Identity(n_, n_) - u * dc;
      const Vec step = jac.partialPivLu().solve(r);
      if (!step.allFinite()) return std::nullopt;
      double lambda = 1.0;
      ChartJet jt;
      Vec rt;
      Vec trial = psi - step;
      double rtn = residual(trial, jt, rt);
      while (!(rtn < rn) && lambda > 1e-4) {
        lambda *= 0.5;
        trial = psi - lambda * step;
        rtn = residual(trial, jt, rt);
      }
      if (!std::isfinite(rtn)) return std::nullopt;
      psi = trial;
      r = rt;
      j = jt;
      rn = rtn;
    }
    return std::nullopt;
  }

  TransformedCoeffs transformed_coeffs(double x, const Vec& y) const {
    return transformed_coeffs(x, y, jet(y, 2));
  }

  TransformedCoeffs transformed_coeffs(double x, const Vec& y, const ChartJet& j) const {
    const Vec p = make_point(center_ + x, y);
    const Vec b = field_->drift(p);
    const Mat s = field_->diffusion(p);
    const int m = static_cast<int>(s.cols());
    const bool ind = x > 0.0;
    const double xp = ind ? x : 0.0;

    TransformedCoeffs c;
    c.phi = Vec::Zero(m);
    c.psi = Vec::Zero(n_);
    c.psi_l = Mat::Zero(n_, m);
    c.diff_u.resize(m);
    c.drift_v.resize(n_);
    c.diff_v.resize(n_, m);

    if (n_ > 0) {
      const Mat gram = s * s.transpose();
      double phi0 = ind ? (j.B - 1.0) * b(0) : 0.0;
      for (int i = 0; i < n_; ++i) phi0 += j.grad_B(i) * (xp * b(1 + i) + (ind ? gram(0, 1 + i) : 0.0));
      if (xp > 0.0) {
        double q = 0.0;
        for (int i = 0; i < n_; ++i)
          for (int k = 0; k < n_; ++k) q += j.hess_B(i, k) * gram(1 + i, 1 + k);
        phi0 += 0.5 * xp * q;
      }
      c.phi0 = phi0;
      for (int l = 0; l < m; ++l) {
        double v = ind ? (j.B - 1.0) * s(0, l) : 0.0;
        for (int i = 0; i < n_; ++i) v += xp * j.grad_B(i) * s(1 + i, l);
        c.phi(l) = v;
      }
      for (int i = 0; i < n_; ++i) {
        double ps = 0.0;
        double cross = 0.0;
        for (int k = 0; k < n_; ++k) {
          ps -= x * j.jac_theta(i, k) * b(1 + k);
          cross += j.jac_theta(i, k) * gram(0, 1 + k);
          for (int q = 0; q < n_; ++q) ps -= 0.5 * x * j.hess_theta[i](k, q) * gram(1 + k, 1 + q);
        }
        c.psi(i) = ps;
        for (int l = 0; l < m; ++l) {
          double pl = 0.0;
          for (int k = 0; k < n_; ++k) pl -= x * j.jac_theta(i, k) * s(1 + k, l);
          c.psi_l(i, l) = pl;
        }
        c.drift_v(i) = b(1 + i) - j.theta(i) * b(0) - cross + c.psi(i);
        for (int l = 0; l < m; ++l) c.diff_v(i, l) = s(1 + i, l) - j.theta(i) * s(0, l) + c.psi_l(i, l);
      }
    } else {
      c.phi0 = ind ? (j.B - 1.0) * b(0) : 0.0;
      for (int l = 0; l < m; ++l) c.phi(l) = ind ? (j.B - 1.0) * s(0, l) : 0.0;
    }
    c.drift_u = b(0) + c.phi0;
    for (int l = 0; l < m; ++l) c.diff_u(l) = s(0, l) + c.phi(l);
    return c;
  }

  /// Writes forward images of a (x, y) grid as CSV rows x,y...,u,v...
  void dump_grid(std::ostream& os, double x_lo, double x_hi, int nx, const Vec& y) const {
    os.precision(17);
    for (int i = 0; i < nx; ++i) {
      const double x = nx == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (nx - 1);
      const ChartPoint q = forward(x, y);
      os << x;
      for (int a = 0; a < y.size(); ++a) os << "," << y(a);
      os << "," << q.x;
      for (int a = 0; a < q.y.size(); ++a) os << "," << q.y(a);
      os << "\n";
    }
  }

 private:
  // Inverse when theta is constant in y (or absent): no iteration needed.
  ChartPoint inverse_explicit(double u, const Vec& v) const {
    if (u == 0.0) return {0.0, v};
    const ChartJet j = jet(v, 0);
    const double x = u > 0.0 ? u / j.B : u;
    return {x, n_ == 0 ? v : Vec(v + x * j.theta)};
  }

  bool try_jet(const Vec& y, int order, ChartJet& out) const {
    if (!y.allFinite()) return false;
    const MembraneJet mj = field_->membrane_jet(center_, y, order);
    if (!(std::abs(eps_ * mj.beta) <= max_skew_)) return false;
    out = from_membrane_jet(mj);
    return true;
  }

  ChartJet make_jet(const Vec& y, int order) const {
    const MembraneJet mj = field_->membrane_jet(center_, y, order);
    const double s = eps_ * mj.beta;
    if (!(std::abs(s) <= max_skew_))
      throw Error(ErrorKind::smallness_violation,
                  "eps*|beta| = " + std::to_string(std::abs(s)) + " exceeds " + std::to_string(max_skew_) +
                      " at membrane " + std::to_string(k_));
    return from_membrane_jet(mj);
  }

  ChartJet from_membrane_jet(const MembraneJet& mj) const {
    ChartJet j;
    const double s = eps_ * mj.beta;
    j.skew = s;
    j.B = (1.0 - s) / (1.0 + s);
    const double g1 = -2.0 / ((1.0 + s) * (1.0 + s));
    const double g2 = 4.0 / ((1.0 + s) * (1.0 + s) * (1.0 + s));
    j.grad_B = g1 * eps_ * mj.grad_beta;
    j.hess_B = g2 * eps_ * eps_ * mj.grad_beta * mj.grad_beta.transpose() + g1 * eps_ * mj.hess_beta;
    j.theta = mj.theta;
    j.jac_theta = mj.jac_theta;
    j.hess_theta = mj.hess_theta;
    return j;
  }

  FieldPtr field_;
  long k_;
  double center_;
  double eps_;
  double max_skew_;
  int n_ = 0;
  std::optional<ChartJet> cached_;
};

}  // namespace semiperm
