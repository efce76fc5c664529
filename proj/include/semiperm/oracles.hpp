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

#include "semiperm/membranes.hpp"
#include "semiperm/parallel.hpp"
#include "semiperm/sim_limit.hpp"
#include "semiperm/sim_membrane.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace semiperm {

struct ExitProbabilities {
  double p_minus = 0.5;
  double p_plus = 0.5;
};

namespace detail {

inline void check_exit_domain(double a_minus, double a_plus, double drift, double variance) {
  if (!(a_minus > 0.0) || !(a_plus > 0.0) || !(variance > 0.0) || !std::isfinite(a_minus) ||
      !std::isfinite(a_plus) || !std::isfinite(variance) || !std::isfinite(drift))
    throw Error(ErrorKind::invalid_argument, "exit oracle: a_minus, a_plus, variance must be positive and finite");
}

}  // namespace detail

/*!
 * Exit law of R_t = drift t + sqrt(variance) W_t started at 0 from
 * (-a_minus, a_plus). With kappa = 2 drift / variance,
 *   p_plus = (e^{kappa a_minus} - 1) / (e^{kappa a_minus} - e^{-kappa a_plus}).
 */
inline ExitProbabilities bm_exit_prob(double a_minus, double a_plus, double drift, double variance) {
  detail::check_exit_domain(a_minus, a_plus, drift, variance);
  const double kappa = 2.0 * drift / variance;
  const double s = a_minus + a_plus;
  double p;
  if (std::abs(kappa * s) < 1e-8) {
    const double am = a_minus, ap = a_plus;
    const double k2 = kappa * kappa;
    p = am / s + kappa * am * ap / (2.0 * s) - k2 * am * ap * (am - ap) / (12.0 * s) -
        k2 * kappa * am * am * ap * ap / (24.0 * s) +
        k2 * k2 * am * ap * (am - ap) * (am * am + 5.0 * am * ap + ap * ap) / (720.0 * s);
  } else if (kappa > 0.0) {
    p = std::expm1(-kappa * a_minus) / std::expm1(-kappa * s);
  } else {
    p = (std::expm1(kappa * s) - std::expm1(kappa * a_plus)) / std::expm1(kappa * s);
  }
  p = std::clamp(p, 0.0, 1.0);
  return {1.0 - p, p};
}

/// Mean exit time of the same process; Wald form for drift != 0.
inline double bm_exit_time(double a_minus, double a_plus, double drift, double variance) {
  detail::check_exit_domain(a_minus, a_plus, drift, variance);
  if (drift == 0.0) return a_minus * a_plus / variance;
  const double kappa = 2.0 * drift / variance;
  const double s = a_minus + a_plus;
  if (std::abs(kappa * s) < 1e-8) {
    const double am = a_minus, ap = a_plus;
    return am * ap / variance - kappa * am * ap * (am - ap) / (6.0 * variance) -
           kappa * kappa * am * am * ap * ap / (12.0 * variance) +
           kappa * kappa * kappa * am * ap * (am - ap) * (am * am + 5.0 * am * ap + ap * ap) / (360.0 * variance);
  }
  if (drift < 0.0) return bm_exit_time(a_plus, a_minus, -drift, variance);
  // Wald form (a+ p+ - a- p-) / drift rewritten without cancellation:
  // with phi(z) = z - 1 + e^{-z} it equals (a- phi(k s) - s phi(k a-)) / ((1 - e^{-k s}) drift).
  auto phi = [](double z) {
    if (z < 1e-2) return z * z * (0.5 - z * (1.0 / 6 - z * (1.0 / 24 - z * (1.0 / 120 - z * (1.0 / 720 - z / 5040)))));
    return z + std::expm1(-z);
  };
  return (a_minus * phi(kappa * s) - s * phi(kappa * a_minus)) / (-std::expm1(-kappa * s) * drift);
}

// ---------------------------------------------------------------------------
// Exit moments.

/// Exit statistics of one strip crossing. X is the offset X_tau - a_k.
struct ExitMoments {
  double p_plus = 0.5;
  double p_minus = 0.5;
  double mean_X = 0.0;
  double mean_X2 = 0.0;
  double mean_tau = 0.0;
  Vec mean_dY;     // n
  Mat cov_YY;      // n x n, E (Y - y)(Y - y)^T
  Vec cross_XY;    // n, E X (Y - y)
  std::size_t samples = 0;  // 0 for analytic predictions
};

/// Standard errors for the MC version of every entry of ExitMoments.
struct ExitMomentErrors {
  double p_plus = 0.0;
  double mean_X = 0.0;
  double mean_X2 = 0.0;
  double mean_tau = 0.0;
  Vec mean_dY;
  Mat cov_YY;
  Vec cross_XY;
};

struct ExitMomentEstimate {
  ExitMoments value;
  ExitMomentErrors se;
};

/*!
 * Leading-order exit moments at membrane k:
 *   p_pm = 1/2 +- 1/2 (b0 d / S00 + beta - d' / (2 d)) eps
 *   E X = (beta d + b0 d^2 / S00) eps^2,  E X^2 = d^2 eps^2,  E tau = d^2 eps^2 / S00
 *   E (Y - y) = (b + theta beta S00 / d) E tau,  cov = S_yy E tau,  cross = S_0y E tau.
 * Coefficients are frozen at (a_k, y); d and d' are taken at eps k, the
 * argument whose integral defines the layout, which is 0 for k = 0.
 */
inline ExitMoments asymptotic_exit_moments(const MembraneLayout& layout, long k, const Vec& y, double max_skew = 0.25) {
  const CoefficientField& f = layout.field();
  if (y.size() != f.n()) throw Error(ErrorKind::dimension_mismatch, "asymptotic_exit_moments: wrong y dimension");
  const double eps = layout.epsilon();
  const Vec p = make_point(layout.position(k), y);
  const double beta = f.skew(p);
  if (!(std::abs(eps * beta) <= max_skew))
    throw Error(ErrorKind::smallness_violation, "eps*|beta| exceeds the smallness bound");
  const Vec b = f.drift(p);
  const Mat S = sigma_gram(f, p);
  const Vec theta = f.direction(p);
  const double s00 = S(0, 0);
  const double d = f.density(eps * static_cast<double>(k));
  const double dp = f.density_slope(eps * static_cast<double>(k));
  const int n = f.n();

  ExitMoments m;
  const double shift = 0.5 * (b(0) * d / s00 + beta - dp / (2.0 * d)) * eps;
  m.p_plus = 0.5 + shift;
  m.p_minus = 0.5 - shift;
  m.mean_X = (beta * d + b(0) * d * d / s00) * eps * eps;
  m.mean_X2 = d * d * eps * eps;
  m.mean_tau = d * d * eps * eps / s00;
  m.mean_dY = Vec::Zero(n);
  m.cov_YY = Mat::Zero(n, n);
  m.cross_XY = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    m.mean_dY(i) = (b(1 + i) + theta(i) * beta * s00 / d) * m.mean_tau;
    m.cross_XY(i) = S(0, 1 + i) * m.mean_tau;
    for (int j = 0; j < n; ++j) m.cov_YY(i, j) = S(1 + i, 1 + j) * m.mean_tau;
  }
  return m;
}

/// MC estimate of ExitMoments from exit records started at membrane k.
inline ExitMomentEstimate estimate_exit_moments(const std::vector<ExitRecord>& recs, double a_k) {
  const std::size_t N = recs.size();
  if (N < 2) throw Error(ErrorKind::too_few_samples, "need at least two exit records");
  const int n = static_cast<int>(recs.front().start_y.size());
  auto mean_se = [N](auto&& get, double& mean, double& se) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += get(i);
    mean = s / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double d = get(i) - mean;
      s2 += d * d;
    }
    se = std::sqrt(s2 / static_cast<double>(N - 1) / static_cast<double>(N));
  };
  ExitMomentEstimate out;
  ExitMoments& v = out.value;
  ExitMomentErrors& e = out.se;
  v.samples = N;
  mean_se([&](std::size_t i) { return recs[i].exit_side > 0 ? 1.0 : 0.0; }, v.p_plus, e.p_plus);
  v.p_minus = 1.0 - v.p_plus;
  mean_se([&](std::size_t i) { return recs[i].exit_x - a_k; }, v.mean_X, e.mean_X);
  mean_se([&](std::size_t i) { const double x = recs[i].exit_x - a_k; return x * x; }, v.mean_X2, e.mean_X2);
  mean_se([&](std::size_t i) { return recs[i].tau; }, v.mean_tau, e.mean_tau);
  v.mean_dY = Vec::Zero(n);
  v.cov_YY = Mat::Zero(n, n);
  v.cross_XY = Vec::Zero(n);
  e.mean_dY = Vec::Zero(n);
  e.cov_YY = Mat::Zero(n, n);
  e.cross_XY = Vec::Zero(n);
  for (int a = 0; a < n; ++a) {
    auto dy = [&](std::size_t i, int c) { return recs[i].exit_y(c) - recs[i].start_y(c); };
    mean_se([&](std::size_t i) { return dy(i, a); }, v.mean_dY(a), e.mean_dY(a));
    mean_se([&](std::size_t i) { return (recs[i].exit_x - a_k) * dy(i, a); }, v.cross_XY(a), e.cross_XY(a));
    for (int b = 0; b < n; ++b)
      mean_se([&](std::size_t i) { return dy(i, a) * dy(i, b); }, v.cov_YY(a, b), e.cov_YY(a, b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-generator.

struct RatioEstimate {
  double value = 0.0;
  double se = 0.0;
  double ci = 0.0;  // half-width at the requested level
  double numerator = 0.0;
  double denominator = 0.0;
};

/// Delta-method estimate of E A / E T from paired samples.
inline RatioEstimate ratio_estimate(const std::vector<double>& A, const std::vector<double>& T, double level = 0.95) {
  const std::size_t N = A.size();
  if (N < 2 || T.size() != N) throw Error(ErrorKind::too_few_samples, "ratio estimate needs paired samples");
  double ma = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    ma += A[i];
    mt += T[i];
  }
  ma /= static_cast<double>(N);
  mt /= static_cast<double>(N);
  if (mt == 0.0) throw Error(ErrorKind::invalid_argument, "ratio estimate with zero denominator");
  const double r = ma / mt;
  double v = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double z = (A[i] - ma) - r * (T[i] - mt);
    v += z * z;
  }
  v /= static_cast<double>(N - 1);
  RatioEstimate out;
  out.value = r;
  out.se = std::sqrt(v / static_cast<double>(N)) / std::abs(mt);
  const boost::math::normal_distribution<double> nd;
  out.ci = boost::math::quantile(nd, 0.5 + 0.5 * level) * out.se;
  out.numerator = ma;
  out.denominator = mt;
  return out;
}

namespace detail {

// Accumulates sum grad f(p) . sigma(p) dW, a martingale with mean zero.
class GradientMartingale final : public StepObserver {
 public:
  GradientMartingale(const CoefficientField& field, const TestFunction& f) : field_(field), f_(f) {}
  void on_step(const Vec& p, const Vec& dW) override {
    const Vec g = f_.gradient(p);
    sum_ += g.dot(field_.diffusion(p) * dW);
  }
  double sum() const { return sum_; }

 private:
  const CoefficientField& field_;
  const TestFunction& f_;
  double sum_ = 0.0;
};

}  // namespace detail

/*!
 * L^eps f = (E f(Z_tau) - f(z)) / E tau over one strip crossing from
 * (a_k, y), estimated from cfg.path_count draws of sample_exit.
 *
 * With control_variate set, each numerator sample has the mean-zero sum
 * of grad f . sigma dW along its path subtracted.
 */
inline RatioEstimate pseudo_generator_estimate(const MembraneLayout& layout, const TestFunction& f, long k,
                                               const Vec& y, const SimConfig& cfg, bool control_variate = true,
                                               std::uint64_t tag = 7, double level = 0.95) {
  const CoefficientField& field = layout.field();
  const Vec z = make_point(layout.position(k), y);
  const double f0 = f.value(z);
  const std::size_t N = cfg.path_count;
  std::vector<double> A(N), T(N);
  const bool cv = control_variate && cfg.scheme == Scheme::transformed;
  parallel_for(N, [&](std::size_t i) {
    RandomStream rng(cfg.seed, stream_id(tag, i));
    detail::GradientMartingale mart(field, f);
    const ExitRecord r = sample_exit(layout, k, y, cfg, rng, cv ? &mart : nullptr);
    A[i] = f.value(make_point(r.exit_x, r.exit_y)) - f0 - (cv ? mart.sum() : 0.0);
    T[i] = r.tau;
  });
  return ratio_estimate(A, T, level);
}

}  // namespace semiperm
