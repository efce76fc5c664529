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
#include "semiperm/sim_membrane.hpp"

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

namespace semiperm {

struct MeanCI {
  double mean = 0.0;
  double half_width = 0.0;
  double se = 0.0;
};

/// Sample mean with a normal-approximation confidence interval.
inline MeanCI mc_mean_ci(const std::vector<double>& xs, double level = 0.95) {
  if (xs.size() < 2) throw Error(ErrorKind::too_few_samples, "mc_mean_ci needs at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::invalid_argument, "confidence level must be in (0, 1)");
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  MeanCI out;
  out.mean = mean;
  out.se = std::sqrt(ss / (n - 1.0) / n);
  const boost::math::normal_distribution<double> nd;
  out.half_width = boost::math::quantile(nd, 0.5 + 0.5 * level) * out.se;
  return out;
}

/// sup |F_n - F| against an analytic CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw Error(ErrorKind::too_few_samples, "ks_statistic needs a sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

/// Two-sample sup distance between empirical CDFs, by a merged scan.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::too_few_samples, "ks_statistic needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS residual in log space
  std::vector<std::pair<double, double>> points;

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [e, r] : points) pts.push_back({e, r});
    return {{"slope", slope}, {"intercept", intercept}, {"residual", residual}, {"points", pts}};
  }
};

/// Least squares of log(error) on log(eps).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw Error(ErrorKind::too_few_samples, "fit_rate needs at least three points");
  for (const auto& [e, r] : points)
    if (!(e > 0.0) || !(r > 0.0) || !std::isfinite(r))
      throw Error(ErrorKind::invalid_argument, "fit_rate needs positive eps and error values");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [e, r] : points) {
    mx += std::log(e);
    my += std::log(r);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [e, r] : points) {
    sxx += (std::log(e) - mx) * (std::log(e) - mx);
    sxy += (std::log(e) - mx) * (std::log(r) - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::invalid_argument, "fit_rate needs distinct eps values");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (const auto& [e, r] : points) {
    const double res = std::log(r) - fit.intercept - fit.slope * std::log(e);
    rss += res * res;
  }
  fit.residual = std::sqrt(rss / n);
  fit.points = points;
  return fit;
}

/// Least-squares slope of y = c x through the origin, with its standard error from per-point SEs.
inline std::pair<double, double> slope_through_origin(const std::vector<double>& x, const std::vector<double>& y,
                                                      const std::vector<double>& se) {
  double sxx = 0.0, sxy = 0.0, var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) var += x[i] * x[i] * se[i] * se[i];
  return {sxy / sxx, std::sqrt(var) / sxx};
}

/// Number of membrane crossings up to time T.
inline std::size_t crossing_count(const PathSample& path, double T) {
  return static_cast<std::size_t>(std::count_if(path.events.begin(), path.events.end(),
                                                [T](const CrossingEvent& e) { return e.time <= T; }));
}

struct LocalTimeEstimate {
  double value = 0.0;
  bool resolution_warning = false;
};

/// (1 / 2 delta) sum_j I(|X_j - a| <= delta) Sigma^00(Z_j) (t_{j+1} - t_j).
inline LocalTimeEstimate local_time_estimate(const PathSample& path, double a, double delta,
                                             const CoefficientField& field) {
  if (!(delta > 0.0)) throw Error(ErrorKind::invalid_argument, "local_time_estimate: delta must be positive");
  LocalTimeEstimate out;
  double s = 0.0, max_dt = 0.0, max_var = 0.0;
  for (std::size_t j = 0; j + 1 < path.times.size(); ++j) {
    const double h = path.times[j + 1] - path.times[j];
    max_dt = std::max(max_dt, h);
    const Vec& p = path.states[j];
    if (std::abs(p(0) - a) > delta) continue;
    const double v = field.diffusion(p).row(0).squaredNorm();
    max_var = std::max(max_var, v);
    s += v * h;
  }
  if (max_var == 0.0 && !path.states.empty()) max_var = field.diffusion(path.states.front()).row(0).squaredNorm();
  out.value = s / (2.0 * delta);
  out.resolution_warning = max_var > 0.0 && max_dt > delta * delta / (10.0 * max_var);
  return out;
}

/// |X_T - a| - |X_0 - a| - sum sgn(X_j - a) (X_{j+1} - X_j); the discrete Tanaka remainder.
inline double tanaka_local_time(const PathSample& path, double a) {
  if (path.states.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < path.states.size(); ++j) {
    const double x = path.states[j](0) - a;
    const double sg = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    s += sg * (path.states[j + 1](0) - path.states[j](0));
  }
  return std::abs(path.states.back()(0) - a) - std::abs(path.states.front()(0) - a) - s;
}

struct WindingAngle {
  double angle = 0.0;             // radians, counterclockwise positive
  double skipped_fraction = 0.0;  // share of segments with an endpoint near the origin
};

/// Sum of atan2 increments along a planar polyline.
inline WindingAngle winding_angle(const PathSample& path, double min_radius = 1e-3) {
  WindingAngle out;
  if (path.states.size() < 2) return out;
  if (path.states.front().size() != 2) throw Error(ErrorKind::dimension_mismatch, "winding_angle needs planar paths");
  std::size_t skipped = 0, usable_points = 0;
  for (const Vec& p : path.states) usable_points += p.norm() >= min_radius;
  if (usable_points == 0) throw Error(ErrorKind::invalid_argument, "winding_angle: path stays at the origin");
  const std::size_t segs = path.states.size() - 1;
  for (std::size_t j = 0; j < segs; ++j) {
    const Vec& p = path.states[j];
    const Vec& q = path.states[j + 1];
    if (p.norm() < min_radius || q.norm() < min_radius) {
      ++skipped;
      continue;
    }
    out.angle += std::atan2(p(0) * q(1) - p(1) * q(0), p(0) * q(0) + p(1) * q(1));
  }
  out.skipped_fraction = static_cast<double>(skipped) / static_cast<double>(segs);
  return out;
}

/// Two-sided sign-test p-value for the count of positives among n nonzero values.
inline double sign_test_p_value(std::size_t positives, std::size_t n) {
  if (n == 0) return 1.0;
  // Exact binomial tail in log space.
  const std::size_t k = std::min(positives, n - positives);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    tail += std::exp(lc - static_cast<double>(n) * std::numbers::ln2);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace semiperm
