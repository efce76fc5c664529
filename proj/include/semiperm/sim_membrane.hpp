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
#include "semiperm/rng.hpp"
#include "semiperm/transform.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace semiperm {

enum class Scheme { transformed, bernoulli };

inline const char* to_string(Scheme s) { return s == Scheme::transformed ? "transformed" : "bernoulli"; }

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "transformed") return Scheme::transformed;
  if (s == "bernoulli") return Scheme::bernoulli;
  throw Error(ErrorKind::invalid_argument, "unknown scheme '" + s + "'");
}

struct SimConfig {
  double epsilon = 0.1;
  double dt_base = 0.01;  // time step at eps = 1; dt = dt_base * eps^2
  Scheme scheme = Scheme::transformed;
  double horizon = 1.0;
  double box_lo = -1e3;  // spatial box, applied to every coordinate
  double box_hi = 1e3;
  std::uint64_t seed = 0;
  std::size_t path_count = 1000;
  double max_skew = 0.25;
  double launch_frac = 0.05;
  double record_interval = 0.0;  // 0 records every step
  bool record_events = true;
  double horizon_factor = 1e6;   // exit-time cap in units of eps^2

  double dt() const { return dt_base * epsilon * epsilon; }

  void validate() const {
    if (!(epsilon > 0.0) || !(dt_base > 0.0) || !(horizon >= 0.0) || !(box_lo < box_hi) ||
        !(launch_frac > 0.0 && launch_frac < 1.0) || !(record_interval >= 0.0))
      throw Error(ErrorKind::invalid_argument, "invalid simulation configuration");
  }
};

struct CrossingEvent {
  double time = 0.0;
  long k = 0;       // membrane reached
  Vec y;            // tangential state at the hit
  int side = 0;     // +1 when k increased
  double sojourn = 0.0;
};

struct PathSample {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<CrossingEvent> events;
  bool truncated = false;      // left the spatial box before the horizon
  std::string truncation_reason;
  std::uint64_t steps = 0;
  std::uint64_t fallback_steps = 0;

  double final_time() const { return times.empty() ? 0.0 : times.back(); }
};

struct ExitRecord {
  long start_k = 0;
  Vec start_y;
  int exit_side = 0;
  double tau = 0.0;
  double exit_x = 0.0;  // absolute abscissa, equal to a_{k +- 1}
  Vec exit_y;
  double sup_dy2 = 0.0;  // sup over the strip of |Y - y|^2
  std::uint64_t steps = 0;
  std::uint64_t fallback_steps = 0;
  std::uint32_t launches = 0;  // Bernoulli scheme only
};

/// Receives the pre-step point and Brownian increment of every step.
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_step(const Vec& point, const Vec& dW) = 0;
};

// ---------------------------------------------------------------------------
// Single steps.

/// One Euler-Maruyama step of the membrane-free SDE in offset coordinates.
inline ChartPoint plain_em_step(const CoefficientField& field, double center, double x, const Vec& y,
                                double dt, const Vec& dW) {
  const Vec p = make_point(center + x, y);
  const Vec b = field.drift(p);
  const Mat s = field.diffusion(p);
  ChartPoint out;
  double xn = x + b(0) * dt;
  for (int l = 0; l < s.cols(); ++l) xn += s(0, l) * dW(l);
  out.x = xn;
  out.y = y;
  for (int i = 0; i < y.size(); ++i) {
    double v = y(i) + b(1 + i) * dt;
    for (int l = 0; l < s.cols(); ++l) v += s(1 + i, l) * dW(l);
    out.y(i) = v;
  }
  return out;
}

struct ChartStep {
  ChartPoint state;
  bool fallback = false;
};

/*!
 * One step in the chart: map to (u, v), take an Euler-Maruyama step with
 * the transformed coefficients and map back.
 *
 * The tangential inverse is solved starting from the pre-step y shifted by
 * the increment of v, which selects the branch continuing the path. Where
 * that fails (the chart folds when eps |d theta/dy| is not small), the
 * step keeps the normal component from the chart and moves y by the plain
 * increment plus theta times the normal local-time correction.
 */
inline ChartStep em_step_strip(const StripChart& chart, double x, const Vec& y, double dt, const Vec& dW) {
  const ChartJet j = chart.jet(y, 2);
  const ChartPoint uv = StripChart::forward(x, y, j);
  const TransformedCoeffs c = chart.transformed_coeffs(x, y, j);
  const int m = static_cast<int>(c.diff_u.size());
  double un = uv.x + c.drift_u * dt;
  for (int l = 0; l < m; ++l) un += c.diff_u(l) * dW(l);
  Vec vn = uv.y;
  for (int i = 0; i < vn.size(); ++i) {
    double v = uv.y(i) + c.drift_v(i) * dt;
    for (int l = 0; l < m; ++l) v += c.diff_v(i, l) * dW(l);
    vn(i) = v;
  }
  if (vn.size() == 0) return {chart.inverse(un, vn), false};
  const Vec guess = y + (vn - uv.y);
  if (auto r = chart.try_inverse(un, vn, guess)) return {*r, false};

  const double xn = un > 0.0 ? un / j.B : un;
  const ChartPoint plain = plain_em_step(chart.field(), chart.center(), x, y, dt, dW);
  ChartStep out;
  out.fallback = true;
  out.state.x = xn;
  out.state.y = plain.y + j.theta * (xn - plain.x);
  return out;
}

// ---------------------------------------------------------------------------
// Strip runs.

namespace detail {

inline Vec draw_noise(RandomStream& rng, int m, double h) {
  Vec dW(m);
  const double sq = std::sqrt(h);
  for (int l = 0; l < m; ++l) dW(l) = sq * rng.normal();
  return dW;
}

inline double row0_variance(const CoefficientField& field, const Vec& p) {
  const Mat s = field.diffusion(p);
  return s.row(0).squaredNorm();
}

// Probability that a Brownian bridge with variance rate var over time h
// from x1 to x2 touches level a (both endpoints on the same side).
inline double bridge_hit_probability(double a, double x1, double x2, double var, double h) {
  const double prod = (a - x1) * (a - x2);
  if (prod <= 0.0) return 1.0;
  if (!(var > 0.0)) return 0.0;
  const double e = 2.0 * prod / (var * h);
  return e > 60.0 ? 0.0 : std::exp(-e);
}

// Inverse Gaussian IG(mu, lambda) by the transformation method of Michael,
// Schucany and Haas; mu = inf gives the Levy law.
inline double sample_inverse_gaussian(double mu, double lambda, RandomStream& rng) {
  const double z = rng.normal();
  const double y = z * z;
  if (!std::isfinite(mu)) return y > 0.0 ? lambda / y : std::numeric_limits<double>::max();
  const double x = mu + mu * mu * y / (2.0 * lambda) -
                   mu / (2.0 * lambda) * std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
  return rng.uniform() <= mu / (mu + x) ? x : mu * mu / x;
}

// Hitting time of level a, as a fraction of the step, for a Brownian bridge
// from x1 to x2 over time h with variance rate var, given that it hits.
// With s the hitting time, s / (h - s) is IG(alpha / gamma, alpha^2 / (var h))
// where alpha = |x1 - a| and gamma = |x2 - a|.
inline double bridge_hit_fraction(double a, double x1, double x2, double var, double h, RandomStream& rng) {
  const double alpha = std::abs(x1 - a);
  if (alpha == 0.0) return 0.0;
  if (!(var > 0.0)) return x2 != x1 ? std::clamp((a - x1) / (x2 - x1), 0.0, 1.0) : 0.0;
  const double gamma = std::abs(x2 - a);
  const double mu = gamma > 0.0 ? alpha / gamma : std::numeric_limits<double>::infinity();
  const double r = sample_inverse_gaussian(mu, alpha * alpha / (var * h), rng);
  return std::isfinite(r) ? r / (1.0 + r) : 1.0;
}

// Tangential state at fraction s of a step from (x1, y1) to (x2, y2) given
// that the normal component equals a there: the Gaussian bridge of the
// frozen-coefficient step conditioned on both endpoints and on x(s) = a.
inline Vec bridge_tangential_at(double s, double a, double x1, double x2, const Vec& y1, const Vec& y2,
                                const CoefficientField& field, const Vec& p, double h, RandomStream& rng) {
  Vec y = y1 + s * (y2 - y1);
  const int n = static_cast<int>(y.size());
  if (n == 0) return y;
  const Mat S = sigma_gram(field, p);
  const double s00 = S(0, 0);
  const double dx = a - (x1 + s * (x2 - x1));
  Mat C = S.bottomRightCorner(n, n);
  if (s00 > 0.0) {
    const Vec k = S.block(1, 0, n, 1) / s00;
    y += k * dx;
    C -= S.block(1, 0, n, 1) * S.block(0, 1, 1, n) / s00;
  }
  const double scale = std::sqrt(std::max(0.0, s * (1.0 - s) * h));
  if (scale > 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Vec z(n);
    for (int i = 0; i < n; ++i) z(i) = rng.normal();
    y += scale * (es.eigenvectors() * ev.asDiagonal() * z);
  }
  return y;
}

struct StripOutcome {
  bool exited = false;
  int side = 0;
  double time = 0.0;  // absolute time at exit or stop
  double x = 0.0;     // offset
  Vec y;
};

class Recorder {
 public:
  Recorder(PathSample* path, double interval, double center)
      : path_(path), interval_(interval), center_(center) {}
  void set_center(double c) { center_ = c; }
  void set_next(double t) { next_ = t; }
  void maybe(double t, double x, const Vec& y) {
    if (!path_) return;
    if (interval_ > 0.0 && t < next_) return;
    path_->times.push_back(t);
    path_->states.push_back(make_point(center_ + x, y));
    if (interval_ > 0.0) next_ = (std::floor(t / interval_ + 1e-9) + 1.0) * interval_;
  }

 private:
  PathSample* path_;
  double interval_;
  double center_;
  double next_ = 0.0;
};

// Steps inside the strip (left, right) (offsets from the chart center)
// from time t until exit or t_stop.
inline StripOutcome run_strip(const StripChart& chart, double left, double right, double x, Vec y, double t,
                              double t_stop, const SimConfig& cfg, RandomStream& rng, StepObserver* obs,
                              Recorder* rec, double* sup_dy2, std::uint64_t& steps,
                              std::uint64_t& fallbacks) {
  const CoefficientField& field = chart.field();
  const double dt = cfg.dt();
  const int m = field.m();
  const Vec y0 = y;
  // A plain step cannot reach the membrane from beyond this many standard deviations.
  constexpr double kNear = 6.0;
  for (;;) {
    const double h = std::min(dt, t_stop - t);
    if (!(h > 0.0)) return {false, 0, t, x, y};
    const Vec p = make_point(chart.center() + x, y);
    const double var = row0_variance(field, p);
    const Vec dW = draw_noise(rng, m, h);
    if (obs) obs->on_step(p, dW);
    ChartPoint nx;
    if (x != 0.0 && std::abs(x) > kNear * std::sqrt(var * h)) {
      nx = plain_em_step(field, chart.center(), x, y, h, dW);
      if ((nx.x > 0.0) != (x > 0.0) || nx.x == 0.0) {
        const ChartStep cs = em_step_strip(chart, x, y, h, dW);
        nx = cs.state;
        fallbacks += cs.fallback;
      }
    } else {
      const ChartStep cs = em_step_strip(chart, x, y, h, dW);
      nx = cs.state;
      fallbacks += cs.fallback;
    }
    ++steps;
    if (!std::isfinite(nx.x) || !nx.y.allFinite())
      throw Error(ErrorKind::non_convergence, "non-finite state in strip step");

    // Exit by the endpoint; time and y are drawn from the step's bridge
    // conditioned on its first passage.
    if (nx.x <= left || nx.x >= right) {
      const int side = nx.x >= right ? +1 : -1;
      const double bnd = side > 0 ? right : left;
      const double frac = bridge_hit_fraction(bnd, x, nx.x, var, h, rng);
      Vec ye = bridge_tangential_at(frac, bnd, x, nx.x, y, nx.y, field, p, h, rng);
      if (sup_dy2) *sup_dy2 = std::max(*sup_dy2, (ye - y0).squaredNorm());
      return {true, side, t + frac * h, bnd, ye};
    }
    // Exit by a bridge excursion during the step.
    const double q_right = bridge_hit_probability(right, x, nx.x, var, h);
    const double q_left = bridge_hit_probability(left, x, nx.x, var, h);
    if (q_right > 0.0 || q_left > 0.0) {
      const double u = rng.uniform();
      const double q = q_right + q_left - q_right * q_left;
      if (u < q) {
        const int side = u < q_right ? +1 : -1;
        const double bnd = side > 0 ? right : left;
        const double frac = bridge_hit_fraction(bnd, x, nx.x, var, h, rng);
        Vec ye = bridge_tangential_at(frac, bnd, x, nx.x, y, nx.y, field, p, h, rng);
        if (sup_dy2) *sup_dy2 = std::max(*sup_dy2, (ye - y0).squaredNorm());
        return {true, side, t + frac * h, bnd, ye};
      }
    }
    t += h;
    x = nx.x;
    y = nx.y;
    if (sup_dy2) *sup_dy2 = std::max(*sup_dy2, (y - y0).squaredNorm());
    if (rec) rec->maybe(t, x, y);
  }
}

}  // namespace detail

/*!
 * Starts at (a_k, y) and simulates until X leaves (a_{k-1}, a_{k+1}).
 * Uses the scheme selected in cfg.
 */
inline ExitRecord bernoulli_crossing_step(const MembraneLayout& layout, long k, const Vec& y, const SimConfig& cfg,
                                          RandomStream& rng);

inline ExitRecord sample_exit(const MembraneLayout& layout, long k, const Vec& y, const SimConfig& cfg,
                              RandomStream& rng, StepObserver* obs = nullptr) {
  if (cfg.scheme == Scheme::bernoulli) return bernoulli_crossing_step(layout, k, y, cfg, rng);
  if (y.size() != layout.field().n())
    throw Error(ErrorKind::dimension_mismatch, "sample_exit: y has the wrong dimension");
  const StripPositions sp = layout.strip_positions(k);
  const StripChart chart(layout.field_ptr(), k, sp.center, cfg.epsilon, cfg.max_skew);
  const double eps2 = cfg.epsilon * cfg.epsilon;
  const double cap = cfg.horizon_factor * eps2;
  ExitRecord rec;
  rec.start_k = k;
  rec.start_y = y;
  double sup = 0.0;
  detail::StripOutcome o = detail::run_strip(chart, sp.left - sp.center, sp.right - sp.center, 0.0, y, 0.0, cap,
                                             cfg, rng, obs, nullptr, &sup, rec.steps, rec.fallback_steps);
  if (!o.exited)
    throw Error(ErrorKind::horizon_exhausted,
                "strip exit not reached within " + std::to_string(cfg.horizon_factor) + " eps^2");
  rec.exit_side = o.side;
  rec.tau = o.time;
  rec.exit_x = o.side > 0 ? sp.right : sp.left;
  rec.exit_y = o.y;
  rec.sup_dy2 = sup;
  return rec;
}

/*!
 * Cross-check scheme: leave the membrane to the side s = +1 with
 * probability (1 + eps beta) / 2, jumping by s delta (1, theta) with
 * delta = launch_frac * eps, then follow the membrane-free SDE. A return
 * to a_k repeats the draw. Each launch is charged the mean time
 * delta^2 / Sigma^00 that the process needs to travel the launch distance.
 */
inline ExitRecord bernoulli_crossing_step(const MembraneLayout& layout, long k, const Vec& y, const SimConfig& cfg,
                                          RandomStream& rng) {
  const CoefficientField& field = layout.field();
  if (y.size() != field.n()) throw Error(ErrorKind::dimension_mismatch, "bernoulli step: wrong y dimension");
  const StripPositions sp = layout.strip_positions(k);
  const double left = sp.left - sp.center;
  const double right = sp.right - sp.center;
  const double delta = cfg.launch_frac * cfg.epsilon;
  if (!(delta < std::min(-left, right)))
    throw Error(ErrorKind::invalid_argument, "launch distance exceeds the strip");
  const double dt = cfg.dt();
  const double cap = cfg.horizon_factor * cfg.epsilon * cfg.epsilon;
  const int m = field.m();

  ExitRecord rec;
  rec.start_k = k;
  rec.start_y = y;
  Vec yc = y;
  double t = 0.0;
  double sup = 0.0;
  for (;;) {
    // Launch from the membrane.
    const Vec pm = make_point(sp.center, yc);
    const double beta = field.skew(pm);
    if (!(std::abs(cfg.epsilon * beta) <= cfg.max_skew))
      throw Error(ErrorKind::smallness_violation, "eps*|beta| exceeds max_skew in bernoulli step");
    const Vec theta = field.direction(pm);
    const int s = rng.uniform() < 0.5 * (1.0 + cfg.epsilon * beta) ? +1 : -1;
    double x = s * delta;
    yc += (s * delta) * theta;
    t += delta * delta / detail::row0_variance(field, pm);
    ++rec.launches;
    sup = std::max(sup, (yc - y).squaredNorm());

    // Free motion until the strip boundary or a return to the membrane.
    bool returned = false;
    while (!returned) {
      if (t > cap) throw Error(ErrorKind::horizon_exhausted, "bernoulli step exceeded the time cap");
      const Vec p = make_point(sp.center + x, yc);
      const double var = detail::row0_variance(field, p);
      const Vec dW = detail::draw_noise(rng, m, dt);
      const ChartPoint nx = plain_em_step(field, sp.center, x, yc, dt, dW);
      ++rec.steps;
      const double bnd = s > 0 ? right : left;
      const bool out = s > 0 ? nx.x >= right : nx.x <= left;
      const bool back = s > 0 ? nx.x <= 0.0 : nx.x >= 0.0;
      if (out || back) {
        const double target = out ? bnd : 0.0;
        const double frac = detail::bridge_hit_fraction(target, x, nx.x, var, dt, rng);
        const Vec ye = detail::bridge_tangential_at(frac, target, x, nx.x, yc, nx.y, field, p, dt, rng);
        t += frac * dt;
        sup = std::max(sup, (ye - y).squaredNorm());
        if (out) {
          rec.exit_side = s;
          rec.tau = t;
          rec.exit_x = s > 0 ? sp.right : sp.left;
          rec.exit_y = ye;
          rec.sup_dy2 = sup;
          return rec;
        }
        yc = ye;
        returned = true;
        break;
      }
      const double q_out = detail::bridge_hit_probability(bnd, x, nx.x, var, dt);
      const double q_back = detail::bridge_hit_probability(0.0, x, nx.x, var, dt);
      if (q_out > 0.0 || q_back > 0.0) {
        const double u = rng.uniform();
        const double q = q_out + q_back - q_out * q_back;
        if (u < q) {
          const double target = u < q_out ? bnd : 0.0;
          const double frac = detail::bridge_hit_fraction(target, x, nx.x, var, dt, rng);
          const Vec ye = detail::bridge_tangential_at(frac, target, x, nx.x, yc, nx.y, field, p, dt, rng);
          t += frac * dt;
          sup = std::max(sup, (ye - y).squaredNorm());
          if (u < q_out) {
            rec.exit_side = s;
            rec.tau = t;
            rec.exit_x = s > 0 ? sp.right : sp.left;
            rec.exit_y = ye;
            rec.sup_dy2 = sup;
            return rec;
          }
          yc = ye;
          returned = true;
          break;
        }
      }
      t += dt;
      x = nx.x;
      yc = nx.y;
      sup = std::max(sup, (yc - y).squaredNorm());
    }
  }
}

/*!
 * Simulates the eps-system from (x0, y0) up to time T.
 *
 * The path always runs in the chart of the membrane nearest to its start
 * and, after each strip exit, in the chart of the membrane just reached.
 */
inline PathSample simulate_path(const MembraneLayout& layout, double x0, const Vec& y0, double T,
                                const SimConfig& cfg, RandomStream& rng, StepObserver* obs = nullptr) {
  const CoefficientField& field = layout.field();
  if (y0.size() != field.n()) throw Error(ErrorKind::dimension_mismatch, "simulate_path: wrong y dimension");
  auto in_box = [&](double x, const Vec& y) {
    if (x < cfg.box_lo || x > cfg.box_hi) return false;
    for (int i = 0; i < y.size(); ++i)
      if (y(i) < cfg.box_lo || y(i) > cfg.box_hi) return false;
    return true;
  };
  if (!in_box(x0, y0)) throw Error(ErrorKind::spatial_box_exit, "start point outside the spatial box");

  PathSample path;
  const Bracket br = layout.bracketing(x0);
  long k = br.nearest;
  StripPositions sp = layout.strip_positions(k);
  detail::Recorder rec(&path, cfg.record_interval, sp.center);
  path.times.push_back(0.0);
  path.states.push_back(make_point(x0, y0));
  rec.set_next(cfg.record_interval);

  double t = 0.0;
  double x = x0 - sp.center;
  Vec y = y0;
  double last_event = 0.0;
  try {
    for (;;) {
      const StripChart chart(layout.field_ptr(), k, sp.center, cfg.epsilon, cfg.max_skew);
      rec.set_center(sp.center);
      const detail::StripOutcome o = detail::run_strip(chart, sp.left - sp.center, sp.right - sp.center, x, y, t,
                                                       T, cfg, rng, obs, &rec, nullptr, path.steps,
                                                       path.fallback_steps);
      if (!o.exited) {
        t = T;
        x = o.x;
        y = o.y;
        if (path.times.back() < T) {
          path.times.push_back(T);
          path.states.push_back(make_point(sp.center + x, y));
        }
        break;
      }
      k += o.side;
      t = o.time;
      y = o.y;
      if (cfg.record_events)
        path.events.push_back(CrossingEvent{t, k, y, o.side, t - last_event});
      last_event = t;
      sp = layout.strip_positions(k);
      x = 0.0;
      if (!in_box(sp.center, y)) {
        path.times.push_back(t);
        path.states.push_back(make_point(sp.center, y));
        path.truncated = true;
        path.truncation_reason = "spatial box exit";
        break;
      }
      if (cfg.record_interval == 0.0) {
        path.times.push_back(t);
        path.states.push_back(make_point(sp.center, y));
      }
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::window_exhausted) throw;
    path.truncated = true;
    path.truncation_reason = e.what();
  }
  return path;
}

/// Runs sample_exit for cfg.path_count independent streams.
inline std::vector<ExitRecord> sample_exits(const MembraneLayout& layout, long k, const Vec& y,
                                            const SimConfig& cfg, std::uint64_t tag = 1, unsigned threads = 0) {
  return parallel_map<ExitRecord>(
      cfg.path_count,
      [&](std::size_t i) {
        RandomStream rng(cfg.seed, stream_id(tag, i));
        return sample_exit(layout, k, y, cfg, rng);
      },
      threads);
}

}  // namespace semiperm
