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
#include "semiperm/rng.hpp"
#include "semiperm/sim_membrane.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace semiperm {

/// Drift of the homogenized SDE split into the original and the interface-induced part.
struct LimitDrift {
  Vec base;
  Vec induced;

  Vec total() const { return base + induced; }
};

/// beta Sigma^00 / d (1, theta) at p.
inline Vec interface_drift(const CoefficientField& field, const Vec& p) {
  const double d = field.density(p(0));
  if (!(d > 0.0)) throw Error(ErrorKind::assumption_failure, "interface_drift: density must be positive");
  const Mat s = field.diffusion(p);
  const double c = field.skew(p) * s.row(0).squaredNorm() / d;
  Vec out(field.dim());
  out(0) = c;
  if (field.n() > 0) out.tail(field.n()) = c * field.direction(p);
  return out;
}

inline LimitDrift limit_drift(const CoefficientField& field, const Vec& p) {
  return {field.drift(p), interface_drift(field, p)};
}

// ---------------------------------------------------------------------------
// Test functions.

class TestFunction {
 public:
  virtual ~TestFunction() = default;
  virtual std::string name() const = 0;
  virtual double value(const Vec& p) const = 0;
  virtual Vec gradient(const Vec& p) const = 0;
  virtual Mat hessian(const Vec& p) const = 0;
};

using TestFunctionPtr = std::shared_ptr<const TestFunction>;

/// prod_i p_i^{e_i} with total degree at most 3.
class Monomial final : public TestFunction {
 public:
  explicit Monomial(std::vector<int> exponents) : e_(std::move(exponents)) {
    int deg = 0;
    for (int v : e_) {
      if (v < 0) throw Error(ErrorKind::invalid_argument, "monomial exponents must be non-negative");
      deg += v;
    }
    if (deg > 3) throw Error(ErrorKind::invalid_argument, "monomial degree must be at most 3");
  }

  std::string name() const override {
    static const char* names[] = {"x", "y", "y2", "y3"};
    std::string s;
    for (std::size_t i = 0; i < e_.size(); ++i) {
      if (e_[i] == 0) continue;
      if (!s.empty()) s += "*";
      s += i < 4 ? names[i] : "p" + std::to_string(i);
      if (e_[i] > 1) s += "^" + std::to_string(e_[i]);
    }
    return s.empty() ? "1" : s;
  }

  double value(const Vec& p) const override {
    check(p);
    double v = 1.0;
    for (std::size_t i = 0; i < e_.size(); ++i) v *= std::pow(p(i), e_[i]);
    return v;
  }

  Vec gradient(const Vec& p) const override {
    check(p);
    Vec g = Vec::Zero(p.size());
    for (std::size_t i = 0; i < e_.size(); ++i) g(i) = partial(p, static_cast<int>(i), -1);
    return g;
  }

  Mat hessian(const Vec& p) const override {
    check(p);
    Mat h = Mat::Zero(p.size(), p.size());
    for (int i = 0; i < static_cast<int>(e_.size()); ++i)
      for (int j = 0; j < static_cast<int>(e_.size()); ++j) h(i, j) = partial(p, i, j);
    return h;
  }

 private:
  void check(const Vec& p) const {
    if (p.size() != static_cast<Eigen::Index>(e_.size()))
      throw Error(ErrorKind::dimension_mismatch, "monomial evaluated at a point of the wrong dimension");
  }

  // d/dp_i (and d/dp_j when j >= 0) of the monomial.
  double partial(const Vec& p, int i, int j) const {
    std::vector<int> e = e_;
    double c = 1.0;
    for (int a : {i, j}) {
      if (a < 0) continue;
      if (e[a] == 0) return 0.0;
      c *= e[a];
      --e[a];
    }
    for (std::size_t k = 0; k < e.size(); ++k) c *= std::pow(p(k), e[k]);
    return c;
  }

  std::vector<int> e_;
};

/// Arbitrary smooth function with central-difference derivatives.
class NumericTestFunction : public TestFunction {
 public:
  NumericTestFunction(std::string name, std::function<double(const Vec&)> f, double h = 1e-4)
      : name_(std::move(name)), f_(std::move(f)), h_(h) {}

  std::string name() const override { return name_; }
  double value(const Vec& p) const override { return f_(p); }

  Vec gradient(const Vec& p) const override {
    Vec g(p.size());
    for (int i = 0; i < p.size(); ++i) {
      Vec a = p, b = p;
      a(i) += h_;
      b(i) -= h_;
      g(i) = (f_(a) - f_(b)) / (2.0 * h_);
    }
    return g;
  }

  Mat hessian(const Vec& p) const override {
    const int n = static_cast<int>(p.size());
    Mat H(n, n);
    const double f0 = f_(p);
    for (int i = 0; i < n; ++i) {
      Vec a = p, b = p;
      a(i) += h_;
      b(i) -= h_;
      H(i, i) = (f_(a) - 2.0 * f0 + f_(b)) / (h_ * h_);
      for (int j = i + 1; j < n; ++j) {
        Vec pp = p, pm = p, mp = p, mm = p;
        pp(i) += h_; pp(j) += h_;
        pm(i) += h_; pm(j) -= h_;
        mp(i) -= h_; mp(j) += h_;
        mm(i) -= h_; mm(j) -= h_;
        H(i, j) = H(j, i) = (f_(pp) - f_(pm) - f_(mp) + f_(mm)) / (4.0 * h_ * h_);
      }
    }
    return H;
  }

 private:
  std::string name_;
  std::function<double(const Vec&)> f_;
  double h_;
};

/// Smooth bump exp(1 - 1 / (1 - |p - c|^2 / r^2)) supported on the ball B(c, r).
inline TestFunctionPtr make_bump(const Vec& center, double radius) {
  return std::make_shared<NumericTestFunction>("bump", [center, radius](const Vec& p) {
    const double q = (p - center).squaredNorm() / (radius * radius);
    return q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
  });
}

/*!
 * Parses a test-function name for state dimension dim: "1", "x", "x2",
 * "x3", "y", "y2", "xy", "x2y", "xy2", "y3", "y1", "y1y2", ... ("y" means
 * y1). "bump" is centered at the origin with radius 1.
 */
inline TestFunctionPtr make_test_function(const std::string& spec, int dim) {
  if (spec == "bump") return make_bump(Vec::Zero(dim), 1.0);
  std::vector<int> e(dim, 0);
  std::size_t i = 0;
  if (spec != "1") {
    while (i < spec.size()) {
      int coord;
      if (spec[i] == 'x') {
        coord = 0;
        ++i;
      } else if (spec[i] == 'y') {
        ++i;
        coord = 1;
        if (i < spec.size() && std::isdigit(static_cast<unsigned char>(spec[i])) && spec[i] != '0') {
          // "y2" is y squared when dim == 2, otherwise the second tangential coordinate.
          if (dim > 2) {
            coord = spec[i] - '0';
            ++i;
          }
        }
      } else {
        throw Error(ErrorKind::invalid_argument, "unknown test function '" + spec + "'");
      }
      int power = 1;
      if (i < spec.size() && std::isdigit(static_cast<unsigned char>(spec[i]))) {
        power = spec[i] - '0';
        ++i;
      }
      if (coord >= dim) throw Error(ErrorKind::dimension_mismatch, "test function '" + spec + "' needs more coordinates");
      e[coord] += power;
    }
  }
  return std::make_shared<Monomial>(std::move(e));
}

/// L f(p) = (b + induced) . grad f + 1/2 tr(Sigma D^2 f).
inline double apply_generator(const CoefficientField& field, const TestFunction& f, const Vec& p) {
  const Vec drift = limit_drift(field, p).total();
  const Mat S = sigma_gram(field, p);
  const Vec g = f.gradient(p);
  const Mat H = f.hessian(p);
  return drift.dot(g) + 0.5 * (S.cwiseProduct(H)).sum();
}

// ---------------------------------------------------------------------------
// Paths without membranes.

namespace detail {

template <class DriftFn>
PathSample em_path(const CoefficientField& field, const DriftFn& drift_fn, double x0, const Vec& y0, double T,
                   double dt, RandomStream& rng, double record_interval, StepObserver* obs) {
  if (y0.size() != field.n()) throw Error(ErrorKind::dimension_mismatch, "path start has the wrong dimension");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "time step must be positive");
  PathSample path;
  Vec p = make_point(x0, y0);
  double t = 0.0;
  path.times.push_back(0.0);
  path.states.push_back(p);
  double next = record_interval;
  const int m = field.m();
  Vec dW(m);
  while (t < T) {
    const double h = std::min(dt, T - t);
    const double sq = std::sqrt(h);
    for (int l = 0; l < m; ++l) dW(l) = sq * rng.normal();
    if (obs) obs->on_step(p, dW);
    const Vec b = drift_fn(p);
    const Mat s = field.diffusion(p);
    Vec q = p;
    for (int i = 0; i < p.size(); ++i) {
      double v = p(i) + b(i) * h;
      for (int l = 0; l < m; ++l) v += s(i, l) * dW(l);
      q(i) = v;
    }
    if (!q.allFinite()) throw Error(ErrorKind::non_convergence, "non-finite state in Euler-Maruyama path");
    p = q;
    t = (T - t <= dt) ? T : t + h;
    ++path.steps;
    if (record_interval <= 0.0 || t >= next - 1e-12 * record_interval || t == T) {
      path.times.push_back(t);
      path.states.push_back(p);
      if (record_interval > 0.0)
        while (next <= t + 1e-12 * record_interval) next += record_interval;
    }
  }
  return path;
}

}  // namespace detail

/// Euler-Maruyama for the homogenized SDE: drift b + interface_drift, diffusion sigma.
inline PathSample simulate_limit_path(const CoefficientField& field, double x0, const Vec& y0, double T, double dt,
                                      RandomStream& rng, double record_interval = 0.0,
                                      StepObserver* obs = nullptr) {
  return detail::em_path(
      field, [&field](const Vec& p) { return Vec(field.drift(p) + interface_drift(field, p)); }, x0, y0, T, dt,
      rng, record_interval, obs);
}

/// Euler-Maruyama for the SDE without membranes.
inline PathSample simulate_free_path(const CoefficientField& field, double x0, const Vec& y0, double T, double dt,
                                     RandomStream& rng, double record_interval = 0.0,
                                     StepObserver* obs = nullptr) {
  return detail::em_path(
      field, [&field](const Vec& p) { return field.drift(p); }, x0, y0, T, dt, rng, record_interval, obs);
}

}  // namespace semiperm
