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

#include "semiperm/jet.hpp"
#include "semiperm/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace semiperm {

/// Skewness and penetration direction at a membrane point together with
/// their derivatives in the tangential variables y.
struct MembraneJet {
  double beta = 0.0;
  Vec grad_beta;  // n
  Mat hess_beta;  // n x n
  Vec theta;      // n
  Mat jac_theta;  // (i, j) = d theta^i / d y^j
  std::array<Mat, kMaxDim> hess_theta;  // hess_theta[i](j, k)
  int order = 2;

  static MembraneJet zero(int n, int order) {
    MembraneJet jet;
    jet.order = order;
    jet.grad_beta = Vec::Zero(n);
    jet.hess_beta = Mat::Zero(n, n);
    jet.theta = Vec::Zero(n);
    jet.jac_theta = Mat::Zero(n, n);
    for (auto& h : jet.hess_theta) h = Mat::Zero(n, n);
    return jet;
  }
};

/*!
 * Coefficients b, sigma, beta, theta and d of a scenario with state
 * dimension 1+n and m Brownian drivers.
 *
 * Instances are immutable after construction and may be shared between
 * worker threads.
 */
class CoefficientField {
 public:
  CoefficientField(int n, int m) : n_(n), m_(m) {
    if (n < 0 || m < 1 || 1 + n > kMaxDim || m > kMaxDim) {
      throw Error(ErrorKind::dimension_mismatch,
                  "unsupported dimensions n=" + std::to_string(n) + " m=" + std::to_string(m));
    }
  }
  virtual ~CoefficientField() = default;

  int n() const { return n_; }
  int m() const { return m_; }
  int dim() const { return 1 + n_; }

  virtual std::string name() const = 0;
  virtual nlohmann::json describe() const { return {{"name", name()}, {"n", n_}, {"m", m_}}; }

  virtual Vec drift(const Vec& p) const = 0;       // b, size 1+n
  virtual Mat diffusion(const Vec& p) const = 0;   // sigma, (1+n) x m
  virtual double skew(const Vec& p) const = 0;     // beta
  virtual Vec direction(const Vec& p) const = 0;   // theta, size n
  virtual double density(double x) const = 0;      // d

  /// True when beta and theta do not depend on y, so a membrane jet may be reused.
  virtual bool skew_independent_of_y() const { return n_ == 0; }

  virtual double density_slope(double x) const {
    constexpr double h = 1e-6;
    return (density(x + h) - density(x - h)) / (2.0 * h);
  }

  /// beta(x, .) and theta(x, .) with y-derivatives up to `order` (1 or 2).
  /// The default uses central differences with step 1e-5.
  virtual MembraneJet membrane_jet(double x, const Vec& y, int order) const {
    constexpr double h = 1e-5;
    MembraneJet jet = MembraneJet::zero(n_, order);
    Vec p = make_point(x, y);
    jet.beta = skew(p);
    jet.theta = direction(p);
    auto eval = [&](const Vec& yy, double& beta, Vec& theta) {
      const Vec q = make_point(x, yy);
      beta = skew(q);
      theta = direction(q);
    };
    for (int j = 0; j < n_; ++j) {
      Vec yp = y, ym = y;
      yp(j) += h;
      ym(j) -= h;
      double bp, bm;
      Vec tp, tm;
      eval(yp, bp, tp);
      eval(ym, bm, tm);
      jet.grad_beta(j) = (bp - bm) / (2.0 * h);
      jet.jac_theta.col(j) = (tp - tm) / (2.0 * h);
      if (order >= 2) {
        jet.hess_beta(j, j) = (bp - 2.0 * jet.beta + bm) / (h * h);
        for (int i = 0; i < n_; ++i)
          jet.hess_theta[i](j, j) = (tp(i) - 2.0 * jet.theta(i) + tm(i)) / (h * h);
      }
    }
    if (order >= 2) {
      for (int j = 0; j < n_; ++j) {
        for (int k = j + 1; k < n_; ++k) {
          double bpp, bpm, bmp, bmm;
          Vec tpp, tpm, tmp, tmm;
          Vec y2 = y;
          y2(j) = y(j) + h; y2(k) = y(k) + h; eval(y2, bpp, tpp);
          y2(j) = y(j) + h; y2(k) = y(k) - h; eval(y2, bpm, tpm);
          y2(j) = y(j) - h; y2(k) = y(k) + h; eval(y2, bmp, tmp);
          y2(j) = y(j) - h; y2(k) = y(k) - h; eval(y2, bmm, tmm);
          const double scale = 1.0 / (4.0 * h * h);
          jet.hess_beta(j, k) = jet.hess_beta(k, j) = (bpp - bpm - bmp + bmm) * scale;
          for (int i = 0; i < n_; ++i)
            jet.hess_theta[i](j, k) = jet.hess_theta[i](k, j) =
                (tpp(i) - tpm(i) - tmp(i) + tmm(i)) * scale;
        }
      }
    }
    return jet;
  }

 private:
  int n_;
  int m_;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

/// Sigma = sigma sigma^T at p.
inline Mat sigma_gram(const CoefficientField& field, const Vec& p) {
  if (!p.allFinite()) throw Error(ErrorKind::invalid_argument, "sigma_gram: non-finite point");
  const Mat s = field.diffusion(p);
  return s * s.transpose();
}

// ---------------------------------------------------------------------------
// Membrane-density profiles used by the built-in scenarios.

struct DensityProfile {
  enum class Kind { constant, sine };
  Kind kind = Kind::constant;
  double offset = 1.0;     // constant value, or offset of the sine profile
  double amplitude = 0.0;
  double frequency = 1.0;

  static DensityProfile constant(double value) { return {Kind::constant, value, 0.0, 1.0}; }
  static DensityProfile sine(double offset, double amplitude, double frequency = 1.0) {
    return {Kind::sine, offset, amplitude, frequency};
  }

  double operator()(double x) const {
    return kind == Kind::constant ? offset : offset + amplitude * std::sin(frequency * x);
  }
  double slope(double x) const {
    return kind == Kind::constant ? 0.0 : amplitude * frequency * std::cos(frequency * x);
  }

  nlohmann::json describe() const {
    if (kind == Kind::constant) return {{"kind", "constant"}, {"value", offset}};
    return {{"kind", "sine"}, {"offset", offset}, {"amplitude", amplitude}, {"frequency", frequency}};
  }
};

/// Spatially constant b, sigma, beta, theta with a built-in density profile.
class ConstantField final : public CoefficientField {
 public:
  ConstantField(std::string name, Vec b, Mat sigma, double beta, Vec theta, DensityProfile d)
      : CoefficientField(static_cast<int>(b.size()) - 1, static_cast<int>(sigma.cols())),
        name_(std::move(name)), b_(std::move(b)), sigma_(std::move(sigma)), beta_(beta),
        theta_(std::move(theta)), d_(d) {
    if (sigma_.rows() != dim() || theta_.size() != n())
      throw Error(ErrorKind::dimension_mismatch, "constant scenario: inconsistent coefficient shapes");
  }

  std::string name() const override { return name_; }
  nlohmann::json describe() const override {
    nlohmann::json j = CoefficientField::describe();
    j["b"] = std::vector<double>(b_.data(), b_.data() + b_.size());
    std::vector<std::vector<double>> s(sigma_.rows(), std::vector<double>(sigma_.cols()));
    for (int i = 0; i < sigma_.rows(); ++i)
      for (int l = 0; l < sigma_.cols(); ++l) s[i][l] = sigma_(i, l);
    j["sigma"] = s;
    j["beta"] = beta_;
    j["theta"] = std::vector<double>(theta_.data(), theta_.data() + theta_.size());
    j["density"] = d_.describe();
    return j;
  }

  Vec drift(const Vec&) const override { return b_; }
  Mat diffusion(const Vec&) const override { return sigma_; }
  double skew(const Vec&) const override { return beta_; }
  Vec direction(const Vec&) const override { return theta_; }
  double density(double x) const override { return d_(x); }
  double density_slope(double x) const override { return d_.slope(x); }

  bool skew_independent_of_y() const override { return true; }

  MembraneJet membrane_jet(double, const Vec&, int order) const override {
    MembraneJet jet = MembraneJet::zero(n(), order);
    jet.beta = beta_;
    jet.theta = theta_;
    return jet;
  }

 private:
  std::string name_;
  Vec b_;
  Mat sigma_;
  double beta_;
  Vec theta_;
  DensityProfile d_;
};

// ---------------------------------------------------------------------------
// Rotating two-dimensional example with oblique, y-dependent penetration.

/// C-infinity cutoff: 1 on |p| <= radius, 0 beyond radius + width.
template <class T>
T smooth_cutoff(double x, T y, double radius, double width) {
  const double r0 = std::sqrt(x * x + value_of(y) * value_of(y));
  if (r0 <= radius) return T(1.0);
  if (r0 >= radius + width) return T(0.0);
  using std::exp;
  using std::sqrt;
  const T r = sqrt(T(x * x) + y * y);
  const T t = (T(radius + width) - r) / T(width);
  const T a = exp(T(-1.0) / t);
  const T b = exp(T(-1.0) / (T(1.0) - t));
  return a / (a + b);
}

class RotationField final : public CoefficientField {
 public:
  RotationField(double gamma = 1e-2, double radius = 10.0, double width = 2.0)
      : CoefficientField(1, 2), gamma_(gamma), radius_(radius), width_(width) {
    if (!(gamma > 0.0) || !(radius > 0.0) || !(width > 0.0))
      throw Error(ErrorKind::invalid_argument, "fig2: gamma, radius and width must be positive");
  }

  std::string name() const override { return "fig2"; }
  nlohmann::json describe() const override {
    nlohmann::json j = CoefficientField::describe();
    j["gamma"] = gamma_;
    j["truncation_radius"] = radius_;
    j["truncation_width"] = width_;
    return j;
  }

  double gamma() const { return gamma_; }

  template <class T>
  T beta_of(double x, T y) const {
    return smooth_cutoff(x, y, radius_, width_) * (T(2.0) * y * y * y) / (T(gamma_) + y * y);
  }
  template <class T>
  T theta_of(double x, T y) const {
    const double x3 = x * x * x;
    return smooth_cutoff(x, y, radius_, width_) * (T(-x3) * y) /
           (T(gamma_ * gamma_ + x * x) * (T(gamma_) + y * y));
  }

  Vec drift(const Vec& p) const override {
    const double c = smooth_cutoff(p(0), p(1), radius_, width_);
    Vec b(2);
    b << -c * p(1), c * p(0);
    return b;
  }
  Mat diffusion(const Vec&) const override { return Mat::Identity(2, 2); }
  double skew(const Vec& p) const override { return beta_of(p(0), p(1)); }
  Vec direction(const Vec& p) const override {
    Vec t(1);
    t(0) = theta_of(p(0), p(1));
    return t;
  }
  double density(double) const override { return 1.0; }
  double density_slope(double) const override { return 0.0; }

  MembraneJet membrane_jet(double x, const Vec& y, int order) const override {
    MembraneJet jet = MembraneJet::zero(1, order);
    const Jet2 yv = Jet2::variable(y(0));
    const Jet2 b = beta_of(x, yv);
    const Jet2 t = theta_of(x, yv);
    jet.beta = b.v;
    jet.grad_beta(0) = b.d1;
    jet.hess_beta(0, 0) = b.d2;
    jet.theta(0) = t.v;
    jet.jac_theta(0, 0) = t.d1;
    jet.hess_theta[0](0, 0) = t.d2;
    return jet;
  }

 private:
  double gamma_;
  double radius_;
  double width_;
};

// ---------------------------------------------------------------------------
// Sampled coefficient tables with multilinear interpolation.

struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  int count = 2;

  double step() const { return (hi - lo) / (count - 1); }
  double at(int i) const { return lo + step() * i; }
};

/// Regular tensor grid; values are stored with the last axis fastest.
class RegularGrid {
 public:
  RegularGrid() = default;
  explicit RegularGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
    for (const auto& a : axes_) {
      if (a.count < 2 || !(a.hi > a.lo))
        throw Error(ErrorKind::invalid_argument, "grid axis needs count >= 2 and hi > lo");
    }
  }

  int rank() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }

  std::size_t size() const {
    std::size_t s = 1;
    for (const auto& a : axes_) s *= static_cast<std::size_t>(a.count);
    return s;
  }

  /// Multilinear interpolation; points outside the grid are clamped.
  double interpolate(const std::vector<double>& values, const Vec& p) const {
    const int r = rank();
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int a = 0; a < r; ++a) {
      const GridAxis& ax = axes_[a];
      double s = (std::clamp(p(a), ax.lo, ax.hi) - ax.lo) / ax.step();
      int i = std::min(static_cast<int>(std::floor(s)), ax.count - 2);
      base[a] = i;
      frac[a] = s - i;
    }
    double result = 0.0;
    for (int corner = 0; corner < (1 << r); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (int a = 0; a < r; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        idx = idx * axes_[a].count + static_cast<std::size_t>(base[a] + bit);
      }
      if (w != 0.0) result += w * values[idx];
    }
    return result;
  }

 private:
  std::vector<GridAxis> axes_;
};

class TableField final : public CoefficientField {
 public:
  struct Tables {
    RegularGrid grid;
    std::vector<std::vector<double>> b;      // 1+n tables
    std::vector<std::vector<double>> sigma;  // (1+n)*m tables, row-major (i, l)
    std::vector<double> beta;
    std::vector<std::vector<double>> theta;  // n tables
    GridAxis density_axis;
    std::vector<double> density;             // samples of d on density_axis
  };

  TableField(int n, int m, Tables tables) : CoefficientField(n, m), t_(std::move(tables)) {
    const std::size_t sz = t_.grid.size();
    auto bad = [](const std::string& what) {
      return Error(ErrorKind::dimension_mismatch, "table scenario: " + what);
    };
    if (t_.grid.rank() != dim()) throw bad("grid rank must equal 1+n");
    if (static_cast<int>(t_.b.size()) != dim()) throw bad("need 1+n drift tables");
    if (static_cast<int>(t_.sigma.size()) != dim() * m) throw bad("need (1+n)*m diffusion tables");
    if (static_cast<int>(t_.theta.size()) != n) throw bad("need n direction tables");
    auto check = [&](const std::vector<double>& v, const char* what) {
      if (v.size() != sz) throw bad(std::string(what) + " table has wrong size");
    };
    for (const auto& v : t_.b) check(v, "drift");
    for (const auto& v : t_.sigma) check(v, "diffusion");
    for (const auto& v : t_.theta) check(v, "direction");
    check(t_.beta, "skewness");
    if (static_cast<int>(t_.density.size()) != t_.density_axis.count || t_.density_axis.count < 2)
      throw bad("density table size must match its axis");
  }

  std::string name() const override { return "table"; }

  Vec drift(const Vec& p) const override {
    Vec b(dim());
    for (int i = 0; i < dim(); ++i) b(i) = t_.grid.interpolate(t_.b[i], p);
    return b;
  }
  Mat diffusion(const Vec& p) const override {
    Mat s(dim(), m());
    for (int i = 0; i < dim(); ++i)
      for (int l = 0; l < m(); ++l) s(i, l) = t_.grid.interpolate(t_.sigma[i * m() + l], p);
    return s;
  }
  double skew(const Vec& p) const override { return t_.grid.interpolate(t_.beta, p); }
  Vec direction(const Vec& p) const override {
    Vec t(n());
    for (int i = 0; i < n(); ++i) t(i) = t_.grid.interpolate(t_.theta[i], p);
    return t;
  }
  double density(double x) const override {
    const GridAxis& ax = t_.density_axis;
    const double s = (std::clamp(x, ax.lo, ax.hi) - ax.lo) / ax.step();
    const int i = std::min(static_cast<int>(std::floor(s)), ax.count - 2);
    const double f = s - i;
    return (1.0 - f) * t_.density[i] + f * t_.density[i + 1];
  }

 private:
  Tables t_;
};

// ---------------------------------------------------------------------------
// Assumption checks on a sampling grid.

struct SamplingGrid {
  std::vector<GridAxis> axes;  // one per coordinate of (x, y)

  static SamplingGrid cube(int dim, double lo, double hi, int count) {
    return SamplingGrid{std::vector<GridAxis>(dim, GridAxis{lo, hi, count})};
  }

  std::size_t size() const {
    std::size_t s = 1;
    for (const auto& a : axes) s *= static_cast<std::size_t>(a.count);
    return s;
  }

  Vec point(std::size_t index) const {
    Vec p(static_cast<int>(axes.size()));
    for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
      const auto c = static_cast<std::size_t>(axes[a].count);
      p(a) = axes[a].count == 1 ? axes[a].lo : axes[a].at(static_cast<int>(index % c));
      index /= c;
    }
    return p;
  }

  std::string describe() const {
    std::ostringstream os;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (a) os << " x ";
      os << "[" << axes[a].lo << "," << axes[a].hi << "]/" << axes[a].count;
    }
    return os.str();
  }
};

struct ValidationThresholds {
  double density_floor = 0.0;      // A_a passes iff d_min > floor
  double eigen_floor = 1e-12;      // A_Sigma passes iff lambda_min > floor
  double derivative_cap = std::numeric_limits<double>::infinity();
  std::size_t max_witnesses = 5;
};

struct AssumptionCheck {
  std::string name;
  bool passed = true;
  double measured = 0.0;
  std::string detail;
  std::vector<Vec> witnesses;
};

struct ValidationReport {
  std::string grid;
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = -std::numeric_limits<double>::infinity();
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = -std::numeric_limits<double>::infinity();
  std::map<std::string, double> first_derivative_sup;
  std::map<std::string, double> second_derivative_sup;
  std::vector<AssumptionCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }

  const AssumptionCheck& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw Error(ErrorKind::invalid_argument, "no assumption check named " + name);
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "grid: " << grid << "\n";
    os << "d_min = " << d_min << ", d_max = " << d_max << "\n";
    os << "lambda_min = " << lambda_min << ", lambda_max = " << lambda_max << "\n";
    for (const auto& [k, v] : first_derivative_sup) os << "sup |D " << k << "| = " << v << "\n";
    for (const auto& [k, v] : second_derivative_sup) os << "sup |D2 " << k << "| = " << v << "\n";
    for (const auto& c : checks) {
      os << (c.passed ? "PASS " : "FAIL ") << c.name << " (measured " << c.measured << ")";
      if (!c.detail.empty()) os << ": " << c.detail;
      os << "\n";
      for (const auto& w : c.witnesses) {
        os << "    witness (";
        for (int i = 0; i < w.size(); ++i) os << (i ? ", " : "") << w(i);
        os << ")\n";
      }
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    auto num = [](double v) -> nlohmann::json {
      if (std::isfinite(v)) return v;
      return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    };
    nlohmann::json j;
    j["grid"] = grid;
    j["passed"] = passed();
    j["d_min"] = num(d_min);
    j["d_max"] = num(d_max);
    j["lambda_min"] = num(lambda_min);
    j["lambda_max"] = num(lambda_max);
    for (const auto& [k, v] : first_derivative_sup) j["first_derivative_sup"][k] = num(v);
    for (const auto& [k, v] : second_derivative_sup) j["second_derivative_sup"][k] = num(v);
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
      nlohmann::json cj{{"name", c.name}, {"passed", c.passed}, {"measured", num(c.measured)},
                        {"detail", c.detail}};
      cj["witnesses"] = nlohmann::json::array();
      for (const auto& w : c.witnesses)
        cj["witnesses"].push_back(std::vector<double>(w.data(), w.data() + w.size()));
      j["checks"].push_back(cj);
    }
    return j;
  }
};

namespace detail {

// Flattens every smooth coefficient at p into one labelled list of scalars.
inline void collect_coefficients(const CoefficientField& f, const Vec& p,
                                 std::array<double, 64>& out, int& count) {
  count = 0;
  const Vec b = f.drift(p);
  for (int i = 0; i < b.size(); ++i) out[count++] = b(i);
  const Mat s = f.diffusion(p);
  for (int i = 0; i < s.rows(); ++i)
    for (int l = 0; l < s.cols(); ++l) out[count++] = s(i, l);
  out[count++] = f.skew(p);
  const Vec t = f.direction(p);
  for (int i = 0; i < t.size(); ++i) out[count++] = t(i);
}

inline const char* coefficient_family(const CoefficientField& f, int index) {
  const int nb = f.dim();
  const int ns = f.dim() * f.m();
  if (index < nb) return "b";
  if (index < nb + ns) return "sigma";
  if (index == nb + ns) return "beta";
  return "theta";
}

}  // namespace detail

/*!
 * Samples the coefficient field on `grid` and reports on
 *  - A_a: inf d > 0 along the grid's x axis,
 *  - A_Sigma: smallest eigenvalue of Sigma bounded away from zero,
 *  - A_coeff: central-difference first and second derivatives of
 *    b, sigma, beta, theta finite (and below the configured cap).
 * Step size for the differences is 1e-4 (1 + |p|).
 */
inline ValidationReport validate_assumptions(const CoefficientField& field, const SamplingGrid& grid,
                                             const ValidationThresholds& thr = {}) {
  if (static_cast<int>(grid.axes.size()) != field.dim())
    throw Error(ErrorKind::dimension_mismatch, "sampling grid rank must equal 1+n");
  if (grid.size() == 0) throw Error(ErrorKind::invalid_argument, "empty sampling grid");
  for (const auto& a : grid.axes)
    if (!std::isfinite(a.lo) || !std::isfinite(a.hi) || a.count < 1)
      throw Error(ErrorKind::invalid_argument, "sampling grid must be finite and non-empty");

  ValidationReport rep;
  rep.grid = grid.describe();
  AssumptionCheck density_check{"A_a", true, 0.0, "", {}};
  AssumptionCheck sigma_check{"A_Sigma", true, 0.0, "", {}};
  AssumptionCheck smooth_check{"A_coeff", true, 0.0, "", {}};

  // Density along the x axis.
  const GridAxis& xa = grid.axes[0];
  for (int i = 0; i < xa.count; ++i) {
    const double x = xa.count == 1 ? xa.lo : xa.at(i);
    const double d = field.density(x);
    const double dp = field.density_slope(x);
    rep.d_min = std::min(rep.d_min, d);
    rep.d_max = std::max(rep.d_max, d);
    auto& sup = rep.first_derivative_sup["d"];
    sup = std::max(sup, std::abs(dp));
    if (!(d > thr.density_floor) || !std::isfinite(dp)) {
      density_check.passed = false;
      if (density_check.witnesses.size() < thr.max_witnesses) {
        Vec w = Vec::Zero(field.dim());
        w(0) = x;
        density_check.witnesses.push_back(w);
      }
    }
  }
  density_check.measured = rep.d_min;
  density_check.detail = "inf d over sampled x must exceed " + std::to_string(thr.density_floor);

  std::array<double, 64> c0{}, cp{}, cm{};
  int count = 0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const Vec p = grid.point(idx);
    const Mat gram = sigma_gram(field, p);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    rep.lambda_min = std::min(rep.lambda_min, lmin);
    rep.lambda_max = std::max(rep.lambda_max, lmax);
    if (!(lmin > thr.eigen_floor)) {
      sigma_check.passed = false;
      if (sigma_check.witnesses.size() < thr.max_witnesses) sigma_check.witnesses.push_back(p);
    }

    detail::collect_coefficients(field, p, c0, count);
    bool bad_here = false;
    for (int a = 0; a < field.dim(); ++a) {
      const double h = 1e-4 * (1.0 + p.norm());
      Vec pp = p, pm = p;
      pp(a) += h;
      pm(a) -= h;
      int cnt = 0;
      detail::collect_coefficients(field, pp, cp, cnt);
      detail::collect_coefficients(field, pm, cm, cnt);
      for (int c = 0; c < count; ++c) {
        const double d1 = (cp[c] - cm[c]) / (2.0 * h);
        const double d2 = (cp[c] - 2.0 * c0[c] + cm[c]) / (h * h);
        const std::string fam = detail::coefficient_family(field, c);
        auto& s1 = rep.first_derivative_sup[fam];
        auto& s2 = rep.second_derivative_sup[fam];
        s1 = std::max(s1, std::abs(d1));
        s2 = std::max(s2, std::abs(d2));
        if (!std::isfinite(d1) || !std::isfinite(d2) || std::abs(d1) > thr.derivative_cap ||
            std::abs(d2) > thr.derivative_cap)
          bad_here = true;
      }
    }
    if (bad_here) {
      smooth_check.passed = false;
      if (smooth_check.witnesses.size() < thr.max_witnesses) smooth_check.witnesses.push_back(p);
    }
  }
  sigma_check.measured = rep.lambda_min;
  sigma_check.detail = "smallest eigenvalue of Sigma must exceed " + std::to_string(thr.eigen_floor);
  double worst = 0.0;
  for (const auto& [k, v] : rep.first_derivative_sup) worst = std::max(worst, v);
  for (const auto& [k, v] : rep.second_derivative_sup) worst = std::max(worst, v);
  smooth_check.measured = worst;
  smooth_check.detail = "finite-difference derivatives must be finite and bounded";

  rep.checks = {density_check, sigma_check, smooth_check};
  return rep;
}

}  // namespace semiperm
