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

#include "semiperm/rng.hpp"
#include "semiperm/scenario.hpp"
#include "semiperm/transform.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace semiperm;
using nlohmann::json;

namespace {

FieldPtr const_field(double beta, double theta) {
  return build_scenario(json{{"name", "constant"}, {"n", 1}, {"beta", beta}, {"theta", {theta}},
                             {"b", {0.3, -0.2}}, {"sigma", {{1.0, 0.2}, {0.4, 0.9}}}});
}

Vec yv(double y) { return Vec::Constant(1, y); }

double slope(const std::vector<double>& eps, const std::vector<double>& err) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    mx += std::log(eps[i]);
    my += std::log(err[i]);
  }
  mx /= eps.size();
  my /= eps.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    sxy += (std::log(eps[i]) - mx) * (std::log(err[i]) - my);
    sxx += (std::log(eps[i]) - mx) * (std::log(eps[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST(BFactor, Values) {
  EXPECT_EQ(StripChart(const_field(0.0, 0.0), 0, 0.0, 0.1).b_factor(yv(0)), 1.0);
  EXPECT_NEAR(StripChart(const_field(0.5, 0.0), 0, 0.0, 0.1).b_factor(yv(0)), 0.95 / 1.05, 1e-15);
  EXPECT_NEAR(StripChart(const_field(-0.5, 0.0), 0, 0.0, 0.1).b_factor(yv(0)), 1.05 / 0.95, 1e-15);
}

TEST(BFactor, SmallnessViolation) {
  try {
    StripChart(const_field(3.0, 0.0), 0, 0.0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::smallness_violation);
  }
}

TEST(BFactor, Bounds) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  for (double eps : {0.1, 0.05, 0.02}) {
    const StripChart c(f, 0, 1.0, eps, 0.5);
    double beta_sup = 0.0, dbeta_sup = 0.0;
    for (double y = -1.0; y <= 1.0; y += 0.01) {
      const MembraneJet mj = f->membrane_jet(1.0, yv(y), 1);
      beta_sup = std::max(beta_sup, std::abs(mj.beta));
      dbeta_sup = std::max(dbeta_sup, std::abs(mj.grad_beta(0)));
    }
    for (double y = -1.0; y <= 1.0; y += 0.01) {
      EXPECT_LE(std::abs(c.b_factor(yv(y)) - 1.0), 4.0 * eps * beta_sup);
      const double h = 1e-6;
      const double db = (c.b_factor(yv(y + h)) - c.b_factor(yv(y - h))) / (2 * h);
      EXPECT_LE(std::abs(db), 8.0 * eps * dbeta_sup);
    }
  }
}

TEST(Forward, Examples) {
  const StripChart c(const_field(0.5, 0.2), 0, 0.0, 0.1);
  ChartPoint q = c.forward(-0.3, yv(1.0));
  EXPECT_EQ(q.x, -0.3);
  EXPECT_NEAR(q.y(0), 1.0 + 0.3 * 0.2, 1e-15);
  q = c.forward(0.05, yv(1.0));
  EXPECT_NEAR(q.x, 0.05 * 0.95 / 1.05, 1e-15);
  EXPECT_NEAR(q.x, 0.0452381, 1e-7);
  EXPECT_NEAR(q.y(0), 0.99, 1e-15);
  q = c.forward(0.0, yv(1.0));
  EXPECT_EQ(q.x, 0.0);
  EXPECT_EQ(q.y(0), 1.0);
}

TEST(Inverse, FixedSet) {
  const StripChart c(build_scenario(json{{"name", "fig2"}}), 0, 1.0, 0.05);
  const ChartPoint q = c.inverse(0.0, yv(0.3));
  EXPECT_EQ(q.x, 0.0);
  EXPECT_EQ(q.y(0), 0.3);
}

TEST(Inverse, ConstantThetaLinearSolve) {
  const StripChart c(const_field(0.5, 0.2), 0, 0.0, 0.1);
  ChartPoint q = c.inverse(-0.3, yv(0.99));
  EXPECT_EQ(q.x, -0.3);
  EXPECT_NEAR(q.y(0), 0.99 - 0.3 * 0.2, 1e-15);
  const double B = 0.95 / 1.05;
  q = c.inverse(0.04, yv(0.99));
  EXPECT_NEAR(q.x, 0.04 / B, 1e-15);
  EXPECT_NEAR(q.y(0), 0.99 + 0.2 * 0.04 / B, 1e-15);
  const ChartPoint back = c.forward(q.x, q.y);
  EXPECT_NEAR(back.x, 0.04, 1e-10);
  EXPECT_NEAR(back.y(0), 0.99, 1e-10);
}

// The tangential map y -> y - x theta(y) is injective on a strip of width eps
// only where eps |d theta / dy| < 1; near y = 0 that derivative is about
// -x / gamma, so the sample regions stay inside the injective part.
TEST(Inverse, Fig2RoundTrip) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  RandomStream rng(11, 0);
  struct Region {
    double center, y_lo, y_hi;
  };
  for (const Region& g : {Region{-0.15, -2.0, 2.0}, Region{0.0, -2.0, 2.0}, Region{0.1, -2.0, 2.0},
                          Region{1.5, 0.6, 2.0}, Region{-2.0, -2.0, -0.6}}) {
    const StripChart c(f, 0, g.center, 0.05, 0.5);
    for (int i = 0; i < 2000; ++i) {
      const double u = (2.0 * rng.uniform() - 1.0) * 0.05;
      const Vec v = yv(g.y_lo + (g.y_hi - g.y_lo) * rng.uniform());
      const ChartPoint p = c.inverse(u, v);
      const ChartPoint q = c.forward(p.x, p.y);
      ASSERT_LE(std::abs(q.x - u), 1e-10);
      ASSERT_LE(std::abs(q.y(0) - v(0)), 1e-10);
    }
  }
}

TEST(Inverse, Monotone) {
  const StripChart c(build_scenario(json{{"name", "fig2"}}), 0, 0.1, 0.05, 0.5);
  for (double v : {-2.0, -0.1, 0.0, 0.4, 2.0}) {
    double prev = -1.0;
    for (double u = -0.05; u <= 0.05; u += 0.001) {
      const double x = c.inverse(u, yv(v)).x;
      EXPECT_GT(x, prev);
      prev = x;
    }
  }
}

TEST(Inverse, ExpansionRates) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  const double center = 0.5;
  std::vector<double> eps{0.2, 0.1, 0.05, 0.025}, err_psi, err_phi;
  for (double e : eps) {
    const StripChart c(f, 0, center, e, 0.5);
    double sp = 0.0, sf = 0.0;
    for (double t : {-1.0, -0.5, 0.5, 1.0}) {
      for (double v : {-0.8, -0.6, -0.4, 0.4, 0.6, 0.8}) {
        const double u = t * e;
        const ChartPoint p = c.inverse(u, yv(v));
        const MembraneJet mj = f->membrane_jet(center, yv(v), 0);
        sp = std::max(sp, std::abs(p.y(0) - v - mj.theta(0) * u));
        if (u > 0.0) sf = std::max(sf, std::abs(p.x - u * (1.0 + 2.0 * e * mj.beta)));
      }
    }
    err_psi.push_back(sp);
    err_phi.push_back(sf);
  }
  EXPECT_GE(slope(eps, err_psi), 2.0);
  EXPECT_GE(slope(eps, err_phi), 3.0);
}

TEST(Transformed, InertMembranes) {
  const StripChart c(const_field(0.0, 0.3), 0, 0.0, 0.1);
  for (double x : {-0.05, 0.0, 0.07}) {
    const TransformedCoeffs t = c.transformed_coeffs(x, yv(0.4));
    EXPECT_EQ(t.phi0, 0.0);
    EXPECT_EQ(t.phi.norm(), 0.0);
  }
}

TEST(Transformed, NoDirection) {
  const StripChart c(const_field(0.4, 0.0), 0, 0.0, 0.1);
  for (double x : {-0.05, 0.0, 0.07}) {
    const TransformedCoeffs t = c.transformed_coeffs(x, yv(0.4));
    EXPECT_EQ(t.psi.norm(), 0.0);
    EXPECT_EQ(t.psi_l.norm(), 0.0);
  }
}

TEST(Transformed, MembraneIndicator) {
  const StripChart c(build_scenario(json{{"name", "fig2"}}), 0, 1.0, 0.05, 0.5);
  const TransformedCoeffs t = c.transformed_coeffs(0.0, yv(0.6));
  EXPECT_EQ(t.phi0, 0.0);
  EXPECT_EQ(t.phi.norm(), 0.0);
  EXPECT_EQ(t.psi.norm(), 0.0);
}

// Away from the membrane the transformed coefficients are the Ito drift and
// diffusion of (F, G) applied to the untransformed process; check against
// finite-difference derivatives of the forward map.
TEST(Transformed, MatchesItoOfForwardMap) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  const double center = 0.9;
  const StripChart c(f, 0, center, 0.05, 0.5);
  const double h = 1e-4;
  for (double x : {-0.04, -0.01, 0.015, 0.045}) {
    for (double y : {-0.8, 0.2, 0.7}) {
      auto F = [&](double xx, double yy) {
        const ChartPoint q = c.forward(xx, yv(yy));
        return std::array<double, 2>{q.x, q.y(0)};
      };
      const Vec p = make_point(center + x, yv(y));
      const Vec b = f->drift(p);
      const Mat s = f->diffusion(p);
      const Mat S = s * s.transpose();
      const TransformedCoeffs t = c.transformed_coeffs(x, yv(y));
      for (int comp = 0; comp < 2; ++comp) {
        const double f0 = F(x, y)[comp];
        const double fx = (F(x + h, y)[comp] - F(x - h, y)[comp]) / (2 * h);
        const double fy = (F(x, y + h)[comp] - F(x, y - h)[comp]) / (2 * h);
        const double fxx = (F(x + h, y)[comp] - 2 * f0 + F(x - h, y)[comp]) / (h * h);
        const double fyy = (F(x, y + h)[comp] - 2 * f0 + F(x, y - h)[comp]) / (h * h);
        const double fxy = (F(x + h, y + h)[comp] - F(x + h, y - h)[comp] - F(x - h, y + h)[comp] +
                            F(x - h, y - h)[comp]) / (4 * h * h);
        const double drift = b(0) * fx + b(1) * fy + 0.5 * (S(0, 0) * fxx + 2 * S(0, 1) * fxy + S(1, 1) * fyy);
        const double got = comp == 0 ? t.drift_u : t.drift_v(0);
        EXPECT_NEAR(got, drift, 1e-5) << "x=" << x << " y=" << y << " comp=" << comp;
        for (int l = 0; l < 2; ++l) {
          const double diff = fx * s(0, l) + fy * s(1, l);
          const double gotl = comp == 0 ? t.diff_u(l) : t.diff_v(0, l);
          EXPECT_NEAR(gotl, diff, 1e-7);
        }
      }
    }
  }
}

TEST(Transformed, SmallCorrections) {
  // |phi| <= C eps (1 + |x|) and |psi| <= C |x| with a constant that does not grow as eps shrinks.
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  std::vector<double> cphi, cpsi;
  for (double eps : {0.1, 0.05, 0.025}) {
    const StripChart c(f, 0, 1.0, eps, 0.5);
    double a = 0.0, b = 0.0;
    for (double t = -1.0; t <= 1.0; t += 0.1) {
      const double x = t * eps;
      if (x == 0.0) continue;
      for (double y = -1.0; y <= 1.0; y += 0.1) {
        const TransformedCoeffs tc = c.transformed_coeffs(x, yv(y));
        a = std::max({a, std::abs(tc.phi0) / (eps * (1 + std::abs(x))),
                      tc.phi.lpNorm<Eigen::Infinity>() / (eps * (1 + std::abs(x)))});
        b = std::max({b, std::abs(tc.psi(0)) / std::abs(x), tc.psi_l.lpNorm<Eigen::Infinity>() / std::abs(x)});
      }
    }
    cphi.push_back(a);
    cpsi.push_back(b);
  }
  for (std::size_t i = 1; i < cphi.size(); ++i) {
    EXPECT_LE(cphi[i], 1.5 * cphi[0]);
    EXPECT_LE(cpsi[i], 1.5 * cpsi[0]);
  }
}
