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
#include "semiperm/sim_limit.hpp"
#include "semiperm/stats.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <vector>

using namespace semiperm;
using nlohmann::json;

namespace {

Vec pt(double x, double y) {
  Vec p(2);
  p << x, y;
  return p;
}

}  // namespace

TEST(InterfaceDrift, ZeroSkew) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"theta", {0.7}}});
  EXPECT_EQ(interface_drift(*f, pt(0.3, -1.0)), Vec::Zero(2));
}

TEST(InterfaceDrift, Fig2) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  const Vec d = interface_drift(*f, pt(0.0, 1.0));
  EXPECT_NEAR(d(0), 2.0 / 1.01, 1e-12);
  EXPECT_NEAR(d(0), 1.980198, 1e-6);
  EXPECT_NEAR(d(1), 0.0, 1e-15);
}

TEST(InterfaceDrift, OnedSkew) {
  const FieldPtr f = build_scenario(json{{"name", "oned-skew"}});
  EXPECT_DOUBLE_EQ(interface_drift(*f, Vec::Zero(1))(0), 0.5);
}

TEST(InterfaceDrift, ScalesWithDensityAndTheta) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"beta", 0.4}, {"theta", {0.5}},
                                         {"sigma", {{2.0, 0.0}, {0.0, 1.0}}}, {"density", 2.0}});
  const LimitDrift ld = limit_drift(*f, pt(0.0, 0.0));
  EXPECT_NEAR(ld.induced(0), 0.4 * 4.0 / 2.0, 1e-15);
  EXPECT_NEAR(ld.induced(1), 0.5 * 0.8, 1e-15);
  EXPECT_EQ(ld.base, Vec::Zero(2));
  EXPECT_EQ(ld.total(), ld.induced);
}

TEST(Generator, Examples) {
  const FieldPtr oned = build_scenario(json{{"name", "oned-skew"}});
  EXPECT_DOUBLE_EQ(apply_generator(*oned, *make_test_function("x", 1), Vec::Zero(1)), 0.5);
  const FieldPtr bm = build_scenario(json{{"name", "constant"}});
  EXPECT_DOUBLE_EQ(apply_generator(*bm, *make_test_function("x2", 1), Vec::Constant(1, 0.7)), 1.0);
  const FieldPtr fig2 = build_scenario(json{{"name", "fig2"}});
  EXPECT_NEAR(apply_generator(*fig2, *make_test_function("x", 2), pt(0.0, 1.0)), -1.0 + 2.0 / 1.01, 1e-12);
}

TEST(Generator, CrossTerm) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"b", {0.3, -0.2}},
                                         {"sigma", {{1.0, 0.0}, {0.5, 1.0}}}});
  // L(xy) = b0 y + b1 x + S01.
  EXPECT_NEAR(apply_generator(*f, *make_test_function("xy", 2), pt(2.0, 3.0)), 0.9 - 0.4 + 0.5, 1e-15);
  EXPECT_NEAR(apply_generator(*f, *make_test_function("y2", 2), pt(2.0, 3.0)), -1.2 + 1.25, 1e-15);
}

TEST(TestFunctions, Parsing) {
  EXPECT_EQ(make_test_function("xy", 2)->name(), "x*y");
  EXPECT_EQ(make_test_function("y2", 2)->name(), "y^2");
  EXPECT_EQ(make_test_function("1", 2)->name(), "1");
  EXPECT_DOUBLE_EQ(make_test_function("x2y", 2)->value(pt(2.0, 3.0)), 12.0);
  EXPECT_THROW(make_test_function("z", 2), Error);
  EXPECT_THROW(make_test_function("y", 1), Error);
  EXPECT_THROW(Monomial({2, 2}), Error);
}

TEST(TestFunctions, MonomialDerivatives) {
  const auto f = make_test_function("x2y", 2);
  const Vec g = f->gradient(pt(2.0, 3.0));
  EXPECT_DOUBLE_EQ(g(0), 12.0);
  EXPECT_DOUBLE_EQ(g(1), 4.0);
  const Mat H = f->hessian(pt(2.0, 3.0));
  EXPECT_DOUBLE_EQ(H(0, 0), 6.0);
  EXPECT_DOUBLE_EQ(H(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(H(1, 1), 0.0);
}

TEST(TestFunctions, BumpNumericDerivatives) {
  const auto b = make_bump(Vec::Zero(2), 1.0);
  const Vec p = pt(0.3, -0.2);
  const double q = p.squaredNorm();
  const double v = std::exp(1.0 - 1.0 / (1.0 - q));
  EXPECT_NEAR(b->value(p), v, 1e-15);
  // d/dp_i = v * (-2 p_i / (1 - q)^2).
  const Vec g = b->gradient(p);
  EXPECT_NEAR(g(0), -v * 2.0 * 0.3 / ((1 - q) * (1 - q)), 1e-7);
  EXPECT_NEAR(g(1), v * 2.0 * 0.2 / ((1 - q) * (1 - q)), 1e-7);
  EXPECT_EQ(b->value(pt(1.0, 0.5)), 0.0);
}

TEST(LimitPath, OnedSkewMarginal) {
  const FieldPtr f = build_scenario(json{{"name", "oned-skew"}});
  const int N = 4000;
  std::vector<double> xs;
  for (int i = 0; i < N; ++i) {
    RandomStream rng(21, i);
    xs.push_back(simulate_limit_path(*f, 0.0, Vec(0), 1.0, 0.05, rng, 1.0).states.back()(0));
  }
  const boost::math::normal_distribution<double> nd(0.5, 1.0);
  const double d = ks_statistic(xs, [&](double x) { return boost::math::cdf(nd, x); });
  EXPECT_LT(d, 1.63 / std::sqrt(static_cast<double>(N)));
}

TEST(LimitPath, ZeroSkewMatchesFreePath) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"b", {0.3, -0.2}}, {"theta", {0.5}},
                                         {"sigma", {{1.0, 0.0}, {0.5, 1.0}}}});
  RandomStream a(4, 2), b(4, 2);
  const PathSample p = simulate_limit_path(*f, 0.1, Vec::Constant(1, 0.2), 0.5, 0.01, a);
  const PathSample q = simulate_free_path(*f, 0.1, Vec::Constant(1, 0.2), 0.5, 0.01, b);
  ASSERT_EQ(p.states.size(), q.states.size());
  for (std::size_t i = 0; i < p.states.size(); ++i) {
    EXPECT_EQ(p.times[i], q.times[i]);
    EXPECT_EQ(p.states[i], q.states[i]);
  }
  EXPECT_TRUE(p.events.empty());
}

TEST(LimitPath, RecordIntervalEndsAtHorizon) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}});
  RandomStream rng(1, 1);
  const PathSample p = simulate_free_path(*f, 0.0, Vec(0), 1.0, 0.003, rng, 0.1);
  EXPECT_EQ(p.times.size(), 11u);
  EXPECT_DOUBLE_EQ(p.times.back(), 1.0);
  EXPECT_EQ(p.steps, 334u);
}

TEST(LimitPath, Fig2WindsClockwise) {
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  double lim = 0.0, free = 0.0;
  const int N = 40;
  for (int i = 0; i < N; ++i) {
    RandomStream a(31, i), b(32, i);
    lim += winding_angle(simulate_limit_path(*f, 2.0, Vec::Constant(1, 2.0), 10.0, 1e-3, a, 0.01)).angle;
    free += winding_angle(simulate_free_path(*f, 2.0, Vec::Constant(1, 2.0), 10.0, 1e-3, b, 0.01)).angle;
  }
  EXPECT_LT(lim / N, 0.0);
  EXPECT_GT(free / N, 0.0);
}

TEST(Generator, ShortTimeExpansion) {
  // Zero diffusion: E f(Z_t) - f - t L f is the O(t^2) remainder of the flow.
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"b", {0.3, -0.2}},
                                         {"sigma", {{0.0, 0.0}, {0.0, 0.0}}}});
  for (const char* name : {"x2", "xy", "y2"}) {
    const auto tf = make_test_function(name, 2);
    std::vector<std::pair<double, double>> pts;
    const Vec z = pt(0.4, -0.3);
    for (double t : {0.1, 0.05, 0.025, 0.0125}) {
      RandomStream rng(0, 0);
      const PathSample p = simulate_free_path(*f, z(0), z.tail(1), t, t / 4, rng);
      pts.emplace_back(t, std::abs(tf->value(p.states.back()) - tf->value(z) - t * apply_generator(*f, *tf, z)));
    }
    EXPECT_GE(fit_rate(pts).slope, 1.95) << name;
  }
}
