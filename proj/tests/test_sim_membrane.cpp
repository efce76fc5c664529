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
#include "semiperm/sim_membrane.hpp"
#include "semiperm/stats.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <vector>

using namespace semiperm;
using nlohmann::json;

namespace {

FieldPtr oned(double b, double beta) {
  return build_scenario(json{{"name", "oned-skew"}, {"b", b}, {"beta", beta}});
}

FieldPtr plane(double beta, double theta) {
  return build_scenario(json{{"name", "constant"}, {"n", 1}, {"b", {0.3, 0.2}}, {"beta", beta},
                             {"theta", {theta}}, {"sigma", {{1.0, 0.0}, {0.5, 1.0}}}});
}

SimConfig config(double eps, std::size_t N, std::uint64_t seed) {
  SimConfig cfg;
  cfg.epsilon = eps;
  cfg.path_count = N;
  cfg.seed = seed;
  return cfg;
}

double p_plus(const std::vector<ExitRecord>& recs) {
  double s = 0.0;
  for (const auto& r : recs) s += r.exit_side > 0;
  return s / static_cast<double>(recs.size());
}

double se_binom(double p, std::size_t n) { return std::sqrt(p * (1 - p) / static_cast<double>(n)); }

}  // namespace

TEST(EmStep, ZeroSkewIsPlainEm) {
  const FieldPtr f = plane(0.0, 0.0);
  const StripChart chart(f, 2, 0.2, 0.1);
  RandomStream rng(1, 0);
  for (int i = 0; i < 200; ++i) {
    const double x = 0.02 * (rng.uniform() - 0.5);
    const Vec y = Vec::Constant(1, rng.normal());
    Vec dW(2);
    dW << 0.01 * rng.normal(), 0.01 * rng.normal();
    const ChartStep s = em_step_strip(chart, x, y, 1e-4, dW);
    const ChartPoint q = plain_em_step(*f, 0.2, x, y, 1e-4, dW);
    EXPECT_FALSE(s.fallback);
    EXPECT_EQ(s.state.x, q.x);
    EXPECT_EQ(s.state.y, q.y);
  }
}

TEST(EmStep, ZeroNoiseZeroDrift) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"beta", 0.5}, {"theta", {0.3}}});
  const StripChart chart(f, 0, 0.0, 0.1);
  for (double x : {-0.03, 0.0, 0.04}) {
    const ChartStep s = em_step_strip(chart, x, Vec::Constant(1, 0.7), 1e-4, Vec::Zero(2));
    EXPECT_NEAR(s.state.x, x, 1e-15);
    EXPECT_NEAR(s.state.y(0), 0.7, 1e-12);
  }
}

TEST(BridgeSampler, HitTimeMatchesFirstPassageLaw) {
  // One coarse step of standard BM from 0 with level a: the hit time, when
  // it falls in the step, must follow P(T_a <= s) = 2 (1 - Phi(a / sqrt s)).
  const double a = 0.8;
  const std::size_t N = 200000;
  std::vector<double> hits;
  for (std::size_t i = 0; i < N; ++i) {
    RandomStream rng(3, i);
    const double x2 = rng.normal();
    const double q = detail::bridge_hit_probability(a, 0.0, x2, 1.0, 1.0);
    if (q >= 1.0 || rng.uniform() < q) hits.push_back(detail::bridge_hit_fraction(a, 0.0, x2, 1.0, 1.0, rng));
  }
  const boost::math::normal_distribution<double> nd;
  double worst = 0.0;
  std::sort(hits.begin(), hits.end());
  for (double s : {0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double emp = static_cast<double>(std::upper_bound(hits.begin(), hits.end(), s) - hits.begin()) / N;
    worst = std::max(worst, std::abs(emp - 2.0 * boost::math::cdf(boost::math::complement(nd, a / std::sqrt(s)))));
  }
  EXPECT_LT(worst, 0.004);
}

TEST(BridgeSampler, TangentialConditionalMean) {
  // Given x(s) = a, y(s) regresses on x with slope S01 / S00.
  const FieldPtr f = plane(0.0, 0.0);
  const Vec p = Vec::Zero(2);
  double m = 0.0, m2 = 0.0;
  const int N = 50000;
  for (int i = 0; i < N; ++i) {
    RandomStream rng(4, i);
    const double v = detail::bridge_tangential_at(0.25, 1.0, 0.0, 0.0, Vec::Zero(1), Vec::Zero(1), *f, p, 1.0, rng)(0);
    m += v;
    m2 += v * v;
  }
  m /= N;
  m2 = m2 / N - m * m;
  EXPECT_NEAR(m, 0.5, 0.01);
  EXPECT_NEAR(m2, 0.25 * 0.75 * 1.0, 0.01);
}

TEST(SampleExit, SymmetricCase) {
  const double eps = 0.1;
  const MembraneLayout layout(oned(0.0, 0.0), eps);
  const auto recs = sample_exits(layout, 0, Vec(0), config(eps, 100000, 11));
  const double p = p_plus(recs);
  EXPECT_NEAR(p, 0.5, 3.0 * se_binom(0.5, recs.size()));
  std::vector<double> t;
  for (const auto& r : recs) t.push_back(r.tau / (eps * eps));
  const MeanCI ci = mc_mean_ci(t);
  EXPECT_NEAR(ci.mean, 1.0, 3.0 * ci.se + 0.01);
}

TEST(SampleExit, OnedSkewPenetration) {
  const double eps = 0.1;
  const MembraneLayout layout(oned(0.0, 0.5), eps);
  const auto recs = sample_exits(layout, 0, Vec(0), config(eps, 100000, 12));
  EXPECT_NEAR(p_plus(recs), 0.525, 3.0 * se_binom(0.525, recs.size()));
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_GT(recs[i].tau, 0.0);
    EXPECT_TRUE(recs[i].exit_x == eps || recs[i].exit_x == -eps);
  }
}

TEST(SampleExit, GeometricTerm) {
  const double eps = 0.1;
  const FieldPtr f = build_scenario(json{{"name", "oned-skew"}, {"beta", 0.0},
                                         {"density", {{"kind", "sine"}, {"offset", 2.0}, {"amplitude", 1.0}}}});
  const MembraneLayout layout(f, eps);
  const auto recs = sample_exits(layout, 0, Vec(0), config(eps, 100000, 13));
  EXPECT_NEAR(p_plus(recs), 0.4875, 3.0 * se_binom(0.4875, recs.size()));
}

TEST(SampleExit, Determinism) {
  const MembraneLayout layout(plane(0.4, 0.5), 0.1);
  const SimConfig cfg = config(0.1, 300, 14);
  const auto a = sample_exits(layout, 0, Vec::Constant(1, 0.2), cfg, 1, 1);
  const auto b = sample_exits(layout, 0, Vec::Constant(1, 0.2), cfg, 1, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tau, b[i].tau);
    EXPECT_EQ(a[i].exit_y, b[i].exit_y);
    EXPECT_EQ(a[i].exit_side, b[i].exit_side);
  }
}

TEST(SampleExit, HorizonExhaustion) {
  const MembraneLayout layout(oned(0.0, 0.0), 0.1);
  SimConfig cfg = config(0.1, 1, 0);
  cfg.horizon_factor = 1e-3;
  RandomStream rng(0, 0);
  try {
    sample_exit(layout, 0, Vec(0), cfg, rng);
    FAIL() << "expected horizon exhaustion";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::horizon_exhausted);
  }
}

TEST(SampleExit, SmallnessViolation) {
  const MembraneLayout layout(oned(0.0, 3.0), 0.1);
  RandomStream rng(0, 0);
  EXPECT_THROW(sample_exit(layout, 0, Vec(0), config(0.1, 1, 0), rng), Error);
}

TEST(SampleExit, MomentsBoundedAcrossEps) {
  const FieldPtr f = plane(0.4, 0.5);
  std::vector<std::vector<double>> stats;
  for (double eps : {0.2, 0.1, 0.05}) {
    const MembraneLayout layout(f, eps);
    const auto recs = sample_exits(layout, 0, Vec::Constant(1, 0.0), config(eps, 20000, 15));
    std::vector<double> s(5, 0.0);
    for (const auto& r : recs) {
      const double t = r.tau / (eps * eps);
      s[0] += t;
      s[1] += t * t;
      s[2] += t * t * t;
      s[3] += std::exp(0.1 * t);
      s[4] += r.sup_dy2 / (eps * eps);
    }
    for (double& v : s) v /= static_cast<double>(recs.size());
    stats.push_back(s);
  }
  for (int j = 0; j < 5; ++j) {
    double lo = 1e300, hi = 0.0;
    for (const auto& s : stats) {
      lo = std::min(lo, s[j]);
      hi = std::max(hi, s[j]);
    }
    EXPECT_LE(hi / lo, 2.0) << "statistic " << j;
  }
}

TEST(Bernoulli, ZeroSkewSides) {
  const double eps = 0.1;
  SimConfig cfg = config(eps, 40000, 16);
  cfg.scheme = Scheme::bernoulli;
  const MembraneLayout layout(oned(0.0, 0.0), eps);
  const auto recs = sample_exits(layout, 0, Vec(0), cfg);
  EXPECT_NEAR(p_plus(recs), 0.5, 3.0 * se_binom(0.5, recs.size()));
  EXPECT_GT(recs.front().launches, 0u);
}

TEST(Bernoulli, MeanExitPosition) {
  const double eps = 0.1;
  SimConfig cfg = config(eps, 100000, 17);
  cfg.scheme = Scheme::bernoulli;
  const MembraneLayout layout(oned(0.0, 0.5), eps);
  const auto recs = sample_exits(layout, 0, Vec(0), cfg);
  std::vector<double> x;
  for (const auto& r : recs) x.push_back(r.exit_x / (eps * eps));
  const MeanCI ci = mc_mean_ci(x);
  EXPECT_NEAR(ci.mean, 0.5, 3.0 * ci.se);
}

TEST(Bernoulli, AgreesWithTransformedScheme) {
  const double eps = 0.1;
  const MembraneLayout layout(oned(0.0, 0.5), eps);
  SimConfig cfg = config(eps, 40000, 18);
  const auto a = sample_exits(layout, 0, Vec(0), cfg);
  cfg.scheme = Scheme::bernoulli;
  const auto b = sample_exits(layout, 0, Vec(0), cfg, 2);
  const double pa = p_plus(a), pb = p_plus(b);
  EXPECT_NEAR(pa, pb, 3.0 * std::hypot(se_binom(pa, a.size()), se_binom(pb, b.size())));
}

TEST(Bernoulli, LaunchTooLong) {
  SimConfig cfg = config(0.1, 1, 0);
  cfg.scheme = Scheme::bernoulli;
  cfg.launch_frac = 0.6;
  const FieldPtr f = build_scenario(json{{"name", "oned-skew"}, {"beta", 0.0}, {"density", 0.5}});
  const MembraneLayout layout(f, 0.1);
  RandomStream rng(0, 0);
  EXPECT_THROW(bernoulli_crossing_step(layout, 0, Vec(0), cfg, rng), Error);
}

TEST(SimulatePath, EventsAreAdjacent) {
  const double eps = 0.05;
  const MembraneLayout layout(plane(0.4, 0.5), eps);
  RandomStream rng(5, 0);
  const PathSample p = simulate_path(layout, 0.01, Vec::Constant(1, 0.0), 1.0, config(eps, 1, 0), rng);
  ASSERT_GT(p.events.size(), 10u);
  EXPECT_EQ(p.times.front(), 0.0);
  EXPECT_DOUBLE_EQ(p.times.back(), 1.0);
  for (std::size_t i = 1; i < p.times.size(); ++i) EXPECT_GE(p.times[i], p.times[i - 1]);
  for (std::size_t i = 1; i < p.events.size(); ++i) {
    EXPECT_EQ(std::abs(p.events[i].k - p.events[i - 1].k), 1);
    EXPECT_EQ(p.events[i].k - p.events[i - 1].k, p.events[i].side);
    EXPECT_GT(p.events[i].sojourn, 0.0);
  }
}

TEST(SimulatePath, Determinism) {
  const MembraneLayout layout(plane(0.4, 0.5), 0.1);
  RandomStream a(6, 3), b(6, 3);
  const PathSample p = simulate_path(layout, 0.0, Vec::Constant(1, 0.1), 0.5, config(0.1, 1, 0), a);
  const PathSample q = simulate_path(layout, 0.0, Vec::Constant(1, 0.1), 0.5, config(0.1, 1, 0), b);
  ASSERT_EQ(p.states.size(), q.states.size());
  for (std::size_t i = 0; i < p.states.size(); ++i) EXPECT_EQ(p.states[i], q.states[i]);
  ASSERT_EQ(p.events.size(), q.events.size());
  for (std::size_t i = 0; i < p.events.size(); ++i) EXPECT_EQ(p.events[i].time, q.events[i].time);
}

TEST(SimulatePath, DeterministicLine) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"n", 1}, {"b", {1.0, 0.5}},
                                         {"sigma", {{0.0, 0.0}, {0.0, 0.0}}}});
  const MembraneLayout layout(f, 0.1);
  RandomStream rng(0, 0);
  const PathSample p = simulate_path(layout, 0.05, Vec::Constant(1, 0.0), 0.5, config(0.1, 1, 0), rng);
  for (std::size_t i = 0; i < p.states.size(); ++i) {
    EXPECT_NEAR(p.states[i](0), 0.05 + p.times[i], 1e-12);
    EXPECT_NEAR(p.states[i](1), 0.5 * p.times[i], 1e-12);
  }
  ASSERT_EQ(p.events.size(), 5u);
  EXPECT_NEAR(p.events.front().time, 0.05, 1e-12);
}

TEST(SimulatePath, BoxExitTruncates) {
  const FieldPtr f = build_scenario(json{{"name", "constant"}, {"b", {1.0}}, {"sigma", {{0.0}}}});
  const MembraneLayout layout(f, 0.1);
  SimConfig cfg = config(0.1, 1, 0);
  cfg.box_lo = -1.0;
  cfg.box_hi = 0.35;
  RandomStream rng(0, 0);
  const PathSample p = simulate_path(layout, 0.0, Vec(0), 2.0, cfg, rng);
  EXPECT_TRUE(p.truncated);
  EXPECT_LT(p.final_time(), 2.0);
  EXPECT_THROW(simulate_path(layout, 0.5, Vec(0), 1.0, cfg, rng), Error);
}

TEST(SimulatePath, ZeroSkewMatchesFreeDiffusion) {
  const double eps = 0.2;
  const FieldPtr f = oned(0.3, 0.0);
  const MembraneLayout layout(f, eps);
  SimConfig cfg = config(eps, 1, 0);
  cfg.record_interval = 1.0;
  const int N = 4000;
  std::vector<double> a, b;
  for (int i = 0; i < N; ++i) {
    RandomStream r1(7, i), r2(8, i);
    a.push_back(simulate_path(layout, 0.0, Vec(0), 1.0, cfg, r1).states.back()(0));
    b.push_back(simulate_free_path(*f, 0.0, Vec(0), 1.0, 1e-3, r2, 1.0).states.back()(0));
  }
  // 1% two-sample critical value.
  EXPECT_LT(ks_statistic(a, b), 1.63 * std::sqrt(2.0 / N));
}

TEST(SimulatePath, Fig2EventCount) {
  const double eps = 0.02;
  const FieldPtr f = build_scenario(json{{"name", "fig2"}});
  const MembraneLayout layout(f, eps);
  SimConfig cfg = config(eps, 1, 0);
  cfg.record_interval = 0.01;
  RandomStream rng(9, 0);
  const PathSample p = simulate_path(layout, 2.0, Vec::Constant(1, 2.0), 10.0, cfg, rng);
  const double expected = 10.0 / (eps * eps);
  const double nu = static_cast<double>(crossing_count(p, 10.0));
  EXPECT_GT(nu, 0.5 * expected);
  EXPECT_LT(nu, 2.0 * expected);
}
