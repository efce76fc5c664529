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

#include "semiperm/membranes.hpp"
#include "semiperm/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <thread>

using namespace semiperm;
using nlohmann::json;

namespace {

FieldPtr unit_density() { return build_scenario(json{{"name", "oned-skew"}}); }

FieldPtr sine_density() {
  return build_scenario(json{{"name", "oned-skew"},
                             {"beta", 0.0},
                             {"density", {{"kind", "sine"}, {"offset", 2.0}, {"amplitude", 1.0}}}});
}

// Antiderivative of 2 + sin x.
double sine_primitive(double x) { return 2.0 * x + 1.0 - std::cos(x); }

}  // namespace

TEST(Membranes, Equidistant) {
  MembraneLayout l(unit_density(), 0.1);
  EXPECT_NEAR(l.position(5), 0.5, 1e-14);
  EXPECT_EQ(l.position(0), 0.0);
  EXPECT_NEAR(l.position(-3), -0.3, 1e-14);
}

TEST(Membranes, SineDensityOracle) {
  MembraneLayout l(sine_density(), 0.1);
  EXPECT_NEAR(l.position(1), 0.2 + (1.0 - std::cos(0.1)), 1e-12);
  EXPECT_NEAR(l.position(1), 0.2049958, 1e-7);
  for (long k = -20; k <= 20; ++k)
    EXPECT_NEAR(l.position(k), sine_primitive(0.1 * k), 1e-11) << k;
  const auto [left, right] = l.strip(0);
  EXPECT_NEAR(-left, 0.1950042, 1e-7);
  EXPECT_NEAR(right, 0.2049958, 1e-7);
}

TEST(Membranes, SpacingBounds) {
  MembraneLayout l(sine_density(), 0.05);
  for (long k = -50; k < 50; ++k) {
    const double gap = l.position(k + 1) - l.position(k);
    EXPECT_GE(gap, 0.05 * 1.0 - 1e-14);
    EXPECT_LE(gap, 0.05 * 3.0 + 1e-14);
  }
}

TEST(Membranes, Bracketing) {
  MembraneLayout l(unit_density(), 0.1);
  EXPECT_EQ(l.bracketing(0.23), (Bracket{2, 3, 2}));
  EXPECT_EQ(l.bracketing(l.position(4)), (Bracket{4, 4, 4}));
  EXPECT_EQ(l.bracketing(-0.23), (Bracket{-3, -2, -2}));
  EXPECT_EQ(l.bracketing(0.0), (Bracket{0, 0, 0}));
  for (long k = -10; k <= 10; ++k) EXPECT_EQ(l.bracketing(l.position(k)), (Bracket{k, k, k}));
}

TEST(Membranes, BracketingSineDensity) {
  MembraneLayout l(sine_density(), 0.1);
  const Bracket b = l.bracketing(0.21);
  EXPECT_EQ(b.k_lo, 1);
  EXPECT_EQ(b.k_hi, 2);
  EXPECT_LE(sine_primitive(0.1), 0.21);
  EXPECT_GE(sine_primitive(0.2), 0.21);
}

TEST(Membranes, Strip) {
  MembraneLayout l(unit_density(), 0.1);
  auto [l0, r0] = l.strip(0);
  EXPECT_NEAR(l0, -0.1, 1e-15);
  EXPECT_NEAR(r0, 0.1, 1e-15);
  auto [l3, r3] = l.strip(3);
  EXPECT_NEAR(l3, 0.2, 1e-14);
  EXPECT_NEAR(r3, 0.4, 1e-14);
}

TEST(Membranes, WindowExhaustion) {
  MembraneLayout l(unit_density(), 0.1, -1.0, 1.0, 10);
  EXPECT_NO_THROW(l.position(20));
  try {
    l.position(40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::window_exhausted);
  }
  EXPECT_THROW(l.bracketing(-5.0), Error);
}

TEST(Membranes, ExpansionRate) {
  // a_+ - (d(0) eps + d'(0) eps^2 / 2) and the mirrored quantity decay at least like eps^3.
  const FieldPtr f = sine_density();
  for (int side : {+1, -1}) {
    double prev = 0.0;
    for (double eps : {0.2, 0.1, 0.05, 0.025}) {
      MembraneLayout l(f, eps);
      const double a = side * l.position(side);
      const double err = std::abs(a - (2.0 * eps + side * 0.5 * eps * eps));
      if (prev > 0.0) EXPECT_GE(std::log2(prev / err), 3.0);
      prev = err;
    }
  }
}

TEST(Membranes, ConcurrentReads) {
  MembraneLayout l(sine_density(), 0.01);
  std::vector<std::thread> pool;
  std::vector<double> sums(4, 0.0);
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (long k = -200; k <= 200; ++k) sums[t] += l.position((t % 2 ? -1 : 1) * k);
    });
  for (auto& th : pool) th.join();
  MembraneLayout ref(sine_density(), 0.01);
  for (long k = -200; k <= 200; ++k) EXPECT_EQ(l.position(k), ref.position(k));
}

TEST(Membranes, CsvExport) {
  MembraneLayout l(unit_density(), 0.5);
  std::ostringstream os;
  l.export_csv(os, -1, 1);
  EXPECT_EQ(os.str(), "k,a_k\n-1,-0.5\n0,0\n1,0.5\n");
}
