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

#include "semiperm/experiments.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace semiperm;
using nlohmann::json;

namespace {

Vec yv(double v) { return Vec::Constant(1, v); }

PathSample sample_path() {
  PathSample p;
  p.times = {0.0, 0.5, 1.0};
  p.states = {make_point(0.0, yv(1.0)), make_point(0.25, yv(-1.5)), make_point(-0.125, yv(3e-17))};
  p.events.push_back(CrossingEvent{0.4, 1, yv(0.75), 1, 0.4});
  p.events.push_back(CrossingEvent{0.9, 0, yv(-2.0), -1, 0.5});
  p.truncated = true;
  return p;
}

}  // namespace

TEST(ConfigHash, StableAndKeyOrderFree) {
  const json a = json::parse(R"({"b": 1, "a": [0.1, 2]})");
  const json b = json::parse(R"({"a": [0.1, 2], "b": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"a": [0.1, 2], "b": 2})")));
  // FNV-1a of the empty object "{}".
  EXPECT_EQ(hash_hex(config_hash(json::object())).size(), 16u);
  EXPECT_EQ(config_hash(json::object()), config_hash(json::parse("{}")));
}

TEST(CsvWriter, HeaderQuotingAndPrecision) {
  std::ostringstream os;
  CsvWriter w(os, 0xabcULL, {"name", "value", "count"});
  w << std::string("a,b") << 0.1 << 3L;
  w.end_row();
  w << "plain" << 1.0 / 3.0 << -2;
  w.end_row();
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("# semiperm config_hash=0000000000000abc\nname,value,count\n", 0), 0u);
  EXPECT_NE(s.find("\"a,b\",0.10000000000000001,3\n"), std::string::npos);
  EXPECT_NE(s.find("plain,0.33333333333333331,-2\n"), std::string::npos);
}

TEST(CsvWriter, RejectsShortRows) {
  std::ostringstream os;
  CsvWriter w(os, 1, {"a", "b"});
  w << 1.0;
  EXPECT_THROW(w.end_row(), Error);
}

TEST(PathFrame, RoundTrip) {
  const PathSample p = sample_path();
  std::stringstream ss;
  write_path_frame(ss, p, 0x1234);
  const PathFrame f = read_path_frame(ss);
  EXPECT_EQ(f.hash, 0x1234u);
  EXPECT_TRUE(f.path.truncated);
  ASSERT_EQ(f.path.times.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(f.path.times[i], p.times[i]);
    EXPECT_EQ(f.path.states[i], p.states[i]);
  }
  ASSERT_EQ(f.path.events.size(), 2u);
  EXPECT_EQ(f.path.events[1].k, 0);
  EXPECT_EQ(f.path.events[1].side, -1);
  EXPECT_EQ(f.path.events[0].y, yv(0.75));
  EXPECT_EQ(f.path.events[1].sojourn, 0.5);
}

TEST(PathFrame, LittleEndianLayout) {
  std::stringstream ss;
  write_path_frame(ss, sample_path(), 0x0102030405060708ULL);
  const std::string b = ss.str();
  ASSERT_GE(b.size(), 40u);
  EXPECT_EQ(b.substr(0, 4), "SPPF");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 0x08);
  EXPECT_EQ(b[15], 0x01);
  // header 40 bytes, 3 points of 3 doubles, 2 events of 36 bytes
  EXPECT_EQ(b.size(), 40u + 3 * 24 + 2 * 36);
}

TEST(PathFrame, RejectsGarbage) {
  std::stringstream ss("XXXXnot a frame");
  EXPECT_THROW(read_path_frame(ss), Error);
  std::stringstream full;
  write_path_frame(full, sample_path(), 7);
  std::stringstream cut(full.str().substr(0, 50));
  EXPECT_THROW(read_path_frame(cut), Error);
}

TEST(Svg, RendersSeriesAndEscapes) {
  Plot p{"a < b", "eps", "err", true, true, false, {}};
  p.series.push_back(Series{"s&t", {0.1, 0.2, 0.4}, {1e-3, 4e-3, 1.6e-2}, true});
  const std::string s = render_svg(p);
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("a &lt; b"), std::string::npos);
  EXPECT_NE(s.find("s&amp;t"), std::string::npos);
  EXPECT_NE(s.find("<polyline"), std::string::npos);
}

TEST(ExperimentConfig, ParsesAndValidates) {
  const json j = json::parse(R"({"experiment": "exit-stats", "scenario": {"name": "oned-skew"},
                                 "epsilons": [0.2, 0.1], "paths": 50, "output": "x"})");
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  EXPECT_NO_THROW(c.validate());
  ExperimentConfig d = c;
  d.output = "elsewhere";
  EXPECT_EQ(c.hash(), d.hash());
  d.seed = 2;
  EXPECT_NE(c.hash(), d.hash());

  json bad = j;
  bad["epsilons"] = {0.1, 0.2};
  EXPECT_THROW(ExperimentConfig::from_json(bad).validate(), Error);
  bad = j;
  bad["typo"] = 1;
  EXPECT_THROW(ExperimentConfig::from_json(bad), Error);
  bad = j;
  bad["experiment"] = "nope";
  EXPECT_THROW(ExperimentConfig::from_json(bad).validate(), Error);
}

TEST(Experiment, DeterministicArtifacts) {
  const json j = json::parse(R"({"experiment": "exit-stats", "scenario": {"name": "oned-skew"},
                                 "epsilons": [0.2, 0.1], "paths": 400, "seed": 5,
                                 "options": {"nu_paths": 4}})");
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  std::ostringstream sa, sb;
  a.table.write(sa, c.hash());
  b.table.write(sb, c.hash());
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(summary_text(c, a), summary_text(c, b));
  EXPECT_FALSE(a.checks.empty());
}

TEST(Experiment, AssumptionFailureCarriesWitness) {
  const json j = json::parse(R"({"experiment": "exit-stats", "scenario": {"name": "oned-skew", "sigma": 0.0},
                                 "epsilons": [0.1], "paths": 10})");
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  try {
    run_experiment(c);
    FAIL() << "expected an assumption failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::assumption_failure);
    EXPECT_NE(std::string(e.what()).find("witness"), std::string::npos);
  }
  ExperimentConfig v = c;
  v.experiment = "validate";
  const ExperimentResult r = run_experiment(v);
  EXPECT_FALSE(r.passed());
}

TEST(Experiment, UnknownCheckRejected) {
  const json j = json::parse(R"({"experiment": "exit-stats", "scenario": {"name": "oned-skew"},
                                 "epsilons": [0.1], "paths": 10, "options": {"checks": ["tau_rate"]}})");
  EXPECT_THROW(run_experiment(ExperimentConfig::from_json(j)), Error);
}
