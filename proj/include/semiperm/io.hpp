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

#include "semiperm/oracles.hpp"
#include "semiperm/sim_membrane.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace semiperm {

/// FNV-1a over the compact dump of j (object keys are sorted by the json library).
inline std::uint64_t config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/*!
 * CSV with a one-line comment header carrying the config hash:
 *
 *   # semiperm config_hash=<16 hex digits>
 *   col1,col2,...
 *
 * Reals are written with 17 significant digits.
 */
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::uint64_t hash, const std::vector<std::string>& columns)
      : os_(os), columns_(columns.size()) {
    os_ << "# semiperm config_hash=" << hash_hex(hash) << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << "\n";
    os_ << std::setprecision(17);
  }

  CsvWriter& operator<<(double v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(long v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(int v) { return *this << static_cast<long>(v); }
  CsvWriter& operator<<(std::uint64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(const std::string& v) {
    sep();
    if (v.find_first_of(",\"\n") == std::string::npos) {
      os_ << v;
    } else {
      os_ << '"';
      for (char c : v) os_ << (c == '"' ? "\"\"" : std::string(1, c));
      os_ << '"';
    }
    return *this;
  }
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  CsvWriter& operator<<(const Vec& v) {
    for (int i = 0; i < v.size(); ++i) *this << v(i);
    return *this;
  }

  void end_row() {
    if (field_ != columns_)
      throw Error(ErrorKind::io_failure, "csv row has " + std::to_string(field_) + " fields, expected " +
                                             std::to_string(columns_));
    os_ << "\n";
    field_ = 0;
  }

 private:
  void sep() {
    if (field_++) os_ << ",";
  }

  std::ostream& os_;
  std::size_t columns_;
  std::size_t field_ = 0;
};

namespace detail {

inline std::vector<std::string> indexed(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

inline void append(std::vector<std::string>& a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Columns: start_k, start_y1..n, exit_side, tau, exit_x, exit_y1..n, sup_dy2, steps, fallback_steps, launches.
inline void write_exit_records_csv(std::ostream& os, const std::vector<ExitRecord>& recs, int n, std::uint64_t hash) {
  std::vector<std::string> cols{"start_k"};
  detail::append(cols, detail::indexed("start_y", n));
  detail::append(cols, {"exit_side", "tau", "exit_x"});
  detail::append(cols, detail::indexed("exit_y", n));
  detail::append(cols, {"sup_dy2", "steps", "fallback_steps", "launches"});
  CsvWriter w(os, hash, cols);
  for (const auto& r : recs) {
    w << r.start_k << r.start_y << r.exit_side << r.tau << r.exit_x << r.exit_y << r.sup_dy2 << r.steps
      << r.fallback_steps << static_cast<std::uint64_t>(r.launches);
    w.end_row();
  }
}

/// Columns: t, x, y1..n.
inline void write_path_csv(std::ostream& os, const PathSample& path, std::uint64_t hash) {
  const int n = path.states.empty() ? 0 : static_cast<int>(path.states.front().size()) - 1;
  std::vector<std::string> cols{"t", "x"};
  detail::append(cols, detail::indexed("y", n));
  CsvWriter w(os, hash, cols);
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    w << path.times[i] << path.states[i];
    w.end_row();
  }
}

/// Columns: time, k, side, sojourn, y1..n.
inline void write_events_csv(std::ostream& os, const PathSample& path, int n, std::uint64_t hash) {
  std::vector<std::string> cols{"time", "k", "side", "sojourn"};
  detail::append(cols, detail::indexed("y", n));
  CsvWriter w(os, hash, cols);
  for (const auto& e : path.events) {
    w << e.time << e.k << e.side << e.sojourn << e.y;
    w.end_row();
  }
}

/// Row key for exit-moment tables.
struct MomentKey {
  std::string scenario;
  double epsilon = 0.0;
  long k = 0;
  Vec y;
};

/*!
 * Columns: scenario, eps, k, y1..n, source, p_plus, p_minus, mean_X,
 * mean_X2, mean_tau, mean_dY1..n, cov_YY11..nn (row major), cross_XY1..n,
 * samples. source is "mc" or "asymptotic".
 */
inline std::vector<std::string> exit_moment_columns(int n) {
  std::vector<std::string> cols{"scenario", "eps", "k"};
  detail::append(cols, detail::indexed("y", n));
  detail::append(cols, {"source", "p_plus", "p_minus", "mean_X", "mean_X2", "mean_tau"});
  detail::append(cols, detail::indexed("mean_dY", n));
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) cols.push_back("cov_YY" + std::to_string(i) + std::to_string(j));
  detail::append(cols, detail::indexed("cross_XY", n));
  cols.push_back("samples");
  return cols;
}

inline void write_exit_moments_row(CsvWriter& w, const MomentKey& key, const std::string& source,
                                   const ExitMoments& m) {
  w << key.scenario << key.epsilon << key.k << key.y << source << m.p_plus << m.p_minus << m.mean_X << m.mean_X2
    << m.mean_tau << m.mean_dY;
  for (int i = 0; i < m.cov_YY.rows(); ++i)
    for (int j = 0; j < m.cov_YY.cols(); ++j) w << m.cov_YY(i, j);
  w << m.cross_XY << static_cast<std::uint64_t>(m.samples);
  w.end_row();
}

// ---------------------------------------------------------------------------
// Binary path frame.
//
// Layout (all integers and reals little-endian):
//   magic "SPPF" | u32 version | u64 config hash | u32 dim | u32 flags
//   | u64 point count | u64 event count
//   | point count x (f64 t, dim x f64 state)
//   | event count x (f64 time, i64 k, i32 side, f64 sojourn, (dim-1) x f64 y)
// flags bit 0 marks a truncated path.

inline constexpr std::uint32_t kPathFrameVersion = 1;

namespace detail {

template <class T>
using uint_of = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::array<unsigned char, sizeof(T)> b;
  uint_of<T> u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T)))
    throw Error(ErrorKind::io_failure, "path frame truncated");
  uint_of<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<uint_of<T>>(b[i]) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_path_frame(std::ostream& os, const PathSample& path, std::uint64_t hash) {
  using detail::put_le;
  const std::uint32_t dim = path.states.empty() ? 0 : static_cast<std::uint32_t>(path.states.front().size());
  os.write("SPPF", 4);
  put_le<std::uint32_t>(os, kPathFrameVersion);
  put_le<std::uint64_t>(os, hash);
  put_le<std::uint32_t>(os, dim);
  put_le<std::uint32_t>(os, path.truncated ? 1u : 0u);
  put_le<std::uint64_t>(os, path.times.size());
  put_le<std::uint64_t>(os, path.events.size());
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    put_le<double>(os, path.times[i]);
    for (std::uint32_t c = 0; c < dim; ++c) put_le<double>(os, path.states[i](c));
  }
  for (const auto& e : path.events) {
    put_le<double>(os, e.time);
    put_le<std::int64_t>(os, e.k);
    put_le<std::int32_t>(os, e.side);
    put_le<double>(os, e.sojourn);
    for (std::uint32_t c = 0; c + 1 < dim; ++c) put_le<double>(os, e.y(c));
  }
  if (!os) throw Error(ErrorKind::io_failure, "failed to write path frame");
}

struct PathFrame {
  std::uint64_t hash = 0;
  PathSample path;
};

inline PathFrame read_path_frame(std::istream& is) {
  using detail::get_le;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SPPF", 4) != 0)
    throw Error(ErrorKind::io_failure, "not a path frame");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kPathFrameVersion)
    throw Error(ErrorKind::io_failure, "unsupported path frame version " + std::to_string(version));
  PathFrame f;
  f.hash = get_le<std::uint64_t>(is);
  const auto dim = get_le<std::uint32_t>(is);
  if (dim > static_cast<std::uint32_t>(kMaxDim)) throw Error(ErrorKind::io_failure, "path frame dimension too large");
  f.path.truncated = (get_le<std::uint32_t>(is) & 1u) != 0;
  const auto points = get_le<std::uint64_t>(is);
  const auto events = get_le<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < points; ++i) {
    f.path.times.push_back(get_le<double>(is));
    Vec s(dim);
    for (std::uint32_t c = 0; c < dim; ++c) s(c) = get_le<double>(is);
    f.path.states.push_back(s);
  }
  for (std::uint64_t i = 0; i < events; ++i) {
    CrossingEvent e;
    e.time = get_le<double>(is);
    e.k = static_cast<long>(get_le<std::int64_t>(is));
    e.side = get_le<std::int32_t>(is);
    e.sojourn = get_le<double>(is);
    e.y = Vec(dim > 0 ? dim - 1 : 0);
    for (std::uint32_t c = 0; c + 1 < dim; ++c) e.y(c) = get_le<double>(is);
    f.path.events.push_back(e);
  }
  return f;
}

}  // namespace semiperm
