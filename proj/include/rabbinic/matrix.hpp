#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

namespace rabbinic {

/// Row-major double matrix; rows are vectors (embeddings, batch items).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Shortest representation that reads back to the same value.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// Shortest float representation (word2vec files store single precision).
inline std::string format_float(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  return std::string(buf, p);
}

/// Strict full-field parse; false on any trailing garbage.
inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace rabbinic
