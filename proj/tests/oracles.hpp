#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's numeric code; inputs and outputs are plain vectors.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[i][j]

inline Vec softmax(const Vec& v) {
  long double mx = v[0];
  for (double x : v) mx = std::max<long double>(mx, x);
  long double total = 0;
  std::vector<long double> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) total += e[i] = std::exp(static_cast<long double>(v[i]) - mx);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

inline Mat column_softmax(const Mat& m) {
  Mat out = m;
  for (std::size_t j = 0; j < m[0].size(); ++j) {
    Vec col;
    for (const auto& row : m) col.push_back(row[j]);
    const Vec s = softmax(col);
    for (std::size_t i = 0; i < m.size(); ++i) out[i][j] = s[i];
  }
  return out;
}

inline Vec row_softmax_mean(const Mat& m) {
  Vec beta(m[0].size(), 0.0);
  for (const auto& row : m) {
    const Vec s = softmax(row);
    for (std::size_t j = 0; j < s.size(); ++j) beta[j] += s[j];
  }
  for (double& b : beta) b /= static_cast<double>(m.size());
  return beta;
}

inline Vec matvec(const Mat& a, const Vec& v) {
  Vec out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += a[i][j] * v[j];
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One scalar GRU step (d_in = d = 1).
struct ScalarGru {
  double wz, wr, wn, uz, ur, un, bz, br, bn;
  double step(double x, double h) const {
    const double z = sigmoid(wz * x + uz * h + bz);
    const double r = sigmoid(wr * x + ur * h + br);
    const double n = std::tanh(wn * x + un * (r * h) + bn);
    return (1 - z) * n + z * h;
  }
};

// P(a) = F1 over tokens of F2 over occurrences, by explicit loops.
inline Vec aggregate(const Vec& s, const std::vector<std::vector<int>>& tokens,
                     const std::map<int, std::vector<std::size_t>>& positions, bool token_sum, bool occ_sum) {
  Vec out;
  for (const auto& pieces : tokens) {
    double acc = 0;
    bool first = true;
    for (int t : pieces) {
      double inner = 0;
      auto it = positions.find(t);
      if (it != positions.end() && !it->second.empty()) {
        bool first_occ = true;
        for (std::size_t i : it->second) {
          if (occ_sum) inner += s[i];
          else inner = first_occ ? s[i] : std::max(inner, s[i]);
          first_occ = false;
        }
      }
      if (token_sum) acc += inner;
      else acc = first ? inner : std::max(acc, inner);
      first = false;
    }
    out.push_back(acc);
  }
  return out;
}

// C(n, k) from Pascal's triangle, in exact integers.
inline std::uint64_t choose(unsigned n, unsigned k) {
  std::vector<std::vector<std::uint64_t>> t(n + 1);
  for (unsigned i = 0; i <= n; ++i) {
    t[i].assign(i + 1, 1);
    for (unsigned j = 1; j < i; ++j) t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
  }
  return t[n][k];
}

// Two-sided exact McNemar p-value by direct binomial summation.
inline double mcnemar_exact(unsigned b, unsigned c) {
  const unsigned n = b + c;
  if (n == 0) return 1.0;
  const unsigned k = std::min(b, c);
  long double tail = 0;
  for (unsigned i = 0; i <= k; ++i) tail += static_cast<long double>(choose(n, i));
  const long double p = 2.0L * tail / std::pow(2.0L, static_cast<long double>(n));
  return static_cast<double>(std::min<long double>(1.0L, p));
}

}  // namespace oracle
