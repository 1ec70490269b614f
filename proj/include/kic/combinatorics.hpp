#pragma once

// Counting valid kIC responses: a response to a k-item query is a graph on k
// vertices made of disjoint cliques. g(k,i) counts realizations with exactly i
// cliques through the largest-clique recursion h(k,i,j), with the
// 1/(1+rho*) correction for repeated largest cliques.
//
// The recursion is evaluated exactly as stated, in rational arithmetic. It
// agrees with the set-partition count (Stirling numbers of the second kind)
// for small k but not everywhere: the correction uses the maximum possible
// number of repeated largest cliques rather than the actual number, so e.g.
// g(10,4) comes out as 32005 where brute force gives 34105, and for k >= 24
// some values are not even integers. brute_force_partition_count is the
// independent check.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "kic/types.hpp"

namespace kic::comb {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Integer binomial(unsigned n, unsigned r) {
  if (r > n) return 0;
  Integer out = 1;
  for (unsigned t = 1; t <= r; ++t) {
    out *= (n - r + t);
    out /= t;
  }
  return out;
}

inline unsigned ceil_div(unsigned a, unsigned b) { return (a + b - 1) / b; }

namespace detail {
// floor(min((k-j-i)/(j-1), (k-j)/j)) for j == l. The recursion also needs
// i = 1, which the public entry point rejects.
inline unsigned rho_unchecked(unsigned k, unsigned i, unsigned j, unsigned l) {
  if (j != l) return 0;
  const int a = static_cast<int>(k) - static_cast<int>(j) - static_cast<int>(i);
  if (a < 0) return 0;
  return std::min(static_cast<unsigned>(a) / (j - 1), (k - j) / j);
}
}  // namespace detail

// Defined for i,j,k >= 2, k > j >= l, i <= k; zero unless j == l.
inline unsigned rho_star(unsigned k, unsigned i, unsigned j, unsigned l) {
  if (i < 2 || j < 2 || k < 2 || !(k > j && j >= l) || i > k)
    throw ConfigError("rho* arguments out of range: (" + std::to_string(k) +
                      "," + std::to_string(i) + "," + std::to_string(j) + "," +
                      std::to_string(l) + ")");
  return detail::rho_unchecked(k, i, j, l);
}

// Memoized h/g table. Thread-safe.
class CountTable {
 public:
  static constexpr unsigned kMaxK = 64;

  Rational h(unsigned k, unsigned i, unsigned j) {
    check(k, i);
    if (j < 1 || j > k) return 0;
    std::lock_guard lock(mu_);
    return h_locked(k, i, j);
  }

  Rational g(unsigned k, unsigned i) {
    check(k, i);
    std::lock_guard lock(mu_);
    return g_locked(k, i);
  }

  // Number of valid responses to a k-item query over N classes.
  Rational f(unsigned k, unsigned n) {
    if (k < 2) throw ConfigError("f(k,N) needs k >= 2");
    if (n < 1) throw ConfigError("f(k,N) needs N >= 1");
    Rational total = 0;
    for (unsigned i = 1; i <= std::min(n, k); ++i) total += g(k, i);
    return total;
  }

 private:
  static void check(unsigned k, unsigned i) {
    if (k < 1 || k > kMaxK || i < 1 || i > k)
      throw ConfigError("count table arguments out of range: k=" +
                        std::to_string(k) + " i=" + std::to_string(i));
  }

  Rational h_locked(unsigned k, unsigned i, unsigned j) {
    if (i == k) return j == 1 ? 1 : 0;
    if (i == 1) return j == k ? 1 : 0;
    if (j == 1) return 0;
    if (j < ceil_div(k, i) || j > k - i + 1) return 0;
    auto key = std::make_tuple(k, i, j);
    if (auto it = h_.find(key); it != h_.end()) return it->second;

    // Largest clique has j items; the other k-j items form i-1 cliques whose
    // largest has l <= j items.
    const unsigned rest = k - j;
    const unsigned lo = ceil_div(rest, i - 1);
    const unsigned hi = std::min(j, rest - (i - 1) + 1);
    Rational sum = 0;
    for (unsigned l = lo; l <= hi; ++l) {
      const Rational sub = h_locked(rest, i - 1, l);
      if (sub == 0) continue;
      const unsigned rho = detail::rho_unchecked(k, i - 1, j, l);
      sum += sub / Rational(1 + rho);
    }
    Rational out = Rational(binomial(k, j)) * sum;
    h_.emplace(key, out);
    return out;
  }

  Rational g_locked(unsigned k, unsigned i) {
    if (i == 1 || i == k) return 1;
    Rational sum = 0;
    for (unsigned j = ceil_div(k, i); j <= k - i + 1; ++j) sum += h_locked(k, i, j);
    return sum;
  }

  std::mutex mu_;
  std::map<std::tuple<unsigned, unsigned, unsigned>, Rational> h_;
};

inline CountTable& default_table() {
  static CountTable table;
  return table;
}

inline Rational h(unsigned k, unsigned i, unsigned j) { return default_table().h(k, i, j); }
inline Rational g(unsigned k, unsigned i) { return default_table().g(k, i); }
inline Rational f(unsigned k, unsigned n) { return default_table().f(k, n); }

inline double log2_rational(const Rational& r) {
  // Values here are far below the double range limit for k <= 64.
  return std::log2(static_cast<double>(boost::multiprecision::numerator(r))) -
         std::log2(static_cast<double>(boost::multiprecision::denominator(r)));
}

// C(k,2) - log2 f(k,N): bits of the 2^C(k,2) incidence patterns ruled out.
inline double redundancy_bits(unsigned k, unsigned n) {
  if (k < 2) throw ConfigError("redundancy needs k >= 2");
  const double pairs = static_cast<double>(k) * (k - 1) / 2.0;
  return pairs - log2_rational(f(k, n));
}

inline std::string to_string(const Rational& r) {
  if (boost::multiprecision::denominator(r) == 1)
    return boost::multiprecision::numerator(r).str();
  return boost::multiprecision::numerator(r).str() + "/" +
         boost::multiprecision::denominator(r).str();
}

// Enumerates set partitions of {1..k} as restricted growth strings and
// counts those with exactly i blocks.
inline std::uint64_t brute_force_partition_count(unsigned k, unsigned i) {
  if (k > 12) throw ConfigError("brute-force enumeration limited to k <= 12");
  if (k == 0) return i == 0 ? 1 : 0;
  std::vector<unsigned> a(k, 0), maxp(k, 0);  // maxp[t] = max(a[0..t-1])
  std::uint64_t count = 0;
  // Iterative RGS walk: a[0] = 0, a[t] <= 1 + max(a[0..t-1]).
  while (true) {
    unsigned blocks = 0;
    for (unsigned t = 0; t < k; ++t) blocks = std::max(blocks, a[t] + 1);
    if (blocks == i) ++count;
    int t = static_cast<int>(k) - 1;
    while (t > 0 && a[t] == maxp[t] + 1) --t;
    if (t == 0) break;
    ++a[t];
    for (unsigned u = t + 1; u < k; ++u) {
      maxp[u] = std::max(maxp[u - 1], a[u - 1]);
      a[u] = 0;
    }
  }
  return count;
}

}  // namespace kic::comb
