#pragma once

// Closed-form query rates and the Markov-chain model of greedy triplet
// labeling.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "kic/distributions.hpp"
#include "kic/types.hpp"

namespace kic::analysis {

// ---------------------------------------------------------------------------
// Sample-by-sample scheme.

// Sum of i * pi'_i where pi'_i is the mass of the i-th consecutive group of
// k-1 classes in `ordering`. The last group may be smaller.
inline double rate_algo1(const ClassDistribution& dist, unsigned k,
                         const std::vector<ClassId>& ordering) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (ordering.size() != dist.size()) throw ConfigError("ordering is not a permutation");
  std::vector<char> seen(dist.size(), 0);
  double rate = 0.0;
  for (std::size_t pos = 0; pos < ordering.size(); ++pos) {
    const ClassId c = ordering[pos];
    if (c >= dist.size() || seen[c]) throw ConfigError("ordering is not a permutation");
    seen[c] = 1;
    rate += static_cast<double>(pos / (k - 1) + 1) * dist[c];
  }
  return rate;
}

inline double rate_algo1(const ClassDistribution& dist, unsigned k) {
  return rate_algo1(dist, k, dist.descending_order());
}

inline double rate_algo1_uniform(unsigned n, unsigned k) {
  if (k < 2 || n < 1) throw ConfigError("rate_algo1_uniform needs N >= 1, k >= 2");
  return (n + k - 1.0) / (2.0 * (k - 1.0));
}

struct Bracket {
  double first = 0.0;  // distinct class queried first
  double last = 0.0;   // distinct class queried last
};

// Exact rates on big_small(N, x) with the distinct class at either end.
inline Bracket bounds_algo1_bigsmall(unsigned n, unsigned k, double x) {
  if (!(k >= 2 && k < n)) throw ConfigError("bounds need 2 <= k < N");
  if (!(x > 0)) throw ConfigError("bounds need x > 0");
  const double N = n, K = k;
  Bracket b;
  b.first = N * (N + K - 1) / (2 * (N - 1) * (1 + x) * (K - 1)) + x / (1 + x) -
            1 / ((1 + x) * (N - 1));
  b.last = N / ((K - 1) * (1 + x)) * (x + (N + K - 3) / (2 * (N - 1)));
  return b;
}

// Large-N approximations, each valid up to O(N eps).
inline Bracket asymptotic_small_cluster(unsigned n, unsigned k, double eps) {
  const double N = n, K = k;
  return {(N * (1 + eps) + K - 3) / (2 * (K - 1)), (N + K - 1 - N * eps) / (2 * (K - 1))};
}

inline Bracket asymptotic_big_cluster(unsigned n, unsigned k, double eps) {
  const double N = n, K = k;
  return {1 + N * eps / (2 * (K - 1)), N * (2 - eps) / (2 * (K - 1))};
}

// ---------------------------------------------------------------------------
// Batch scheme.

// Survivor distribution after one round.
inline ClassDistribution evolve_distribution(const ClassDistribution& dist, unsigned k) {
  if (k < 2) throw ConfigError("k must be at least 2");
  const double N = static_cast<double>(dist.size());
  double miss = 0.0;
  for (double p : dist.probs()) miss += std::pow(1 - p, k);
  std::vector<double> out(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i)
    out[i] = (1 - std::pow(1 - dist[i], k)) / (N - miss);
  return normalized(std::move(out));
}

// Probability that a sample settles in one round.
inline double p_settle(const ClassDistribution& dist, unsigned k) {
  if (k < 2) throw ConfigError("k must be at least 2");
  double sum = 0.0;
  for (double p : dist.probs()) sum += 1 - std::pow(1 - p, k);
  return 1.0 - sum / k;
}

struct BatchPrediction {
  std::vector<double> batch_fraction;  // L_r / L
  std::vector<double> settle;          // P(s in L_r)
  std::vector<double> round_rate;      // 1 / (k P_r)
  std::vector<ClassDistribution> dist; // batch distribution entering round r
  double avg_rate = 0.0;               // over rounds 1..m
};

inline BatchPrediction rate_algo2(const ClassDistribution& dist, unsigned k, unsigned m) {
  if (m < 1) throw ConfigError("rate_algo2 needs m >= 1");
  BatchPrediction out;
  ClassDistribution cur = dist;
  double frac = 1.0, queried = 0.0, settled = 0.0;
  for (unsigned r = 0; r < m; ++r) {
    const double p = p_settle(cur, k);
    out.batch_fraction.push_back(frac);
    out.settle.push_back(p);
    out.round_rate.push_back(p > 0 ? 1.0 / (k * p) : std::numeric_limits<double>::infinity());
    out.dist.push_back(cur);
    queried += frac;
    settled += p * frac;
    frac *= 1 - p;
    cur = evolve_distribution(cur, k);
  }
  out.avg_rate = settled > 0 ? queried / (k * settled) : std::numeric_limits<double>::infinity();
  return out;
}

inline double rate_algo2_uniform(unsigned n, unsigned k) {
  const double N = n;
  const double denom = k - N * (1 - std::pow(1 - 1 / N, k));
  return denom > 0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
}

inline double rate_algo2_uniform_asymptotic(unsigned n, unsigned k) {
  return 2.0 * n / (static_cast<double>(k) * (k - 1));
}

inline double rate_algo2_bigcluster(unsigned k, double eps) {
  const double K = k;
  return 1 / (K - 1) + K * eps / ((K - 1) * (K - 1));
}

// Approximate big-class mass after one round from big_small(N, 1/eps).
inline double bigcluster_survivor_mass(unsigned k, double eps) { return 1 - k * eps; }

// ---------------------------------------------------------------------------
// Greedy triplet scheme.

struct CaseProbs {
  double a = 0, b = 0, c = 0, d = 0, e = 0;
  double sum() const { return a + b + c + d + e; }
};

inline void check_state(unsigned n, unsigned i, unsigned j) {
  if (n < 2 || !(j <= i && i + 2 <= n))
    throw ConfigError("state (" + std::to_string(i) + "," + std::to_string(j) +
                      ") out of range for N=" + std::to_string(n));
}

// Outcome probabilities of a query in state (i,j): a all match, b longer
// sample matches, c shorter matches, d the two samples match each other,
// e no match.
inline CaseProbs case_probabilities(unsigned n, unsigned i, unsigned j) {
  check_state(n, i, j);
  const double N = n, I = i, J = j;
  const double d = (N - I) * (N - J);
  return {1 / d, (N - J - 1) / d, (N - I - 1) / d, (N - I - 1) / d,
          (N - I - 1) * (N - J - 2) / d};
}

// The same, in exact arithmetic; numerators over the common denominator.
struct CaseCounts {
  long long a, b, c, d, e, denom;
};

inline CaseCounts case_counts(unsigned n, unsigned i, unsigned j) {
  check_state(n, i, j);
  const long long N = n, I = i, J = j;
  return {1, N - J - 1, N - I - 1, N - I - 1, (N - I - 1) * (N - J - 2), (N - I) * (N - J)};
}

inline double expected_settled(unsigned n, unsigned i, unsigned j) {
  check_state(n, i, j);
  const double N = n, I = i, J = j;
  return (2 * (N - I) + (N - J - 1)) / ((N - I) * (N - J));
}

struct MarkovModel {
  unsigned n = 0;
  std::vector<std::pair<unsigned, unsigned>> states;  // (i, j), i >= j
  Eigen::MatrixXd pi;                                 // row-stochastic
  std::vector<double> stationary;
  std::vector<double> temp_len_dist;                  // lengths 0..N-1
  unsigned iterations = 0;
  double residual = 0.0;
  bool used_direct_solve = false;

  std::size_t index(unsigned i, unsigned j) const {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  double prob(unsigned i, unsigned j) const { return stationary[index(i, j)]; }
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

namespace detail {

inline std::vector<double> temp_lengths(const MarkovModel& m, const std::vector<double>& p) {
  const unsigned n = m.n;
  std::vector<double> t(n, 0.0);
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    const auto [i, j] = m.states[s];
    if (i + 2 < n) t[j + 1] += case_probabilities(n, i, j).e * p[s];
  }
  double rest = 0.0;
  for (unsigned l = 1; l < n; ++l) rest += t[l];
  t[0] = 1.0 - rest;
  return t;
}

inline Eigen::MatrixXd transitions(const MarkovModel& m, const std::vector<double>& t) {
  const unsigned n = m.n;
  const std::size_t ns = m.states.size();
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns),
                                             static_cast<Eigen::Index>(ns));
  // A sample of length `held` (or nullopt when nothing advances) meets the
  // temporary-bin sample whose length is distributed as t.
  auto route = [&](std::size_t from, double mass, int held) {
    if (mass == 0.0) return;
    for (unsigned l = 0; l + 1 < n; ++l) {
      if (t[l] == 0.0) continue;
      const unsigned other = held < 0 ? 0u : static_cast<unsigned>(held);
      pi(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(m.index(other, l))) +=
          mass * t[l];
    }
  };
  for (std::size_t s = 0; s < ns; ++s) {
    const auto [i, j] = m.states[s];
    const CaseProbs c = case_probabilities(n, i, j);
    if (i == n - 2 && j == n - 2) {
      route(s, 1.0, -1);
    } else if (i == n - 2) {
      // The longer sample settles by elimination; the shorter either settles
      // or advances.
      route(s, c.a + c.c + c.d, -1);
      route(s, c.b + c.e, static_cast<int>(j + 1));
    } else {
      route(s, c.a, -1);
      route(s, c.b, static_cast<int>(j + 1));
      route(s, c.c + c.d + c.e, static_cast<int>(i + 1));
    }
  }
  for (Eigen::Index r = 0; r < pi.rows(); ++r) {
    const double sum = pi.row(r).sum();
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConsistencyError("transition row " + std::to_string(r) + " sums to " +
                             std::to_string(sum));
  }
  return pi;
}

inline std::vector<double> direct_stationary(const Eigen::MatrixXd& pi) {
  const Eigen::Index ns = pi.rows();
  Eigen::MatrixXd a = pi.transpose() - Eigen::MatrixXd::Identity(ns, ns);
  a.row(ns - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ns);
  rhs(ns - 1) = 1.0;
  Eigen::VectorXd x = a.fullPivLu().solve(rhs);
  return std::vector<double>(x.data(), x.data() + ns);
}

// Power iteration from `start`; falls back to a direct solve if it stalls.
inline std::vector<double> stationary(const Eigen::MatrixXd& pi, std::vector<double> start,
                                      bool& used_direct) {
  const Eigen::Index ns = pi.rows();
  Eigen::RowVectorXd x = Eigen::Map<Eigen::RowVectorXd>(start.data(), ns);
  for (int it = 0; it < 20000; ++it) {
    Eigen::RowVectorXd y = x * pi;
    y /= y.sum();
    const double change = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (change < 1e-15) return std::vector<double>(x.data(), x.data() + ns);
  }
  used_direct = true;
  return direct_stationary(pi);
}

}  // namespace detail

inline MarkovModel solve_markov(unsigned n, double tol = 1e-10, unsigned max_iter = 100000) {
  if (n < 2) throw ConfigError("Markov model needs N >= 2");
  if (!(tol > 0)) throw ConfigError("tolerance must be positive");
  MarkovModel m;
  m.n = n;
  for (unsigned i = 0; i + 1 < n; ++i)
    for (unsigned j = 0; j <= i; ++j) m.states.emplace_back(i, j);
  const std::size_t ns = m.states.size();
  std::vector<double> p(ns, 1.0 / static_cast<double>(ns));
  if (n == 2) {
    m.temp_len_dist = {1.0, 0.0};
    m.pi = Eigen::MatrixXd::Ones(1, 1);
    m.stationary = p;
    return m;
  }
  double residual = std::numeric_limits<double>::infinity();
  for (unsigned it = 1; it <= max_iter; ++it) {
    const auto t = detail::temp_lengths(m, p);
    Eigen::MatrixXd pi = detail::transitions(m, t);
    auto next = detail::stationary(pi, p, m.used_direct_solve);
    residual = 0.0;
    for (std::size_t s = 0; s < ns; ++s) residual = std::max(residual, std::abs(next[s] - p[s]));
    p = std::move(next);
    if (residual < tol) {
      m.iterations = it;
      m.residual = residual;
      m.stationary = p;
      m.temp_len_dist = detail::temp_lengths(m, p);
      m.pi = detail::transitions(m, m.temp_len_dist);
      return m;
    }
  }
  throw NonConvergence("Markov fixed point did not converge for N=" + std::to_string(n),
                       residual);
}

struct GreedyPrediction {
  std::vector<double> hazard;  // settle probability at the (l+1)-th query, l = 0..N-2
  std::vector<double> pq;      // P(Q = q), q = 1..N-1 stored at q-1
  double rate = 0.0;           // E[Q] / 2
  double rate_by_flow = 0.0;   // 1 / expected samples settled per query
};

// Settle probability of one sample in state (i,j); `longer` picks which.
inline double settle_probability(unsigned n, unsigned i, unsigned j, bool longer) {
  const CaseProbs c = case_probabilities(n, i, j);
  const unsigned mine = longer ? i : j;
  if (mine == n - 2) return 1.0;
  if (i == n - 2) return c.a + c.c + c.d;
  if (i == j) return c.a + c.c + 0.5 * c.d;
  return longer ? c.a + c.b : c.a + c.c + c.d;
}

inline GreedyPrediction rate_algo3(const MarkovModel& m) {
  const unsigned n = m.n;
  GreedyPrediction g;
  if (n == 2) {
    g.hazard = {1.0};
    g.pq = {1.0};
    g.rate = g.rate_by_flow = 0.5;
    return g;
  }
  g.hazard.assign(n - 1, 0.0);
  std::vector<double> weight(n - 1, 0.0);
  double flow = 0.0;
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    const auto [i, j] = m.states[s];
    const double p = m.stationary[s];
    for (bool longer : {true, false}) {
      const unsigned mine = longer ? i : j;
      g.hazard[mine] += p * settle_probability(n, i, j, longer);
      weight[mine] += p;
    }
    const CaseProbs c = case_probabilities(n, i, j);
    double sl;
    if (i == n - 2 && j == n - 2) sl = 2.0;
    else if (i == n - 2) sl = 1.0 + c.a + c.c + c.d;
    else sl = 2 * c.a + c.b + c.c + c.d;
    flow += p * sl;
  }
  for (unsigned l = 0; l + 1 < n; ++l)
    g.hazard[l] = weight[l] > 0 ? g.hazard[l] / weight[l] : 1.0;
  double survive = 1.0, eq = 0.0;
  for (unsigned q = 1; q < n; ++q) {
    const double pq = survive * g.hazard[q - 1];
    g.pq.push_back(pq);
    eq += q * pq;
    survive *= 1 - g.hazard[q - 1];
  }
  g.rate = eq / 2.0;
  g.rate_by_flow = 1.0 / flow;
  return g;
}

inline GreedyPrediction rate_algo3(unsigned n) { return rate_algo3(solve_markov(n)); }

// Total labeling cost at a given price per query.
inline double budget(double rate, double price_per_query, double samples = 1.0) {
  if (rate < 0 || price_per_query < 0 || samples < 0)
    throw ConfigError("budget inputs must be non-negative");
  return rate * price_per_query * samples;
}

}  // namespace kic::analysis
