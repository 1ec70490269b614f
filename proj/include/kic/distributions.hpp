#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "kic/rng.hpp"
#include "kic/types.hpp"

namespace kic {

// Probability vector over N classes.
class ClassDistribution {
 public:
  ClassDistribution() = default;

  // Validates: N >= 1, entries in [0,1], sum 1 within 1e-12.
  explicit ClassDistribution(std::vector<double> probs)
      : probs_(std::move(probs)) {
    if (probs_.empty()) throw ConfigError("class distribution with N = 0");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0))
        throw ConfigError("class probability outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("class probabilities sum to " + std::to_string(sum));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

  // Classes sorted by decreasing probability (stable).
  std::vector<ClassId> descending_order() const {
    std::vector<ClassId> order(probs_.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](ClassId a, ClassId b) {
      return probs_[a] > probs_[b];
    });
    return order;
  }

  bool is_uniform(double tol = 1e-12) const {
    const double u = 1.0 / static_cast<double>(probs_.size());
    return std::all_of(probs_.begin(), probs_.end(),
                       [&](double p) { return std::abs(p - u) <= tol; });
  }

 private:
  std::vector<double> probs_;
};

// Rescales a vector whose sum is 1 up to rounding so the constructor's
// 1e-12 check holds for long vectors.
inline ClassDistribution normalized(std::vector<double> w) {
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(s > 0.0)) throw ConfigError("weights must have a positive sum");
  for (double& x : w) x /= s;
  return ClassDistribution(std::move(w));
}

inline ClassDistribution uniform(std::size_t n) {
  if (n == 0) throw ConfigError("uniform distribution over zero classes");
  return ClassDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

// Entry i proportional to i^-nu, i = 1..N.
inline ClassDistribution zipf(std::size_t n, double nu) {
  if (n == 0) throw ConfigError("zipf distribution over zero classes");
  if (nu < 0) throw ConfigError("zipf exponent must be >= 0");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = std::pow(static_cast<double>(i + 1), -nu);
  return normalized(std::move(w));
}

// One distinct class (last) that is x times as likely as the whole rest
// combined: first N-1 entries alpha'/N, last alpha/N, alpha = xN/(1+x).
inline ClassDistribution big_small(std::size_t n, double x) {
  if (n < 2) throw ConfigError("big_small needs N >= 2");
  if (!(x > 0)) throw ConfigError("big_small needs x > 0");
  const double nd = static_cast<double>(n);
  const double alpha = x * nd / (1.0 + x);
  const double alpha_p = (nd - alpha) / (nd - 1.0);
  std::vector<double> w(n, alpha_p / nd);
  w.back() = alpha / nd;
  return normalized(std::move(w));
}

// Inverse-CDF sampler over a cumulative table.
class LabelSampler {
 public:
  explicit LabelSampler(const ClassDistribution& dist) {
    cdf_.resize(dist.size());
    std::partial_sum(dist.probs().begin(), dist.probs().end(), cdf_.begin());
    cdf_.back() = 1.0;
  }

  ClassId operator()(Rng& rng) const {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<ClassId>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

inline std::vector<ClassId> sample_labels(const ClassDistribution& dist,
                                          std::size_t count,
                                          std::uint64_t seed) {
  LabelSampler draw(dist);
  Rng rng = make_rng(seed, 0x1abe1);
  std::vector<ClassId> out(count);
  for (auto& c : out) c = draw(rng);
  return out;
}

// Simulation dataset: `labels.size()` samples, optionally followed by one
// representative per class (ids continue after the samples).
inline Dataset make_dataset(const std::vector<ClassId>& labels,
                            std::size_t num_classes,
                            bool with_representatives) {
  Dataset d;
  d.num_classes_hint = static_cast<std::uint32_t>(num_classes);
  d.items.reserve(labels.size() + (with_representatives ? num_classes : 0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    d.items.push_back({i, "", labels[i], false});
  if (with_representatives)
    for (std::size_t c = 0; c < num_classes; ++c)
      d.items.push_back({labels.size() + c, "", static_cast<ClassId>(c), true});
  return d;
}

}  // namespace kic
