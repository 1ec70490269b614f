#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "kic/types.hpp"

namespace kic {

// Ground-truth-free label bookkeeping: assigned labels, same-class merge
// groups awaiting a class, per-class counts and the query counter.
//
// Merge groups live in a union-find; the label is stored on the group root
// so assigning any member labels the whole group.
class LabelStore {
 public:
  LabelStore() = default;
  explicit LabelStore(std::size_t n) { resize(n); }

  void resize(std::size_t n) {
    const auto old = parent_.size();
    parent_.resize(n);
    std::iota(parent_.begin() + static_cast<std::ptrdiff_t>(old),
              parent_.end(), static_cast<std::uint32_t>(old));
    size_.resize(n, 1);
    label_.resize(n);
  }

  std::size_t capacity() const { return parent_.size(); }

  SampleId root(SampleId s) const {
    auto x = s.value;
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return SampleId(x);
  }

  bool same_group(SampleId a, SampleId b) const { return root(a) == root(b); }
  std::size_t group_size(SampleId s) const { return size_[root(s).value]; }

  std::optional<ClassId> label(SampleId s) const {
    return label_[root(s).value];
  }
  bool is_labeled(SampleId s) const { return label(s).has_value(); }

  // Labels `s` and everything merged with it.
  void assign(SampleId s, ClassId c) {
    const auto r = root(s).value;
    if (label_[r]) {
      if (*label_[r] != c)
        throw ConsistencyError("sample " + std::to_string(s.value) +
                               " relabeled from " + std::to_string(*label_[r]) +
                               " to " + std::to_string(c));
      return;
    }
    label_[r] = c;
    add_count(c, size_[r]);
  }

  // Declares `a` and `b` same-class.
  void merge(SampleId a, SampleId b) {
    auto ra = root(a).value;
    auto rb = root(b).value;
    if (ra == rb) return;
    const auto la = label_[ra];
    const auto lb = label_[rb];
    if (la && lb && *la != *lb)
      throw ConsistencyError("merging samples with labels " +
                             std::to_string(*la) + " and " +
                             std::to_string(*lb));
    if (la && !lb) add_count(*la, size_[rb]);
    if (lb && !la) add_count(*lb, size_[ra]);
    if (size_[ra] < size_[rb]) std::swap(ra, rb);
    parent_[rb] = ra;
    size_[ra] += size_[rb];
    label_[ra] = la ? la : lb;
  }

  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t count(ClassId c) const {
    return c < counts_.size() ? counts_[c] : 0;
  }
  std::size_t labeled() const { return labeled_; }

  std::uint64_t queries_issued() const { return queries_; }
  void record_query() { ++queries_; }

  void record_duration_ms(double ms) { durations_ms_.push_back(ms); }
  const std::vector<double>& durations_ms() const { return durations_ms_; }

 private:
  void add_count(ClassId c, std::size_t n) {
    if (counts_.size() <= c) counts_.resize(c + 1, 0);
    counts_[c] += n;
    labeled_ += n;
  }

  mutable std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
  std::vector<std::optional<ClassId>> label_;
  std::vector<std::size_t> counts_;
  std::size_t labeled_ = 0;
  std::uint64_t queries_ = 0;
  std::vector<double> durations_ms_;
};

// Queries per labeled sample. Throws on an empty label set.
inline double empirical_rate(const LabelStore& store, std::size_t labeled) {
  if (labeled == 0) throw ConfigError("empirical rate of zero labeled samples");
  return static_cast<double>(store.queries_issued()) /
         static_cast<double>(labeled);
}

}  // namespace kic
