#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kic/types.hpp"

namespace kic {

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual QueryResponse answer(const Query& q) = 0;
};

// Answers from ground truth. Stateless after construction -- safe to share
// across concurrent runs.
class SimulatedOracle final : public Oracle {
 public:
  explicit SimulatedOracle(std::vector<std::optional<ClassId>> truth)
      : truth_(std::move(truth)) {}

  QueryResponse answer(const Query& q) override {
    QueryResponse r;
    std::vector<ClassId> block_class;
    for (const auto& item : q.items) {
      if (item.sample.value >= truth_.size() || !truth_[item.sample.value])
        throw ConfigError("no ground truth for sample " +
                          std::to_string(item.sample.value));
      const ClassId c = *truth_[item.sample.value];
      std::size_t b = 0;
      while (b < block_class.size() && block_class[b] != c) ++b;
      if (b == block_class.size()) {
        block_class.push_back(c);
        r.blocks.emplace_back();
      }
      r.blocks[b].push_back(item.sample);
    }
    return r;
  }

 private:
  std::vector<std::optional<ClassId>> truth_;
};

// Counts invocations of a wrapped oracle.
class CountingOracle final : public Oracle {
 public:
  explicit CountingOracle(Oracle& inner) : inner_(inner) {}
  QueryResponse answer(const Query& q) override {
    ++calls_;
    return inner_.answer(q);
  }
  std::uint64_t calls() const { return calls_; }

 private:
  Oracle& inner_;
  std::uint64_t calls_ = 0;
};

// Structural query invariants: >= 2 items, distinct samples, at most one
// representative per class. Returns a description of the first breach.
inline std::optional<std::string> validate_query(const Query& q) {
  if (q.items.size() < 2) return "query has fewer than 2 items";
  std::set<SampleId> seen;
  std::set<ClassId> classes;
  for (const auto& it : q.items) {
    if (!seen.insert(it.sample).second)
      return "sample " + std::to_string(it.sample.value) + " appears twice";
    if (it.known_class && !classes.insert(*it.known_class).second)
      return "two representatives of class " + std::to_string(*it.known_class);
  }
  return std::nullopt;
}

// Checks that `r` is a set partition of the query's items in which no block
// joins representatives of different classes. nullopt means valid.
inline std::optional<std::string> validate_response(const Query& q,
                                                    const QueryResponse& r) {
  std::map<SampleId, std::optional<ClassId>> items;
  for (const auto& it : q.items) items.emplace(it.sample, it.known_class);

  std::set<SampleId> covered;
  for (const auto& block : r.blocks) {
    if (block.empty()) return "empty block";
    std::optional<ClassId> rep_class;
    for (auto s : block) {
      auto found = items.find(s);
      if (found == items.end())
        return "sample " + std::to_string(s.value) + " is not in the query";
      if (!covered.insert(s).second)
        return "sample " + std::to_string(s.value) +
               " appears in more than one block";
      if (found->second) {
        if (rep_class && *rep_class != *found->second)
          return "representatives of classes " + std::to_string(*rep_class) +
                 " and " + std::to_string(*found->second) +
                 " placed in the same block";
        rep_class = found->second;
      }
    }
  }
  if (covered.size() != items.size()) return "response does not cover every item";
  return std::nullopt;
}

}  // namespace kic
