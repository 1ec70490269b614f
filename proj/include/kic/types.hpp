#pragma once

// Core domain types shared by every labeling engine.

#include <algorithm>
#include <cstdint>
#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kic {

// Dense index of a sample inside its Dataset. External (manifest) ids are
// kept on the DatasetItem and only translated at the I/O boundary.
struct SampleId {
  std::uint32_t value = 0;

  constexpr SampleId() = default;
  constexpr explicit SampleId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const SampleId&) const = default;
};

// 0-based class index.
using ClassId = std::uint32_t;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when bookkeeping would contradict itself (e.g. relabeling a sample).
// With an error-free oracle this must never happen.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The oracle returned something that is not a valid response to the query.
class OracleViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetItem {
  std::uint64_t external_id = 0;
  std::string uri;
  std::optional<ClassId> truth;
  // Representatives carry a known class (stored in `truth`) and are never
  // counted as samples to label.
  bool representative = false;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::optional<std::uint32_t> num_classes_hint;

  std::size_t size() const { return items.size(); }
  const DatasetItem& operator[](SampleId s) const { return items.at(s.value); }

  std::vector<SampleId> samples() const {
    std::vector<SampleId> out;
    for (std::uint32_t i = 0; i < items.size(); ++i)
      if (!items[i].representative) out.emplace_back(i);
    return out;
  }

  std::vector<SampleId> representatives() const {
    std::vector<SampleId> out;
    for (std::uint32_t i = 0; i < items.size(); ++i)
      if (items[i].representative) out.emplace_back(i);
    return out;
  }

  std::vector<std::optional<ClassId>> truth() const {
    std::vector<std::optional<ClassId>> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.truth);
    return out;
  }

  // Checks id uniqueness and class-range invariants.
  void validate() const;
};

struct QueryItem {
  SampleId sample;
  // Set iff the item is a class representative.
  std::optional<ClassId> known_class;

  bool is_representative() const { return known_class.has_value(); }
};

struct Query {
  std::vector<QueryItem> items;
  std::uint64_t query_seq = 0;

  std::size_t size() const { return items.size(); }
};

// A set partition of a query's items; each block holds same-class items.
struct QueryResponse {
  std::vector<std::vector<SampleId>> blocks;

  // Index of the block containing `s`, or -1.
  int block_of(SampleId s) const {
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (auto x : blocks[b])
        if (x == s) return static_cast<int>(b);
    return -1;
  }
};

inline void Dataset::validate() const {
  std::vector<std::uint64_t> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.external_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ConfigError("dataset ids are not unique");
  for (const auto& it : items) {
    if (it.representative && !it.truth)
      throw ConfigError("representative " + std::to_string(it.external_id) +
                        " has no class");
    if (num_classes_hint && it.truth && *it.truth >= *num_classes_hint)
      throw ConfigError("class index of item " +
                        std::to_string(it.external_id) + " out of range");
  }
}

}  // namespace kic
