#pragma once

// Step-wise engine interface. An engine emits one query at a time and is
// advanced by the response, so the same engine serves the in-process
// simulated oracle and a human answering over HTTP.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kic/label_store.hpp"
#include "kic/oracle.hpp"
#include "kic/types.hpp"

namespace kic {

// A class bin: the class and the sample standing for it in queries.
struct ClassRep {
  ClassId cls = 0;
  SampleId sample;
  std::uint64_t created = 0;
};

struct RunStats {
  std::uint64_t queries = 0;          // W
  std::size_t labeled = 0;            // samples (not representatives) labeled
  double rate = 0.0;                  // W / labeled
  std::vector<std::uint32_t> per_sample_queries;  // indexed by SampleId
  // Algorithm 1: mean per-sample queries over the steady-state window.
  std::optional<double> steady_rate;
  std::size_t transient_len = 0;
  // Algorithm 1: classes did not split evenly into (k-1)-groups.
  bool uneven_last_group = false;
  // Algorithm 3: drain mode was entered once fresh samples ran out.
  bool drain_mode_used = false;
};

class Engine {
 public:
  virtual ~Engine() = default;

  // The pending query, materializing one if needed. Repeated calls return the
  // same query until submit(). nullopt once done().
  virtual std::optional<Query> next_query() = 0;

  // Applies a response to the pending query. The caller is responsible for
  // validate_response; engines assume a valid partition.
  virtual void submit(const QueryResponse& response) = 0;

  virtual bool done() const = 0;
  virtual const LabelStore& store() const = 0;
  virtual RunStats stats() const = 0;
  virtual std::string name() const = 0;
};

// Blocks as lists of item positions in the query, ordered by their first
// position. Engines consume this form so block order and within-block order
// in the response never influence the run.
inline std::vector<std::vector<std::size_t>> canonical_blocks(
    const Query& q, const QueryResponse& r) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(r.blocks.size());
  for (const auto& block : r.blocks) {
    std::vector<std::size_t> pos;
    for (auto s : block)
      for (std::size_t i = 0; i < q.items.size(); ++i)
        if (q.items[i].sample == s) pos.push_back(i);
    std::sort(pos.begin(), pos.end());
    out.push_back(std::move(pos));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Block index per query item.
inline std::vector<std::size_t> block_index(const Query& q, const QueryResponse& r) {
  std::vector<std::size_t> idx(q.items.size(), 0);
  auto blocks = canonical_blocks(q, r);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (auto p : blocks[b]) idx[p] = b;
  return idx;
}

struct DriveOptions {
  std::uint64_t max_queries = ~0ULL;
};

// Runs `engine` to completion against `oracle`, validating every query and
// response. Returns the number of oracle calls made.
inline std::uint64_t drive(Engine& engine, Oracle& oracle, DriveOptions opt = {}) {
  std::uint64_t calls = 0;
  while (!engine.done()) {
    auto q = engine.next_query();
    if (!q) break;
    if (auto bad = validate_query(*q))
      throw ConsistencyError(engine.name() + " issued an invalid query: " + *bad);
    if (calls >= opt.max_queries)
      throw ConsistencyError(engine.name() + " exceeded the query cap");
    auto r = oracle.answer(*q);
    ++calls;
    if (auto bad = validate_response(*q, r))
      throw OracleViolation("oracle returned an invalid response: " + *bad);
    engine.submit(r);
  }
  return calls;
}

}  // namespace kic
