#pragma once

// Sample-by-sample kIC labeling against an ordered list of class
// representatives, discovering classes as it goes.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kic/engine.hpp"

namespace kic {

enum class ReorderPolicy {
  descending,  // largest labeled count first (default)
  ascending,
  fixed,       // creation order
};

inline ReorderPolicy parse_reorder_policy(const std::string& s) {
  if (s == "descending") return ReorderPolicy::descending;
  if (s == "ascending") return ReorderPolicy::ascending;
  if (s == "fixed") return ReorderPolicy::fixed;
  throw ConfigError("unknown reorder policy '" + s + "'");
}

inline std::string to_string(ReorderPolicy p) {
  switch (p) {
    case ReorderPolicy::descending: return "descending";
    case ReorderPolicy::ascending: return "ascending";
    case ReorderPolicy::fixed: return "fixed";
  }
  return "?";
}

struct BasicConfig {
  unsigned k = 2;
  ReorderPolicy reorder = ReorderPolicy::descending;
  // Skip the last comparison when all classes are known and one candidate is
  // left. Requires known_classes.
  bool eliminate_last = false;
  std::optional<std::uint32_t> known_classes;
  // Steady-state window start (processing position). Default
  // max(10 N, L / 20), with N the final number of classes.
  std::optional<std::size_t> steady_window_start;

  void validate() const {
    if (k < 2) throw ConfigError("k must be at least 2");
    if (eliminate_last && !known_classes)
      throw ConfigError("eliminate_last needs the number of classes");
  }
};

// The algorithm proper, operating on a caller-owned LabelStore. `order` is
// the processing order of the samples to label; `seeded` are known
// representatives (not themselves counted as samples).
class BasicCore {
 public:
  BasicCore(LabelStore& store, std::vector<SampleId> order,
            std::vector<ClassRep> seeded, BasicConfig cfg, ClassId first_new_class)
      : store_(store),
        order_(std::move(order)),
        reps_(std::move(seeded)),
        cfg_(cfg),
        next_class_(first_new_class) {
    cfg_.validate();
    for (auto& r : reps_) {
      r.created = created_++;
      next_class_ = std::max(next_class_, r.cls + 1);
    }
    queries_of_.assign(order_.size(), 0);
    reorder();
  }

  bool done() const { return pos_ >= order_.size() && !pending_; }

  std::optional<Query> next_query() {
    if (pending_) return pending_;
    advance();
    if (pos_ >= order_.size()) return std::nullopt;

    Query q;
    q.query_seq = store_.queries_issued();
    if (reps_.empty()) {
      // Initial query: up to k fresh samples at once.
      init_count_ = std::min<std::size_t>(cfg_.k, order_.size() - pos_);
      for (std::size_t t = 0; t < init_count_; ++t)
        q.items.push_back({order_[pos_ + t], std::nullopt});
    } else {
      init_count_ = 0;
      q.items.push_back({order_[pos_], std::nullopt});
      const std::size_t end = std::min(reps_.size(), group_ + cfg_.k - 1);
      for (std::size_t r = group_; r < end; ++r)
        q.items.push_back({reps_[r].sample, reps_[r].cls});
    }
    pending_ = std::move(q);
    return pending_;
  }

  void submit(const QueryResponse& resp) {
    if (!pending_) throw ConsistencyError("basic: response without a pending query");
    const Query q = std::move(*pending_);
    pending_.reset();
    store_.record_query();

    const auto blocks = canonical_blocks(q, resp);
    if (init_count_ > 0) {
      for (std::size_t t = 0; t < init_count_; ++t) ++queries_of_[pos_ + t];
      for (const auto& block : blocks) {
        const SampleId head = q.items[block.front()].sample;
        for (std::size_t p = 1; p < block.size(); ++p)
          store_.merge(head, q.items[block[p]].sample);
        new_class(head);
      }
      pos_ += init_count_;
      init_count_ = 0;
      return;
    }

    ++queries_of_[pos_];
    const SampleId s = q.items[0].sample;
    std::optional<ClassId> match;
    for (const auto& block : blocks) {
      if (block.front() != 0) continue;
      for (auto p : block)
        if (q.items[p].known_class) match = q.items[p].known_class;
    }
    if (match) {
      store_.assign(s, *match);
      finish_sample();
      return;
    }
    group_ += cfg_.k - 1;
    if (group_ >= reps_.size()) {
      new_class(s);
      finish_sample();
    }
  }

  const std::vector<ClassRep>& reps() const { return reps_; }
  const std::vector<SampleId>& order() const { return order_; }
  // Per processing position.
  const std::vector<std::uint32_t>& queries_of() const { return queries_of_; }
  // Processing positions labeled by the initial joint query.
  std::size_t init_samples() const { return init_samples_; }
  std::uint64_t eliminated() const { return eliminated_; }

  std::size_t default_window_start() const {
    if (cfg_.steady_window_start) return *cfg_.steady_window_start;
    return std::max<std::size_t>(10 * reps_.size(), order_.size() / 20);
  }

  std::optional<double> steady_rate() const {
    const std::size_t from = std::max(default_window_start(), init_samples_);
    if (from >= order_.size()) return std::nullopt;
    double sum = 0;
    for (std::size_t p = from; p < order_.size(); ++p) sum += queries_of_[p];
    return sum / static_cast<double>(order_.size() - from);
  }

  bool uneven_last_group() const {
    return !reps_.empty() && reps_.size() % (cfg_.k - 1) != 0;
  }

 private:
  // Skips samples already labeled elsewhere and resolves by elimination.
  void advance() {
    while (pos_ < order_.size()) {
      const SampleId s = order_[pos_];
      if (store_.is_labeled(s)) {
        ++pos_;
        group_ = 0;
        continue;
      }
      if (reps_.empty() && order_.size() - pos_ == 1) {
        // A lone sample with nothing to compare against founds a class.
        new_class(s);
        if (init_samples_ == 0) init_samples_ = pos_ + 1;
        ++pos_;
        continue;
      }
      if (cfg_.eliminate_last && reps_.size() == *cfg_.known_classes &&
          reps_.size() - group_ == 1) {
        store_.assign(s, reps_.back().cls);
        ++eliminated_;
        finish_sample();
        continue;
      }
      break;
    }
  }

  void new_class(SampleId rep) {
    const ClassId c = next_class_++;
    store_.assign(rep, c);
    reps_.push_back({c, rep, created_++});
    if (init_samples_ == 0 && init_count_ > 0) init_samples_ = pos_ + init_count_;
    reorder();
  }

  void finish_sample() {
    ++pos_;
    group_ = 0;
    reorder();
  }

  void reorder() {
    auto by_created = [](const ClassRep& a, const ClassRep& b) { return a.created < b.created; };
    switch (cfg_.reorder) {
      case ReorderPolicy::fixed:
        std::sort(reps_.begin(), reps_.end(), by_created);
        break;
      case ReorderPolicy::descending:
        std::sort(reps_.begin(), reps_.end(), [&](const ClassRep& a, const ClassRep& b) {
          const auto ca = store_.count(a.cls), cb = store_.count(b.cls);
          return ca != cb ? ca > cb : a.created < b.created;
        });
        break;
      case ReorderPolicy::ascending:
        std::sort(reps_.begin(), reps_.end(), [&](const ClassRep& a, const ClassRep& b) {
          const auto ca = store_.count(a.cls), cb = store_.count(b.cls);
          return ca != cb ? ca < cb : a.created < b.created;
        });
        break;
    }
  }

  LabelStore& store_;
  std::vector<SampleId> order_;
  std::vector<ClassRep> reps_;
  BasicConfig cfg_;
  ClassId next_class_ = 0;
  std::uint64_t created_ = 0;
  std::size_t pos_ = 0;
  std::size_t group_ = 0;
  std::size_t init_count_ = 0;
  std::size_t init_samples_ = 0;
  std::uint64_t eliminated_ = 0;
  std::optional<Query> pending_;
  std::vector<std::uint32_t> queries_of_;
};

// Seeded representatives from the dataset's representative items.
inline std::vector<ClassRep> dataset_reps(const Dataset& d) {
  std::vector<ClassRep> out;
  for (auto r : d.representatives()) out.push_back({*d[r].truth, r, 0});
  return out;
}

class BasicEngine final : public Engine {
 public:
  BasicEngine(const Dataset& d, BasicConfig cfg)
      : store_(d.size()),
        core_(store_, d.samples(), dataset_reps(d), cfg, 0) {
    if (d.samples().empty()) throw ConfigError("dataset has no samples to label");
  }

  std::optional<Query> next_query() override { return core_.next_query(); }
  void submit(const QueryResponse& r) override {
    core_.submit(r);
    core_.next_query();  // resolve eliminations eagerly so done() is exact
  }
  bool done() const override { return core_.done(); }
  const LabelStore& store() const override { return store_; }
  std::string name() const override { return "basic"; }

  RunStats stats() const override {
    RunStats s;
    s.queries = store_.queries_issued();
    for (auto id : core_.order())
      if (store_.is_labeled(id)) ++s.labeled;
    s.rate = s.labeled ? static_cast<double>(s.queries) / static_cast<double>(s.labeled) : 0.0;
    s.per_sample_queries.assign(store_.capacity(), 0);
    for (std::size_t p = 0; p < core_.order().size(); ++p)
      s.per_sample_queries[core_.order()[p].value] = core_.queries_of()[p];
    s.steady_rate = core_.steady_rate();
    s.transient_len = std::max(core_.default_window_start(), core_.init_samples());
    s.uneven_last_group = core_.uneven_last_group();
    return s;
  }

  const BasicCore& core() const { return core_; }

 private:
  LabelStore store_;
  BasicCore core_;
};

}  // namespace kic
