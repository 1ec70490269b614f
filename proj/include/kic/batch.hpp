#pragma once

// Round-based batch labeling: shuffle, slice into k-subsets, query, merge
// matches and keep one representative per merged block. Survivors of the
// last round are resolved by the basic engine.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kic/basic.hpp"
#include "kic/engine.hpp"
#include "kic/rng.hpp"

namespace kic {

struct RoundStats {
  std::uint64_t round = 0;          // 1-based
  std::size_t batch_size = 0;       // L_r
  std::uint64_t queries = 0;
  std::size_t settled = 0;
  double rate() const {
    return settled ? static_cast<double>(queries) / static_cast<double>(settled) : 0.0;
  }
};

struct BatchConfig {
  unsigned k = 3;
  std::size_t cleanup_threshold = 64;
  unsigned stagnation_rounds = 3;
  std::uint64_t round_cap = 10000;
  ReorderPolicy cleanup_reorder = ReorderPolicy::descending;
  // Called after each round with the survivors (the next batch).
  std::function<void(const RoundStats&, const std::vector<SampleId>&)> on_round;

  void validate() const {
    if (k < 2) throw ConfigError("k must be at least 2");
    if (stagnation_rounds == 0) throw ConfigError("stagnation_rounds must be positive");
  }
};

class BatchEngine final : public Engine {
 public:
  BatchEngine(const Dataset& d, BatchConfig cfg, std::uint64_t seed)
      : store_(d.size()), cfg_(std::move(cfg)), rng_(make_rng(seed, 0xba7c4)),
        seeded_(dataset_reps(d)) {
    cfg_.validate();
    active_ = d.samples();
    total_ = active_.size();
    if (total_ == 0) throw ConfigError("dataset has no samples to label");
    start_round();
  }

  std::optional<Query> next_query() override {
    if (cleanup_) return cleanup_->next_query();
    if (next_chunk_ >= chunks_.size()) return std::nullopt;
    if (!pending_) {
      Query q;
      q.query_seq = store_.queries_issued();
      for (auto s : chunks_[next_chunk_]) q.items.push_back({s, std::nullopt});
      pending_ = std::move(q);
    }
    return pending_;
  }

  void submit(const QueryResponse& r) override {
    if (cleanup_) {
      cleanup_->submit(r);
      cleanup_->next_query();
      return;
    }
    if (!pending_) throw ConsistencyError("batch: response without a pending query");
    store_.record_query();
    responses_.push_back(canonical_blocks(*pending_, r));
    pending_.reset();
    if (++next_chunk_ == chunks_.size()) {
      finish_round();
      start_round();
    }
  }

  bool done() const override { return cleanup_ && cleanup_->done(); }
  const LabelStore& store() const override { return store_; }
  std::string name() const override { return "batch"; }

  RunStats stats() const override {
    RunStats s;
    s.queries = store_.queries_issued();
    s.per_sample_queries = per_sample_;
    if (cleanup_)
      for (std::size_t p = 0; p < cleanup_->order().size(); ++p)
        s.per_sample_queries[cleanup_->order()[p].value] += cleanup_->queries_of()[p];
    for (std::uint32_t i = 0; i < store_.capacity(); ++i)
      if (is_sample_[i] && store_.is_labeled(SampleId(i))) ++s.labeled;
    s.rate = s.labeled ? static_cast<double>(s.queries) / static_cast<double>(s.labeled) : 0.0;
    return s;
  }

  const std::vector<RoundStats>& rounds() const { return rounds_; }
  std::size_t residual_size() const { return residual_; }
  std::size_t total_samples() const { return total_; }
  std::size_t settled_in_rounds() const {
    std::size_t n = 0;
    for (const auto& r : rounds_) n += r.settled;
    return n;
  }
  std::uint64_t cleanup_queries() const {
    std::uint64_t n = store_.queries_issued();
    for (const auto& r : rounds_) n -= r.queries;
    return n;
  }
  const BasicCore* cleanup() const { return cleanup_ ? &*cleanup_ : nullptr; }

 private:
  void start_round() {
    const bool small = active_.size() < std::max<std::size_t>(cfg_.k, cfg_.cleanup_threshold);
    if (small || stagnant_ >= cfg_.stagnation_rounds || rounds_.size() >= cfg_.round_cap) {
      enter_cleanup();
      return;
    }
    std::vector<SampleId> batch = active_;
    shuffle(batch, rng_);
    chunks_.clear();
    for (std::size_t i = 0; i + cfg_.k <= batch.size(); i += cfg_.k)
      chunks_.emplace_back(batch.begin() + static_cast<std::ptrdiff_t>(i),
                           batch.begin() + static_cast<std::ptrdiff_t>(i + cfg_.k));
    next_chunk_ = 0;
    responses_.clear();
  }

  void finish_round() {
    RoundStats st;
    st.round = rounds_.size() + 1;
    st.batch_size = active_.size();
    st.queries = chunks_.size();
    std::vector<char> removed(store_.capacity(), 0);
    for (std::size_t c = 0; c < chunks_.size(); ++c) {
      for (auto s : chunks_[c]) ++per_sample_[s.value];
      for (const auto& block : responses_[c]) {
        if (block.size() < 2) continue;
        SampleId rep = chunks_[c][block[0]];
        for (auto p : block) rep = std::min(rep, chunks_[c][p]);
        for (auto p : block) {
          const SampleId s = chunks_[c][p];
          if (s == rep) continue;
          store_.merge(rep, s);
          removed[s.value] = 1;
          ++st.settled;
        }
      }
    }
    std::vector<SampleId> next;
    next.reserve(active_.size() - st.settled);
    for (auto s : active_)
      if (!removed[s.value]) next.push_back(s);
    active_ = std::move(next);
    stagnant_ = st.settled == 0 ? stagnant_ + 1 : 0;
    rounds_.push_back(st);
    if (cfg_.on_round) cfg_.on_round(st, active_);
  }

  void enter_cleanup() {
    chunks_.clear();
    residual_ = active_.size();
    if (residual_ == 0) throw ConsistencyError("batch: empty residual");
    BasicConfig bc;
    bc.k = cfg_.k;
    bc.reorder = cfg_.cleanup_reorder;
    cleanup_.emplace(store_, active_, seeded_, bc, 0);
    cleanup_->next_query();
  }

  LabelStore store_;
  BatchConfig cfg_;
  Rng rng_;
  std::vector<ClassRep> seeded_;
  std::vector<SampleId> active_;
  std::size_t total_ = 0;
  std::vector<std::vector<SampleId>> chunks_;
  std::vector<std::vector<std::vector<std::size_t>>> responses_;
  std::size_t next_chunk_ = 0;
  std::optional<Query> pending_;
  unsigned stagnant_ = 0;
  std::vector<RoundStats> rounds_;
  std::size_t residual_ = 0;
  std::optional<BasicCore> cleanup_;
  std::vector<std::uint32_t> per_sample_ = std::vector<std::uint32_t>(store_.capacity(), 0);
  std::vector<char> is_sample_ = sample_mask();

  std::vector<char> sample_mask() const {
    std::vector<char> m(store_.capacity(), 1);
    for (const auto& r : seeded_) m[r.sample.value] = 0;
    return m;
  }
};

}  // namespace kic
