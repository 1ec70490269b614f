#pragma once

// Greedy round-robin triplet labeling. Each query holds two unlabeled
// samples and the representative of the current class bin. Unsettled
// samples move on to the next bin; the shorter of two unsettled samples
// waits in that bin's one-slot temporary holder so the pair is never
// compared twice.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kic/engine.hpp"
#include "kic/rng.hpp"

namespace kic {

struct GreedyConfig {
  // Size-ordered bins with restarts from the first bin after full matches.
  bool nonuniform_restart = false;
  // Class sizes used to order bins when nonuniform_restart is set, indexed
  // by class. Empty keeps representative order.
  std::vector<double> class_priors;
  // Instrumented window in fresh draws: [instrument_from, instrument_until).
  std::size_t instrument_from = 0;
  std::size_t instrument_until = ~std::size_t{0};
};

enum class GreedyCase { a, b, c, d, e };

// Per-state tallies over two-sample queries; state (i,j) = lengths of the
// longer and shorter sample before the query.
struct StateTally {
  std::uint64_t visits = 0;
  std::array<std::uint64_t, 5> cases{};
  // Samples settled by a match (direct or by merging), excluding elimination.
  std::uint64_t matched = 0;
  std::uint64_t matched_sq = 0;
};

class GreedyEngine final : public Engine {
 public:
  GreedyEngine(const Dataset& d, GreedyConfig cfg, std::uint64_t seed)
      : store_(d.size()), cfg_(std::move(cfg)), rng_(make_rng(seed, 0x917ee)) {
    for (auto r : d.representatives()) bins_.push_back({*d[r].truth, r, 0});
    if (bins_.size() < 2)
      throw ConfigError("greedy labeling needs representatives for at least 2 classes");
    std::sort(bins_.begin(), bins_.end(),
              [](const ClassRep& a, const ClassRep& b) { return a.cls < b.cls; });
    for (std::size_t i = 1; i < bins_.size(); ++i)
      if (bins_[i].cls == bins_[i - 1].cls)
        throw ConfigError("two representatives for class " + std::to_string(bins_[i].cls));
    if (cfg_.nonuniform_restart && !cfg_.class_priors.empty()) {
      auto prior = [&](ClassId c) {
        return c < cfg_.class_priors.size() ? cfg_.class_priors[c] : 0.0;
      };
      std::stable_sort(bins_.begin(), bins_.end(), [&](const ClassRep& a, const ClassRep& b) {
        return prior(a.cls) > prior(b.cls);
      });
    }
    n_ = static_cast<unsigned>(bins_.size());
    fresh_ = d.samples();
    if (fresh_.empty()) throw ConfigError("dataset has no samples to label");
    len_.assign(d.size(), 0);
    start_.assign(d.size(), 0);
    queries_of_.assign(d.size(), 0);
    temp_.resize(n_);
  }

  unsigned num_classes() const { return n_; }
  const std::vector<ClassRep>& bins() const { return bins_; }

  std::optional<Query> next_query() override {
    if (pending_) return pending_->query;
    while (true) {
      Pending p;
      if (adv_) {
        p.s1 = adv_;
        adv_.reset();
      } else {
        p.s1 = draw();
      }
      if (has_inherit_) {
        p.s2 = inherit_ ? inherit_ : draw();
        inherit_.reset();
        has_inherit_ = false;
      } else if (temp_[bin_]) {
        p.s2 = temp_[bin_];
        temp_[bin_].reset();
      } else {
        p.s2 = draw();
      }
      if (!p.s1 && !p.s2) {
        // Only reachable once fresh samples are gone.
        if (std::none_of(temp_.begin(), temp_.end(), [](auto& t) { return t.has_value(); })) {
          finished_ = true;
          return std::nullopt;
        }
        bin_ = (bin_ + 1) % n_;
        continue;
      }
      if (!p.s1) std::swap(p.s1, p.s2);
      p.query.query_seq = store_.queries_issued();
      p.query.items.push_back({*p.s1, std::nullopt});
      if (p.s2) p.query.items.push_back({*p.s2, std::nullopt});
      p.query.items.push_back({bins_[bin_].sample, bins_[bin_].cls});
      p.instrumented = p.s2 && !drain_ && drawn_ > cfg_.instrument_from &&
                       drawn_ <= cfg_.instrument_until;
      pending_ = std::move(p);
      return pending_->query;
    }
  }

  void submit(const QueryResponse& resp) override {
    if (!pending_) throw ConsistencyError("greedy: response without a pending query");
    Pending p = std::move(*pending_);
    pending_.reset();
    store_.record_query();

    const auto blk = block_index(p.query, resp);
    const std::size_t rep_pos = p.query.items.size() - 1;
    const SampleId a = *p.s1;
    const bool two = p.s2.has_value();
    const std::uint32_t la0 = len_[a.value];
    const std::uint32_t lb0 = two ? len_[p.s2->value] : 0;
    const bool a_match = blk[0] == blk[rep_pos];
    const bool b_match = two && blk[1] == blk[rep_pos];
    const bool pair = two && !a_match && !b_match && blk[0] == blk[1];

    ++len_[a.value];
    ++queries_of_[a.value];
    if (two) {
      ++len_[p.s2->value];
      ++queries_of_[p.s2->value];
    }
    check_length(a);
    if (two) check_length(*p.s2);

    const ClassId here = bins_[bin_].cls;
    const unsigned nb = (bin_ + 1) % n_;
    unsigned next_bin = nb;
    std::uint64_t matched = 0;

    if (pair) {
      const SampleId b = *p.s2;
      store_.merge(a, b);
      ++merged_;
      matched = 1;
      const SampleId keep = longer(a, b);
      if (len_[keep.value] >= n_ - 1)
        settle_eliminated(keep);
      else
        adv_ = keep;
    } else {
      std::vector<SampleId> open;
      auto resolve = [&](SampleId s, bool m) {
        if (m) {
          store_.assign(s, here);
          ++matched;
        } else if (len_[s.value] >= n_ - 1) {
          settle_eliminated(s);
        } else {
          open.push_back(s);
        }
      };
      resolve(a, a_match);
      if (two) resolve(*p.s2, b_match);

      if (open.size() == 1) {
        adv_ = open[0];
      } else if (open.size() == 2) {
        const SampleId go = longer(open[0], open[1]);
        const SampleId stay = go == open[0] ? open[1] : open[0];
        adv_ = go;
        inherit_ = temp_[nb];
        has_inherit_ = true;
        temp_[nb] = stay;
      }

      if (cfg_.nonuniform_restart && two) {
        if (a_match && b_match) {
          next_bin = 0;
        } else if ((a_match != b_match) && adv_ && !temp_[nb]) {
          temp_[nb] = adv_;
          adv_.reset();
          next_bin = 0;
        }
      }
    }

    if (p.instrumented) {
      const bool a_longer = la0 >= lb0;
      const bool long_match = a_longer ? a_match : b_match;
      const bool short_match = a_longer ? b_match : a_match;
      GreedyCase c = GreedyCase::e;
      if (a_match && b_match) c = GreedyCase::a;
      else if (long_match) c = GreedyCase::b;
      else if (short_match) c = GreedyCase::c;
      else if (pair) c = GreedyCase::d;
      auto& t = tally_[{std::max(la0, lb0), std::min(la0, lb0)}];
      ++t.visits;
      ++t.cases[static_cast<std::size_t>(c)];
      t.matched += matched;
      t.matched_sq += matched * matched;
    }
    bin_ = next_bin;
    if (adv_ && temp_occupant(*adv_))
      throw ConsistencyError("greedy: advancing sample also held in a temporary bin");
    next_query();
  }

  bool done() const override { return finished_ && !pending_; }
  const LabelStore& store() const override { return store_; }
  std::string name() const override { return "greedy"; }

  RunStats stats() const override {
    RunStats s;
    s.queries = store_.queries_issued();
    for (auto id : fresh_)
      if (store_.is_labeled(id)) ++s.labeled;
    s.rate = s.labeled ? static_cast<double>(s.queries) / static_cast<double>(s.labeled) : 0.0;
    s.per_sample_queries = queries_of_;
    s.drain_mode_used = drain_;
    return s;
  }

  const std::map<std::pair<std::uint32_t, std::uint32_t>, StateTally>& tallies() const {
    return tally_;
  }
  std::uint32_t length(SampleId s) const { return len_[s.value]; }
  std::uint64_t eliminations() const { return eliminated_; }
  std::uint64_t merges() const { return merged_; }

  // Remaining class for a sample that failed N-1 consecutive bins.
  std::optional<ClassId> elimination_class(SampleId s) const {
    if (len_[s.value] < n_ - 1) return std::nullopt;
    return bins_[(start_[s.value] + n_ - 1) % n_].cls;
  }

 private:
  struct Pending {
    Query query;
    std::optional<SampleId> s1, s2;
    bool instrumented = false;
  };

  std::optional<SampleId> draw() {
    if (next_fresh_ >= fresh_.size()) {
      drain_ = true;
      return std::nullopt;
    }
    const SampleId s = fresh_[next_fresh_++];
    ++drawn_;
    start_[s.value] = bin_;
    return s;
  }

  SampleId longer(SampleId x, SampleId y) {
    if (len_[x.value] != len_[y.value]) return len_[x.value] > len_[y.value] ? x : y;
    return coin(rng_) ? x : y;
  }

  void settle_eliminated(SampleId s) {
    store_.assign(s, *elimination_class(s));
    ++eliminated_;
  }

  void check_length(SampleId s) const {
    if (len_[s.value] > n_ - 1)
      throw ConsistencyError("greedy: sample " + std::to_string(s.value) +
                             " compared with more than N-1 classes");
  }

  bool temp_occupant(SampleId s) const {
    for (const auto& t : temp_)
      if (t && *t == s) return true;
    return false;
  }

  LabelStore store_;
  GreedyConfig cfg_;
  Rng rng_;
  std::vector<ClassRep> bins_;
  unsigned n_ = 0;
  std::vector<SampleId> fresh_;
  std::size_t next_fresh_ = 0;
  std::size_t drawn_ = 0;
  std::vector<std::uint32_t> len_, start_, queries_of_;
  std::vector<std::optional<SampleId>> temp_;
  std::optional<SampleId> adv_;
  std::optional<SampleId> inherit_;
  bool has_inherit_ = false;
  unsigned bin_ = 0;
  bool drain_ = false;
  bool finished_ = false;
  std::optional<Pending> pending_;
  std::uint64_t eliminated_ = 0;
  std::uint64_t merged_ = 0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, StateTally> tally_;
};

}  // namespace kic
