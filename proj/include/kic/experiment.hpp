#pragma once

// Monte Carlo replicas, theory pairing and the figure/table emitters.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kic/analysis.hpp"
#include "kic/basic.hpp"
#include "kic/batch.hpp"
#include "kic/distributions.hpp"
#include "kic/factory.hpp"
#include "kic/greedy.hpp"
#include "kic/oracle.hpp"
#include "kic/rng.hpp"

namespace kic {

struct DistSpec {
  std::string kind = "uniform";  // uniform | zipf | bigsmall | explicit
  unsigned n = 10;
  double x = 10.0;
  double nu = 1.0;
  std::vector<double> probs;

  ClassDistribution build() const {
    if (kind == "uniform") return uniform(n);
    if (kind == "zipf") return zipf(n, nu);
    if (kind == "bigsmall") return big_small(n, x);
    if (kind == "explicit") return ClassDistribution(probs);
    throw ConfigError("unknown distribution kind '" + kind + "'");
  }

  std::string describe() const {
    std::ostringstream os;
    os << kind;
    if (kind == "zipf") os << "(nu=" << nu << ")";
    if (kind == "bigsmall") os << "(x=" << x << ")";
    if (kind == "explicit") {
      os << "(";
      for (std::size_t i = 0; i < probs.size(); ++i) os << (i ? " " : "") << probs[i];
      os << ")";
    }
    return os.str();
  }
};

struct ExperimentSpec {
  unsigned algo = 1;
  unsigned k = 2;
  DistSpec dist;
  std::size_t L = 100000;
  unsigned replicas = 10;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0: hardware concurrency
  ReorderPolicy reorder = ReorderPolicy::descending;
  bool nonuniform_restart = false;
  std::size_t cleanup_threshold = 64;
  unsigned stagnation_rounds = 3;
  std::uint64_t round_cap = 10000;
  bool keep_rounds = false;  // record per-round survivor distributions

  void validate() const {
    if (algo < 1 || algo > 3) throw ConfigError("algo must be 1, 2 or 3");
    if (algo == 3 && k != 3) throw ConfigError("algo 3 uses triplet queries (k = 3)");
    if (k < 2) throw ConfigError("k must be at least 2");
    if (L == 0) throw ConfigError("L must be positive");
    if (replicas == 0) throw ConfigError("replicas must be positive");
  }
};

struct RoundRecord {
  RoundStats stats;
  std::vector<std::size_t> survivor_counts;  // per true class
};

struct ReplicaResult {
  unsigned replica = 0;
  std::uint64_t queries = 0;
  std::size_t labeled = 0;
  double rate = 0.0;                   // W / labeled
  std::optional<double> steady_rate;   // algo 1
  std::size_t transient_len = 0;
  std::vector<RoundRecord> rounds;     // algo 2
  std::size_t residual = 0;            // algo 2
  bool uneven_last_group = false;
  bool drain_mode_used = false;
  double seconds = 0.0;
};

struct ResultRow {
  ExperimentSpec spec;
  double mean = 0.0;    // per-replica metric: steady rate for algo 1, W/L otherwise
  double stderr_ = 0.0; // over replicas; 0 with a single replica
  double mean_overall = 0.0;  // W/L for every algorithm
  std::optional<double> analytic;
  std::optional<double> rel_error;
  double seconds = 0.0;
  std::vector<ReplicaResult> replicas;
};

inline std::uint64_t replica_data_seed(std::uint64_t master, unsigned r) {
  return derive_seed(master, 2 * static_cast<std::uint64_t>(r));
}
inline std::uint64_t replica_engine_seed(std::uint64_t master, unsigned r) {
  return derive_seed(master, 2 * static_cast<std::uint64_t>(r) + 1);
}

// Final labels against ground truth. Labels are compared directly when the
// engine was given class identities and up to a one-to-one renaming when it
// discovered classes itself. Returns a description of the first mismatch.
inline std::optional<std::string> check_labels(const Dataset& d, const LabelStore& store,
                                               bool exact) {
  std::map<ClassId, ClassId> fwd, back;
  for (std::uint32_t i = 0; i < d.size(); ++i) {
    const auto& item = d.items[i];
    if (item.representative) continue;
    const auto got = store.label(SampleId(i));
    if (!got) return "sample " + std::to_string(i) + " left unlabeled";
    if (!item.truth) continue;
    if (exact) {
      if (*got != *item.truth)
        return "sample " + std::to_string(i) + " labeled " + std::to_string(*got) +
               ", truth " + std::to_string(*item.truth);
      continue;
    }
    auto [f, fnew] = fwd.emplace(*got, *item.truth);
    auto [b, bnew] = back.emplace(*item.truth, *got);
    if (f->second != *item.truth || b->second != *got)
      return "sample " + std::to_string(i) + " breaks the label bijection";
  }
  return std::nullopt;
}

inline ReplicaResult run_replica(const ExperimentSpec& spec, const ClassDistribution& dist,
                                 unsigned r) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto labels = sample_labels(dist, spec.L, replica_data_seed(spec.seed, r));
  const Dataset d = make_dataset(labels, dist.size(), spec.algo == 3);
  SimulatedOracle oracle(d.truth());
  ReplicaResult out;
  out.replica = r;

  auto finish = [&](Engine& e, bool exact) {
    drive(e, oracle);
    if (auto bad = check_labels(d, e.store(), exact))
      throw ConsistencyError(e.name() + " replica " + std::to_string(r) + ": " + *bad);
    const RunStats s = e.stats();
    out.queries = s.queries;
    out.labeled = s.labeled;
    out.rate = s.rate;
    out.steady_rate = s.steady_rate;
    out.transient_len = s.transient_len;
    out.uneven_last_group = s.uneven_last_group;
    out.drain_mode_used = s.drain_mode_used;
  };

  if (spec.algo == 1) {
    BasicConfig c;
    c.k = spec.k;
    c.reorder = spec.reorder;
    BasicEngine e(d, c);
    finish(e, false);
  } else if (spec.algo == 2) {
    BatchConfig c;
    c.k = spec.k;
    c.cleanup_threshold = spec.cleanup_threshold;
    c.stagnation_rounds = spec.stagnation_rounds;
    c.round_cap = spec.round_cap;
    if (spec.keep_rounds) {
      c.on_round = [&](const RoundStats& st, const std::vector<SampleId>& survivors) {
        RoundRecord rec;
        rec.stats = st;
        rec.survivor_counts.assign(dist.size(), 0);
        for (auto s : survivors) ++rec.survivor_counts[labels[s.value]];
        out.rounds.push_back(std::move(rec));
      };
    }
    BatchEngine e(d, c, replica_engine_seed(spec.seed, r));
    finish(e, false);
    if (e.settled_in_rounds() + e.residual_size() != e.total_samples())
      throw ConsistencyError("batch conservation violated");
    out.residual = e.residual_size();
    if (!spec.keep_rounds)
      for (const auto& st : e.rounds()) out.rounds.push_back({st, {}});
  } else {
    GreedyConfig c;
    c.nonuniform_restart = spec.nonuniform_restart;
    if (spec.nonuniform_restart) c.class_priors = dist.probs();
    GreedyEngine e(d, c, replica_engine_seed(spec.seed, r));
    finish(e, true);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Index-ordered parallel map.
template <typename T>
std::vector<T> parallel_map(unsigned count, unsigned workers, const std::function<T(unsigned)>& fn) {
  std::vector<T> out(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::atomic<unsigned> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    while (true) {
      const unsigned i = next++;
      if (i >= count) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// Rounds the batch theory is iterated for: while the predicted batch stays
// at or above the cleanup size.
inline unsigned batch_rounds_for(const ClassDistribution& dist, unsigned k, std::size_t L,
                                 std::size_t cleanup_threshold) {
  const double floor_size = static_cast<double>(std::max<std::size_t>(k, cleanup_threshold));
  ClassDistribution cur = dist;
  double size = static_cast<double>(L);
  unsigned m = 0;
  while (size >= floor_size && m < 10000) {
    const double p = analysis::p_settle(cur, k);
    if (p <= 0) break;
    ++m;
    size *= 1 - p;
    cur = analysis::evolve_distribution(cur, k);
  }
  return std::max(1u, m);
}

inline std::optional<double> analytic_rate(const ExperimentSpec& spec,
                                           const ClassDistribution& dist) {
  switch (spec.algo) {
    case 1: {
      std::vector<ClassId> order = dist.descending_order();
      if (spec.reorder == ReorderPolicy::ascending) std::reverse(order.begin(), order.end());
      if (spec.reorder == ReorderPolicy::fixed) return std::nullopt;
      return analysis::rate_algo1(dist, spec.k, order);
    }
    case 2:
      return analysis::rate_algo2(dist, spec.k,
                                  batch_rounds_for(dist, spec.k, spec.L, spec.cleanup_threshold))
          .avg_rate;
    case 3:
      if (!dist.is_uniform(1e-9) || spec.nonuniform_restart) return std::nullopt;
      return analysis::rate_algo3(static_cast<unsigned>(dist.size())).rate;
  }
  return std::nullopt;
}

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

inline ResultRow run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ClassDistribution dist = spec.dist.build();
  ResultRow row;
  row.spec = spec;
  row.replicas = parallel_map<ReplicaResult>(
      spec.replicas, spec.workers, [&](unsigned r) { return run_replica(spec, dist, r); });
  std::vector<double> metric, overall;
  for (const auto& r : row.replicas) {
    overall.push_back(r.rate);
    metric.push_back(spec.algo == 1 && r.steady_rate ? *r.steady_rate : r.rate);
  }
  std::tie(row.mean, row.stderr_) = mean_stderr(metric);
  row.mean_overall = mean_stderr(overall).first;
  row.analytic = analytic_rate(spec, dist);
  if (row.analytic && *row.analytic != 0)
    row.rel_error = std::abs(row.mean - *row.analytic) / *row.analytic;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// ---------------------------------------------------------------------------
// CSV output.

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) { os_ << std::setprecision(10); }

  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((os_ << (first ? "" : ",") << cells, first = false), ...);
    os_ << '\n';
  }

  void row_vec(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

inline std::string fmt(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

inline void write_replicas_csv(std::ostream& os, const ResultRow& row) {
  CsvWriter w(os);
  w.row("replica", "W", "labeled", "rate", "transient_len");
  for (const auto& r : row.replicas) {
    const double shown = row.spec.algo == 1 && r.steady_rate ? *r.steady_rate : r.rate;
    w.row(r.replica, r.queries, r.labeled, fmt(shown), r.transient_len);
  }
}

inline void write_rounds_csv(std::ostream& os, const ReplicaResult& r, std::size_t n) {
  CsvWriter w(os);
  std::vector<std::string> head = {"round", "L_r", "queries", "settled", "rate_r"};
  for (std::size_t c = 0; c < n; ++c) head.push_back("survivor_p" + std::to_string(c));
  w.row_vec(head);
  for (const auto& rec : r.rounds) {
    std::vector<std::string> cells = {
        std::to_string(rec.stats.round), std::to_string(rec.stats.batch_size),
        std::to_string(rec.stats.queries), std::to_string(rec.stats.settled),
        fmt(rec.stats.rate())};
    std::size_t total = 0;
    for (auto v : rec.survivor_counts) total += v;
    for (std::size_t c = 0; c < n; ++c)
      cells.push_back(rec.survivor_counts.empty() || total == 0
                          ? ""
                          : fmt(static_cast<double>(rec.survivor_counts[c]) /
                                static_cast<double>(total)));
    w.row_vec(cells);
  }
}

// ---------------------------------------------------------------------------
// Reproduction targets.

struct ReproduceOptions {
  std::size_t L = 100000;
  unsigned replicas = 10;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  unsigned n_min = 4, n_max = 20;
  unsigned k_min = 2, k_max = 10;
  double eps = 0.01;  // table1 nonuniform column
  std::function<void(const std::string&)> log;
};

inline void write_meta(const std::filesystem::path& path, const std::string& target,
                       const ReproduceOptions& o, const std::vector<std::string>& files) {
  nlohmann::json meta = {{"target", target},  {"L", o.L},
                         {"replicas", o.replicas}, {"seed", o.seed},
                         {"N_range", {o.n_min, o.n_max}}, {"k_range", {o.k_min, o.k_max}},
                         {"eps", o.eps},      {"files", files}};
  std::ofstream(path) << meta.dump(2) << '\n';
}

inline ExperimentSpec uniform_spec(unsigned algo, unsigned k, unsigned n, const ReproduceOptions& o) {
  ExperimentSpec s;
  s.algo = algo;
  s.k = k;
  s.dist.kind = "uniform";
  s.dist.n = n;
  s.L = o.L;
  s.replicas = o.replicas;
  s.seed = o.seed;
  s.workers = o.workers;
  return s;
}

inline void rate_curve_row(CsvWriter& w, const std::string& x, const ExperimentSpec& s,
                           const ResultRow& r) {
  w.row(x, s.algo, s.k, s.dist.n, fmt(r.mean), fmt(r.stderr_), fmt(r.analytic));
}

inline std::vector<std::string> reproduce_fig4a(const std::filesystem::path& dir,
                                                const ReproduceOptions& o) {
  const auto file = dir / "fig4a.csv";
  std::ofstream os(file);
  CsvWriter w(os);
  w.row("N", "algo", "k", "N_classes", "rate_mean", "rate_stderr", "rate_analytic");
  for (unsigned n = o.n_min; n <= o.n_max; ++n) {
    for (unsigned algo = 1; algo <= 3; ++algo) {
      for (unsigned k : {2u, 3u}) {
        if (algo == 3 && k != 3) continue;
        auto s = uniform_spec(algo, k, n, o);
        auto r = run_experiment(s);
        if (o.log) o.log("fig4a N=" + std::to_string(n) + " algo=" + std::to_string(algo) +
                         " k=" + std::to_string(k) + " rate=" + fmt(r.mean));
        rate_curve_row(w, std::to_string(n), s, r);
      }
    }
  }
  return {file.filename().string()};
}

inline std::vector<std::string> reproduce_fig4b(const std::filesystem::path& dir,
                                                const ReproduceOptions& o) {
  const auto file = dir / "fig4b.csv";
  std::ofstream os(file);
  CsvWriter w(os);
  w.row("k", "algo", "k_echo", "N", "rate_mean", "rate_stderr", "rate_analytic");
  for (unsigned n : {5u, 10u}) {
    for (unsigned k = o.k_min; k <= o.k_max; ++k) {
      for (unsigned algo = 1; algo <= 3; ++algo) {
        if (algo == 3 && k != 3) continue;
        auto s = uniform_spec(algo, k, n, o);
        auto r = run_experiment(s);
        if (o.log) o.log("fig4b N=" + std::to_string(n) + " algo=" + std::to_string(algo) +
                         " k=" + std::to_string(k) + " rate=" + fmt(r.mean));
        rate_curve_row(w, std::to_string(k), s, r);
      }
    }
  }
  return {file.filename().string()};
}

inline std::vector<std::string> reproduce_fig5(const std::filesystem::path& dir,
                                               const ReproduceOptions& o, bool nonuniform) {
  const std::string name = nonuniform ? "fig5a" : "fig5b";
  ExperimentSpec s;
  s.algo = 2;
  s.k = 3;
  s.dist.n = 5;
  if (nonuniform) {
    s.dist.kind = "explicit";
    s.dist.probs = {0.025, 0.025, 0.025, 0.025, 0.9};
  } else {
    s.dist.kind = "uniform";
  }
  s.L = o.L;
  s.replicas = 1;
  s.seed = o.seed;
  s.keep_rounds = true;
  const auto dist = s.dist.build();
  auto row = run_experiment(s);
  const auto& rep = row.replicas.front();
  const auto pred = analysis::rate_algo2(dist, s.k, static_cast<unsigned>(std::max<std::size_t>(1, rep.rounds.size())));

  const auto file = dir / (name + ".csv");
  std::ofstream os(file);
  CsvWriter w(os);
  std::vector<std::string> head = {"round", "L_r", "queries", "settled", "rate_r",
                                   "L_r_predicted", "rate_r_predicted"};
  for (std::size_t c = 0; c < dist.size(); ++c) head.push_back("survivor_p" + std::to_string(c));
  for (std::size_t c = 0; c < dist.size(); ++c) head.push_back("survivor_p" + std::to_string(c) + "_predicted");
  w.row_vec(head);
  for (std::size_t r = 0; r < rep.rounds.size(); ++r) {
    const auto& rec = rep.rounds[r];
    std::vector<std::string> cells = {
        std::to_string(rec.stats.round), std::to_string(rec.stats.batch_size),
        std::to_string(rec.stats.queries), std::to_string(rec.stats.settled),
        fmt(rec.stats.rate()), fmt(pred.batch_fraction[r] * static_cast<double>(s.L)),
        fmt(pred.round_rate[r])};
    std::size_t total = 0;
    for (auto v : rec.survivor_counts) total += v;
    for (std::size_t c = 0; c < dist.size(); ++c)
      cells.push_back(fmt(total ? static_cast<double>(rec.survivor_counts[c]) / static_cast<double>(total) : 0.0));
    const auto next = analysis::evolve_distribution(pred.dist[r], s.k);
    for (std::size_t c = 0; c < dist.size(); ++c) cells.push_back(fmt(next[c]));
    w.row_vec(cells);
  }
  const auto summary = dir / (name + "_summary.csv");
  std::ofstream ss(summary);
  CsvWriter sw(ss);
  sw.row("W", "labeled", "rate", "rate_analytic", "rounds", "residual");
  sw.row(rep.queries, rep.labeled, fmt(rep.rate), fmt(row.analytic), rep.rounds.size(), rep.residual);
  return {file.filename().string(), summary.filename().string()};
}

inline std::vector<std::string> reproduce_table1(const std::filesystem::path& dir,
                                                 const ReproduceOptions& o) {
  const auto file = dir / "table1.csv";
  std::ofstream os(file);
  CsvWriter w(os);
  w.row("scheme", "distribution", "k", "N", "eps", "closed_form", "closed_form_value",
        "exact_value");
  const double eps = o.eps;
  for (unsigned n : {5u, 10u, 20u, 50u, 100u}) {
    for (unsigned k : {2u, 3u, 4u, 5u}) {
      if (k >= n) continue;
      const auto big = big_small(n, 1.0 / eps);
      w.row("alg1", "uniform", k, n, "", "(N+k-1)/(2(k-1))", fmt(analysis::rate_algo1_uniform(n, k)),
            fmt(analysis::rate_algo1(uniform(n), k)));
      w.row("alg1", "bigsmall", k, n, fmt(eps), "1+N*eps/(2(k-1))",
            fmt(analysis::asymptotic_big_cluster(n, k, eps).first),
            fmt(analysis::bounds_algo1_bigsmall(n, k, 1.0 / eps).first));
      const double exact2u = analysis::rate_algo2_uniform(n, k);
      w.row("alg2", "uniform", k, n, "", k == 2 ? "N" : (k == 3 ? "N^2/(3N-1)" : "2N/(k(k-1))"),
            fmt(k == 2 ? static_cast<double>(n)
                       : (k == 3 ? static_cast<double>(n) * n / (3.0 * n - 1)
                                 : analysis::rate_algo2_uniform_asymptotic(n, k))),
            fmt(exact2u));
      w.row("alg2", "bigsmall", k, n, fmt(eps), "1/(k-1)+k*eps/(k-1)^2",
            fmt(analysis::rate_algo2_bigcluster(k, eps)),
            fmt(analysis::rate_algo2(big, k, 1).avg_rate));
      if (k == 3)
        w.row("alg3", "uniform", k, n, "", "0.2N", fmt(0.2 * n),
              n <= 30 ? fmt(analysis::rate_algo3(n).rate) : std::string());
    }
  }
  return {file.filename().string()};
}

inline std::vector<std::string> reproduce(const std::string& target,
                                          const std::filesystem::path& dir,
                                          const ReproduceOptions& o) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  if (target == "fig4a") files = reproduce_fig4a(dir, o);
  else if (target == "fig4b") files = reproduce_fig4b(dir, o);
  else if (target == "fig5a") files = reproduce_fig5(dir, o, true);
  else if (target == "fig5b") files = reproduce_fig5(dir, o, false);
  else if (target == "table1") files = reproduce_table1(dir, o);
  else throw ConfigError("unknown reproduce target '" + target + "'");
  write_meta(dir / (target + ".meta.json"), target, o, files);
  return files;
}

}  // namespace kic
