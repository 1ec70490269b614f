// kic: simulation, analysis, reproduction and annotation service front end.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>

#include "kic/analysis.hpp"
#include "kic/combinatorics.hpp"
#include "kic/experiment.hpp"
#include "kic/manifest.hpp"
#include "kic/session.hpp"

namespace {

using namespace kic;

struct DistArgs {
  std::string kind = "uniform";
  unsigned n = 10;
  double x = 10.0;
  double nu = 1.0;
  double eps = 0.0;
  std::vector<double> probs;

  void add(CLI::App* app) {
    app->add_option("--dist", kind, "uniform | zipf | bigsmall | explicit")
        ->check(CLI::IsMember({"uniform", "zipf", "bigsmall", "explicit"}));
    app->add_option("--N", n, "number of classes");
    app->add_option("--x", x, "bigsmall: size ratio of the distinct class");
    app->add_option("--eps", eps, "bigsmall: use x = 1/eps");
    app->add_option("--nu", nu, "zipf exponent");
    app->add_option("--probs", probs, "explicit class probabilities")->delimiter(',');
  }

  DistSpec spec() const {
    DistSpec d;
    d.kind = kind;
    d.n = kind == "explicit" ? static_cast<unsigned>(probs.size()) : n;
    d.x = eps > 0 ? 1.0 / eps : x;
    d.nu = nu;
    d.probs = probs;
    return d;
  }
};

std::ostream& open_out(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) throw ConfigError("cannot write " + path);
  return *holder;
}

int run_simulate(const ExperimentSpec& spec, const std::string& out, const std::string& rounds_out) {
  const ResultRow row = run_experiment(spec);
  std::unique_ptr<std::ofstream> f;
  write_replicas_csv(open_out(out, f), row);
  if (!rounds_out.empty() && spec.algo == 2) {
    std::ofstream r(rounds_out);
    write_rounds_csv(r, row.replicas.front(), spec.dist.build().size());
  }
  std::cerr << "algo " << spec.algo << " k=" << spec.k << " " << spec.dist.describe()
            << " N=" << spec.dist.build().size() << " L=" << spec.L << " reps=" << spec.replicas
            << ": rate " << fmt(row.mean) << " +- " << fmt(row.stderr_);
  if (spec.algo == 1) std::cerr << " (steady state; overall W/L " << fmt(row.mean_overall) << ")";
  if (row.analytic) std::cerr << ", analytic " << fmt(*row.analytic) << ", rel. error " << fmt(*row.rel_error);
  std::cerr << '\n';
  for (const auto& r : row.replicas) {
    if (r.uneven_last_group) {
      std::cerr << "note: classes do not split evenly into groups of k-1\n";
      break;
    }
  }
  for (const auto& r : row.replicas) {
    if (r.drain_mode_used) {
      std::cerr << "note: drain mode handled the final samples\n";
      break;
    }
  }
  return 0;
}

int run_analyze(unsigned algo, unsigned k, const DistSpec& ds, unsigned rounds,
                std::optional<double> price, const std::string& out) {
  std::unique_ptr<std::ofstream> f;
  std::ostream& os = open_out(out, f);
  CsvWriter w(os);
  const ClassDistribution dist = ds.build();
  double headline = 0.0;
  if (algo == 1) {
    w.row("ordering", "k", "N", "rate");
    auto order = dist.descending_order();
    headline = analysis::rate_algo1(dist, k, order);
    w.row("descending", k, dist.size(), fmt(headline));
    std::reverse(order.begin(), order.end());
    w.row("ascending", k, dist.size(), fmt(analysis::rate_algo1(dist, k, order)));
    if (ds.kind == "bigsmall" && k < dist.size()) {
      const auto b = analysis::bounds_algo1_bigsmall(static_cast<unsigned>(dist.size()), k, ds.x);
      w.row("exact_first", k, dist.size(), fmt(b.first));
      w.row("exact_last", k, dist.size(), fmt(b.last));
    }
  } else if (algo == 2) {
    const auto p = analysis::rate_algo2(dist, k, rounds);
    w.row("round", "batch_fraction", "p_settle", "rate_r", "avg_rate_1_to_r");
    for (unsigned r = 0; r < rounds; ++r) {
      const auto upto = analysis::rate_algo2(dist, k, r + 1).avg_rate;
      w.row(r + 1, fmt(p.batch_fraction[r]), fmt(p.settle[r]), fmt(p.round_rate[r]), fmt(upto));
    }
    headline = p.avg_rate;
  } else {
    if (!dist.is_uniform(1e-9)) throw ConfigError("the Markov model covers uniform classes only");
    const auto m = analysis::solve_markov(static_cast<unsigned>(dist.size()));
    const auto g = analysis::rate_algo3(m);
    w.row("q", "P(Q=q)", "hazard");
    for (std::size_t q = 0; q < g.pq.size(); ++q) w.row(q + 1, fmt(g.pq[q]), fmt(g.hazard[q]));
    std::cerr << "fixed point after " << m.iterations << " iterations, residual " << m.residual << '\n';
    headline = g.rate;
  }
  std::cerr << "analytic rate " << fmt(headline) << " queries/sample\n";
  if (price) std::cerr << "budget " << fmt(analysis::budget(headline, *price)) << " per sample\n";
  return 0;
}

int run_combinatorics(unsigned max_k, unsigned max_n, const std::string& out_dir) {
  if (max_k < 2 || max_k > comb::CountTable::kMaxK)
    throw ConfigError("--max-k must be in [2, 64]");
  std::unique_ptr<std::ofstream> fg, ff;
  std::ostream* g_os = &std::cout;
  std::ostream* f_os = &std::cout;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    fg = std::make_unique<std::ofstream>(std::filesystem::path(out_dir) / "g_table.csv");
    ff = std::make_unique<std::ofstream>(std::filesystem::path(out_dir) / "f_curves.csv");
    g_os = fg.get();
    f_os = ff.get();
  }
  CsvWriter g(*g_os);
  g.row("k", "i", "g");
  for (unsigned k = 1; k <= max_k; ++k)
    for (unsigned i = 1; i <= k; ++i) g.row(k, i, comb::to_string(comb::g(k, i)));
  if (out_dir.empty()) std::cout << '\n';
  CsvWriter f(*f_os);
  f.row("k", "N", "f", "bits");
  for (unsigned k = 2; k <= max_k; ++k)
    for (unsigned n = 1; n <= max_n; ++n)
      f.row(k, n, comb::to_string(comb::f(k, n)), fmt(comb::redundancy_bits(k, n)));
  return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(int port, const std::string& host, const std::string& manifest,
              const std::string& static_dir, const std::string& data_dir) {
  std::optional<Dataset> d;
  if (!manifest.empty()) d = load_manifest(manifest);
  SessionManager mgr(data_dir.empty() ? default_data_dir() : std::filesystem::path(data_dir), d);
  httplib::Server server;
  register_routes(server, mgr, static_dir.empty() ? std::nullopt : std::optional<std::string>(static_dir));
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "serving on http://" << host << ":" << port << " (sessions in " << mgr.dir().string()
            << ")\n";
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on port " + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-ary incidence coding labeling toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo runs of one algorithm");
  ExperimentSpec spec;
  DistArgs sim_dist;
  std::string sim_out, sim_rounds_out, sim_reorder = "descending";
  sim->add_option("--algo", spec.algo, "1 basic, 2 batch, 3 greedy triplet")->required()->check(CLI::Range(1, 3));
  sim->add_option("--k", spec.k, "items per query");
  sim->add_option("--L", spec.L, "samples per replica");
  sim->add_option("--reps", spec.replicas, "replicas");
  sim->add_option("--seed", spec.seed, "master seed");
  sim->add_option("--workers", spec.workers, "parallel replicas (0: all cores)");
  sim->add_option("--reorder", sim_reorder, "algo 1: descending | ascending | fixed");
  sim->add_flag("--nonuniform-restart", spec.nonuniform_restart, "algo 3: size-ordered bins with restarts");
  sim->add_option("--cleanup-threshold", spec.cleanup_threshold, "algo 2: batch size that triggers cleanup");
  sim->add_option("--stagnation-rounds", spec.stagnation_rounds, "algo 2: merge-free rounds before cleanup");
  sim->add_option("--round-cap", spec.round_cap, "algo 2: maximum rounds");
  sim->add_option("--out", sim_out, "replica CSV (default stdout)");
  sim->add_option("--rounds-out", sim_rounds_out, "algo 2: per-round CSV of replica 0");
  sim_dist.add(sim);

  // analyze
  auto* ana = app.add_subcommand("analyze", "closed-form and Markov-model rates");
  unsigned ana_algo = 1, ana_k = 2, ana_rounds = 20;
  DistArgs ana_dist;
  std::optional<double> price;
  std::string ana_out;
  ana->add_option("--algo", ana_algo)->required()->check(CLI::Range(1, 3));
  ana->add_option("--k", ana_k);
  ana->add_option("--rounds", ana_rounds, "algo 2: rounds to iterate");
  ana->add_option("--price", price, "price per query for a budget estimate");
  ana->add_option("--out", ana_out, "CSV output (default stdout)");
  ana_dist.add(ana);

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "emit figure/table data as CSV");
  std::string target, out_dir = "results";
  ReproduceOptions ro;
  rep->add_option("--target", target)->required()->check(CLI::IsMember({"fig4a", "fig4b", "fig5a", "fig5b", "table1"}));
  rep->add_option("--out", out_dir, "output directory");
  rep->add_option("--L", ro.L);
  rep->add_option("--reps", ro.replicas);
  rep->add_option("--seed", ro.seed);
  rep->add_option("--workers", ro.workers);
  rep->add_option("--eps", ro.eps, "table1: eps for the big-cluster column");

  // combinatorics
  auto* cmb = app.add_subcommand("combinatorics", "valid-response counts and redundancy");
  unsigned max_k = 10, max_n = 0;
  std::string cmb_out;
  cmb->add_option("--max-k", max_k);
  cmb->add_option("--max-N", max_n, "largest N for f/bits (default max-k)");
  cmb->add_option("--out", cmb_out, "directory for g_table.csv and f_curves.csv (default stdout)");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP annotation sessions");
  int port = 8080;
  std::string host = "127.0.0.1", manifest, static_dir, data_dir;
  srv->add_option("--port", port);
  srv->add_option("--host", host);
  srv->add_option("--data", manifest, "default dataset manifest (JSON)");
  srv->add_option("--static", static_dir, "directory served at /");
  srv->add_option("--data-dir", data_dir, "session logs (default $KIC_DATA_DIR or ./kic-sessions)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      spec.dist = sim_dist.spec();
      spec.reorder = parse_reorder_policy(sim_reorder);
      if (spec.algo == 3 && !sim->count("--k")) spec.k = 3;
      return run_simulate(spec, sim_out, sim_rounds_out);
    }
    if (*ana) {
      if (ana_algo == 3 && !ana->count("--k")) ana_k = 3;
      return run_analyze(ana_algo, ana_k, ana_dist.spec(), ana_rounds, price, ana_out);
    }
    if (*rep) {
      ro.log = [](const std::string& s) { std::cerr << s << '\n'; };
      for (const auto& f : reproduce(target, out_dir, ro)) std::cout << (std::filesystem::path(out_dir) / f).string() << '\n';
      return 0;
    }
    if (*cmb) return run_combinatorics(max_k, max_n ? max_n : max_k, cmb_out);
    if (*srv) return run_serve(port, host, manifest, static_dir, data_dir);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ConsistencyError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 3;
  } catch (const OracleViolation& e) {
    std::cerr << "invalid oracle response: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
