#pragma once

// Engine construction from a flat parameter record, shared by the
// experiment runner and the session service.

#include <memory>
#include <vector>

#include <json.hpp>

#include "kic/basic.hpp"
#include "kic/batch.hpp"
#include "kic/greedy.hpp"

namespace kic {

using json = nlohmann::json;

struct EngineParams {
  unsigned algo = 1;
  unsigned k = 2;
  std::uint64_t seed = 1;
  ReorderPolicy reorder = ReorderPolicy::descending;
  bool nonuniform_restart = false;
  std::vector<double> class_priors;
  std::size_t cleanup_threshold = 64;
  unsigned stagnation_rounds = 3;
  std::uint64_t round_cap = 10000;

  json to_json() const {
    return {{"algo", algo},
            {"k", k},
            {"seed", seed},
            {"reorder", to_string(reorder)},
            {"nonuniform_restart", nonuniform_restart},
            {"class_priors", class_priors},
            {"cleanup_threshold", cleanup_threshold},
            {"stagnation_rounds", stagnation_rounds},
            {"round_cap", round_cap}};
  }

  static EngineParams from_json(const json& j) {
    EngineParams p;
    p.algo = j.value("algo", 1u);
    p.k = j.value("k", p.algo == 3 ? 3u : 2u);
    p.seed = j.value("seed", std::uint64_t{1});
    p.reorder = parse_reorder_policy(j.value("reorder", std::string("descending")));
    p.nonuniform_restart = j.value("nonuniform_restart", false);
    p.class_priors = j.value("class_priors", std::vector<double>{});
    p.cleanup_threshold = j.value("cleanup_threshold", std::size_t{64});
    p.stagnation_rounds = j.value("stagnation_rounds", 3u);
    p.round_cap = j.value("round_cap", std::uint64_t{10000});
    if (p.algo < 1 || p.algo > 3) throw ConfigError("algo must be 1, 2 or 3");
    if (p.algo == 3 && p.k != 3) throw ConfigError("algo 3 uses triplet queries (k = 3)");
    return p;
  }
};

inline std::unique_ptr<Engine> make_engine(const Dataset& d, const EngineParams& p) {
  switch (p.algo) {
    case 1: {
      BasicConfig c;
      c.k = p.k;
      c.reorder = p.reorder;
      return std::make_unique<BasicEngine>(d, c);
    }
    case 2: {
      BatchConfig c;
      c.k = p.k;
      c.cleanup_threshold = p.cleanup_threshold;
      c.stagnation_rounds = p.stagnation_rounds;
      c.round_cap = p.round_cap;
      return std::make_unique<BatchEngine>(d, c, p.seed);
    }
    case 3: {
      GreedyConfig c;
      c.nonuniform_restart = p.nonuniform_restart;
      c.class_priors = p.class_priors;
      return std::make_unique<GreedyEngine>(d, c, p.seed);
    }
  }
  throw ConfigError("algo must be 1, 2 or 3");
}

}  // namespace kic
