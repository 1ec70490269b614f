#pragma once

// Dataset manifests: a JSON array of {id, uri?, truth?, representative?}
// records, or an object {"num_classes": N, "items": [...]}. Class indices
// are 0-based.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kic/types.hpp"

namespace kic {

inline Dataset dataset_from_json(const nlohmann::json& j) {
  const nlohmann::json* items = &j;
  Dataset d;
  if (j.is_object()) {
    if (!j.contains("items")) throw ConfigError("manifest object needs an 'items' array");
    items = &j.at("items");
    if (j.contains("num_classes")) {
      const auto n = j.at("num_classes").get<long long>();
      if (n <= 0) throw ConfigError("num_classes must be positive");
      d.num_classes_hint = static_cast<std::uint32_t>(n);
    }
  }
  if (!items->is_array()) throw ConfigError("manifest must be a JSON array of records");
  for (const auto& rec : *items) {
    if (!rec.is_object() || !rec.contains("id"))
      throw ConfigError("manifest record without an id");
    const auto& id = rec.at("id");
    if (!id.is_number_integer() || id.get<long long>() < 0)
      throw ConfigError("manifest ids must be non-negative integers");
    DatasetItem it;
    it.external_id = id.get<std::uint64_t>();
    if (rec.contains("uri") && !rec.at("uri").is_null()) it.uri = rec.at("uri").get<std::string>();
    if (rec.contains("truth") && !rec.at("truth").is_null()) {
      const auto t = rec.at("truth").get<long long>();
      if (t < 0) throw ConfigError("class indices are 0-based and non-negative");
      it.truth = static_cast<ClassId>(t);
    }
    if (rec.contains("representative")) it.representative = rec.at("representative").get<bool>();
    d.items.push_back(std::move(it));
  }
  if (d.items.empty()) throw ConfigError("manifest has no items");
  d.validate();
  return d;
}

inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : d.items) {
    nlohmann::json rec = {{"id", it.external_id}};
    if (!it.uri.empty()) rec["uri"] = it.uri;
    if (it.truth) rec["truth"] = *it.truth;
    if (it.representative) rec["representative"] = true;
    items.push_back(std::move(rec));
  }
  if (!d.num_classes_hint) return items;
  return {{"num_classes", *d.num_classes_hint}, {"items", items}};
}

inline Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
  }
  return dataset_from_json(j);
}

inline void save_manifest(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path);
  out << dataset_to_json(d).dump(2) << '\n';
}

}  // namespace kic
