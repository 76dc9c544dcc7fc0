#pragma once

// JSON configuration. Top-level sections, all optional:
//
//   engines     [{name, price_per_million_chars, backend: {kind: "sim", quality: [..]}
//                                                 | {kind: "http", endpoint, target_lang, ...}}]
//   router      {max_mts, alpha, seed, learning_rate, lr_schedule: "constant"|"inv_sqrt", l2,
//                rerank_policy: "auto"|"full"|"lazy"|"subset:N", standardize_features,
//                parallel_backend_calls}
//   simulation  {n_requests, n_domains, feature_dim, feature_signal, feature_noise_sigma,
//                corpus_seed, world_seed, quality_noise_sigma, qe_noise_sigma}
//   experiment  {max_mts: [..], alpha: [..], repetitions, base_seed, f1_window, confusion_prefix}
//   qe          {kind: "sim"} | {kind: "http", endpoint, ...}
//   features    {surface, trigram_buckets, embedding_dim, embeddings_path}
//
// HTTP endpoint objects accept connect_timeout_ms, timeout_ms (read and
// write), max_concurrency and max_retries. Unknown keys are rejected.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtroute/backends.hpp"
#include "mtroute/domain.hpp"
#include "mtroute/features.hpp"
#include "mtroute/harness.hpp"
#include "mtroute/simulation.hpp"

namespace mtroute {

struct EngineConfig {
  std::string name;
  double price_per_million_chars = 0.0;
  bool http = false;
  HttpEndpoint endpoint;
  std::string target_lang = "de";
  std::vector<double> quality;  // simulated engines only
};

struct SimulationConfig {
  CorpusParams corpus;
  double quality_noise_sigma = 0.03;
  double qe_noise_sigma = 0.02;
  std::uint64_t world_seed = 7;
};

struct ExperimentConfig {
  GridSpec grid{{1, 2, 3, 4, 5, 6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}};
  std::size_t repetitions = 2;
  std::uint64_t base_seed = 0;
  std::size_t f1_window = 100;
  std::size_t confusion_prefix = 100;
};

struct QeConfig {
  bool http = false;
  HttpEndpoint endpoint;
};

struct AppConfig {
  std::vector<EngineConfig> engines;
  RouterConfig router;
  SimulationConfig simulation;
  ExperimentConfig experiment;
  QeConfig qe;
  FeatureOptions features;
  std::optional<std::string> embeddings_path;
};

namespace detail {

using nlohmann::json;

inline void allow_keys(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError(std::string(section) + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const char* section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(section) + "." + key + ": wrong type");
  }
}

inline HttpEndpoint parse_endpoint(const json& j, const char* section) {
  HttpEndpoint ep;
  read(j, "endpoint", ep.base_url, section);
  if (ep.base_url.empty()) throw ConfigError(std::string(section) + ": http backend needs an endpoint");
  read(j, "connect_timeout_ms", ep.connect_timeout_ms, section);
  if (j.contains("timeout_ms")) {
    read(j, "timeout_ms", ep.read_timeout_ms, section);
    ep.write_timeout_ms = ep.read_timeout_ms;
  }
  read(j, "max_concurrency", ep.max_concurrency, section);
  read(j, "max_retries", ep.max_retries, section);
  return ep;
}

inline RerankPolicy parse_policy(const std::string& s) {
  if (s == "auto") return RerankPolicy::automatic();
  if (s == "full") return RerankPolicy::full();
  if (s == "lazy") return RerankPolicy::lazy();
  if (s.starts_with("subset:")) {
    try {
      const auto n = parse_u64(std::string_view(s).substr(7));
      if (n == 0) throw ConfigError("subset rerank policy needs n >= 1");
      return RerankPolicy::subset(n);
    } catch (const FormatError&) {
    }
  }
  throw ConfigError("rerank_policy must be auto, full, lazy or subset:N, got '" + s + "'");
}

}  // namespace detail

inline std::string to_string(const RerankPolicy& p) {
  switch (p.kind) {
    case RerankPolicy::Kind::kAuto: return "auto";
    case RerankPolicy::Kind::kFull: return "full";
    case RerankPolicy::Kind::kLazy: return "lazy";
    case RerankPolicy::Kind::kSubset: return "subset:" + std::to_string(p.subset_size);
  }
  return "auto";
}

inline std::vector<EngineConfig> parse_engines(const nlohmann::json& arr) {
  using detail::read;
  if (!arr.is_array()) throw ConfigError("engines: expected an array");
  std::vector<EngineConfig> out;
  for (const auto& j : arr) {
    detail::allow_keys(j, "engines[]", {"name", "price_per_million_chars", "backend"});
    EngineConfig e;
    read(j, "name", e.name, "engines[]");
    if (e.name.empty()) e.name = "engine-" + std::to_string(out.size());
    if (!j.contains("price_per_million_chars")) throw ConfigError("engine '" + e.name + "': missing price");
    read(j, "price_per_million_chars", e.price_per_million_chars, "engines[]");
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      std::string kind = "sim";
      if (b.is_object()) read(b, "kind", kind, "backend");
      if (kind == "sim") {
        detail::allow_keys(b, "backend", {"kind", "quality"});
        read(b, "quality", e.quality, "backend");
      } else if (kind == "http") {
        detail::allow_keys(b, "backend", {"kind", "endpoint", "target_lang", "connect_timeout_ms", "timeout_ms",
                                          "max_concurrency", "max_retries"});
        e.http = true;
        e.endpoint = detail::parse_endpoint(b, "backend");
        read(b, "target_lang", e.target_lang, "backend");
      } else {
        throw ConfigError("engine '" + e.name + "': backend kind must be sim or http");
      }
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ConfigError("engines: list is empty");
  return out;
}

inline std::vector<EngineConfig> default_engine_configs() {
  std::vector<EngineConfig> out;
  for (const auto& d : default_engine_table()) out.push_back({d.name, d.price_per_million_chars, false, {}, "de", d.quality});
  return out;
}

inline AppConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  detail::allow_keys(j, "config", {"engines", "router", "simulation", "experiment", "qe", "features"});
  AppConfig c;
  c.engines = j.contains("engines") ? parse_engines(j.at("engines")) : default_engine_configs();

  if (j.contains("router")) {
    const auto& r = j.at("router");
    detail::allow_keys(r, "router", {"max_mts", "alpha", "seed", "learning_rate", "lr_schedule", "l2",
                                     "rerank_policy", "standardize_features", "parallel_backend_calls"});
    read(r, "max_mts", c.router.max_mts, "router");
    read(r, "alpha", c.router.alpha, "router");
    read(r, "seed", c.router.seed, "router");
    read(r, "learning_rate", c.router.learning_rate, "router");
    read(r, "l2", c.router.l2, "router");
    read(r, "standardize_features", c.router.standardize_features, "router");
    read(r, "parallel_backend_calls", c.router.parallel_backend_calls, "router");
    std::string s;
    read(r, "lr_schedule", s, "router");
    if (s == "inv_sqrt") c.router.lr_schedule = LearningRateSchedule::kInverseSqrt;
    else if (!s.empty() && s != "constant") throw ConfigError("router.lr_schedule must be constant or inv_sqrt");
    s.clear();
    read(r, "rerank_policy", s, "router");
    if (!s.empty()) c.router.rerank_policy = detail::parse_policy(s);
  }

  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    detail::allow_keys(s, "simulation", {"n_requests", "n_domains", "feature_dim", "feature_signal",
                                         "feature_noise_sigma", "corpus_seed", "world_seed",
                                         "quality_noise_sigma", "qe_noise_sigma"});
    read(s, "n_requests", c.simulation.corpus.n_requests, "simulation");
    read(s, "n_domains", c.simulation.corpus.n_domains, "simulation");
    read(s, "feature_dim", c.simulation.corpus.feature_dim, "simulation");
    read(s, "feature_signal", c.simulation.corpus.feature_signal, "simulation");
    read(s, "feature_noise_sigma", c.simulation.corpus.feature_noise_sigma, "simulation");
    read(s, "corpus_seed", c.simulation.corpus.seed, "simulation");
    read(s, "world_seed", c.simulation.world_seed, "simulation");
    read(s, "quality_noise_sigma", c.simulation.quality_noise_sigma, "simulation");
    read(s, "qe_noise_sigma", c.simulation.qe_noise_sigma, "simulation");
  }

  if (j.contains("experiment")) {
    const auto& e = j.at("experiment");
    detail::allow_keys(e, "experiment", {"max_mts", "alpha", "repetitions", "base_seed", "f1_window",
                                         "confusion_prefix"});
    read(e, "max_mts", c.experiment.grid.max_mts, "experiment");
    read(e, "alpha", c.experiment.grid.alpha, "experiment");
    read(e, "repetitions", c.experiment.repetitions, "experiment");
    read(e, "base_seed", c.experiment.base_seed, "experiment");
    read(e, "f1_window", c.experiment.f1_window, "experiment");
    read(e, "confusion_prefix", c.experiment.confusion_prefix, "experiment");
  }

  if (j.contains("qe")) {
    const auto& q = j.at("qe");
    std::string kind = "sim";
    read(q, "kind", kind, "qe");
    if (kind == "http") {
      detail::allow_keys(q, "qe", {"kind", "endpoint", "connect_timeout_ms", "timeout_ms", "max_concurrency",
                                   "max_retries"});
      c.qe.http = true;
      c.qe.endpoint = detail::parse_endpoint(q, "qe");
    } else if (kind == "sim") {
      detail::allow_keys(q, "qe", {"kind"});
    } else {
      throw ConfigError("qe.kind must be sim or http");
    }
  }

  if (j.contains("features")) {
    const auto& f = j.at("features");
    detail::allow_keys(f, "features", {"surface", "trigram_buckets", "embedding_dim", "embeddings_path"});
    read(f, "surface", c.features.surface, "features");
    read(f, "trigram_buckets", c.features.trigram_buckets, "features");
    if (f.contains("embedding_dim") && !f.at("embedding_dim").is_null()) {
      std::size_t d = 0;
      read(f, "embedding_dim", d, "features");
      c.features.embedding_dim = d;
    }
    if (f.contains("embeddings_path") && !f.at("embeddings_path").is_null()) {
      std::string p;
      read(f, "embeddings_path", p, "features");
      c.embeddings_path = p;
    }
  }
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  auto j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

inline AppConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

// World parameters for simulated engines: each engine's quality row comes
// from its config, or from the default table when absent.
inline WorldParams world_params(const AppConfig& c) {
  WorldParams w;
  w.quality_noise_sigma = c.simulation.quality_noise_sigma;
  w.qe_noise_sigma = c.simulation.qe_noise_sigma;
  w.seed = c.simulation.world_seed;
  const auto& table = default_engine_table();
  for (std::size_t e = 0; e < c.engines.size(); ++e) {
    const auto& ec = c.engines[e];
    if (ec.http) throw ConfigError("engine '" + ec.name + "' is not simulated");
    std::vector<double> q = ec.quality;
    if (q.empty()) {
      if (e >= table.size() || c.simulation.corpus.n_domains != table[e].quality.size()) {
        throw ConfigError("engine '" + ec.name + "': needs a backend.quality row with one entry per domain");
      }
      q = table[e].quality;
    }
    if (q.size() != c.simulation.corpus.n_domains) {
      throw ConfigError("engine '" + ec.name + "': quality row length differs from n_domains");
    }
    w.quality_matrix.push_back(std::move(q));
    w.prices.push_back(ec.price_per_million_chars);
    w.names.push_back(ec.name);
  }
  return w;
}

inline bool all_simulated(const AppConfig& c) {
  for (const auto& e : c.engines) {
    if (e.http) return false;
  }
  return !c.qe.http;
}

// Engines bound to HTTP backends.
inline std::vector<EngineSpec> http_engines(const AppConfig& c) {
  std::vector<EngineSpec> out;
  for (std::size_t e = 0; e < c.engines.size(); ++e) {
    const auto& ec = c.engines[e];
    if (!ec.http) throw ConfigError("engine '" + ec.name + "': cannot mix simulated engines with remote ones");
    out.push_back({e, ec.name, ec.price_per_million_chars,
                   std::make_shared<HttpTranslator>(ec.endpoint, ec.name, ec.target_lang)});
  }
  validate_engines(out);
  return out;
}

}  // namespace mtroute
