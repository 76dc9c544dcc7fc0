#pragma once

// Core value types shared across the router: requests, feature vectors,
// engines, class probabilities, router configuration and the per-step audit
// record.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtroute/error.hpp"
#include "mtroute/text.hpp"

namespace mtroute {

using EngineId = std::size_t;

class Translator;

class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v)) throw FormatError("feature vector entry is not finite");
    }
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> values_;
};

struct TranslationRequest {
  std::string id;
  std::string source;
  FeatureVector features;
  std::uint64_t arrival_index = 0;
  // Simulation ground truth. Only the harness and the simulated backends read it.
  std::optional<int> latent_domain;
};

struct EngineSpec {
  EngineId engine_id = 0;
  std::string name;
  double price_per_million_chars = 0.0;
  std::shared_ptr<Translator> backend;
};

// A probability vector over engines. Construction enforces the simplex
// within 1e-9.
class ClassProbabilities {
 public:
  static constexpr double kTolerance = 1e-9;

  explicit ClassProbabilities(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw FormatError("class probabilities: empty vector");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= -kTolerance && p <= 1.0 + kTolerance)) {
        throw FormatError("class probabilities: entry outside [0, 1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kTolerance) throw FormatError("class probabilities: entries do not sum to 1");
    for (double& p : probs_) p = std::clamp(p, 0.0, 1.0);
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> values() const noexcept { return probs_; }

  // Index of the largest probability; ties go to the lowest engine id.
  EngineId argmax() const noexcept {
    EngineId best = 0;
    for (EngineId i = 1; i < probs_.size(); ++i) {
      if (probs_[i] > probs_[best]) best = i;
    }
    return best;
  }

 private:
  std::vector<double> probs_;
};

struct QEScore {
  double value = 0.0;

  friend bool operator==(const QEScore&, const QEScore&) = default;
};

struct RerankPolicy {
  enum class Kind { kAuto, kFull, kLazy, kSubset };

  Kind kind = Kind::kAuto;
  std::size_t subset_size = 64;

  static RerankPolicy full() { return {Kind::kFull, 0}; }
  static RerankPolicy lazy() { return {Kind::kLazy, 0}; }
  static RerankPolicy subset(std::size_t n) { return {Kind::kSubset, n}; }
  static RerankPolicy automatic() { return {}; }

  // kAuto resolves to full for small queues and subset(64) above 1024 entries.
  RerankPolicy resolve(std::size_t queue_size) const {
    if (kind != Kind::kAuto) return *this;
    return queue_size <= 1024 ? full() : subset(64);
  }

  friend bool operator==(const RerankPolicy&, const RerankPolicy&) = default;
};

enum class LearningRateSchedule { kConstant, kInverseSqrt };

struct RouterConfig {
  std::size_t max_mts = 1;
  double alpha = 0.2;
  std::uint64_t seed = 0;
  double learning_rate = 0.1;
  LearningRateSchedule lr_schedule = LearningRateSchedule::kConstant;
  double l2 = 1e-6;
  RerankPolicy rerank_policy;
  bool standardize_features = false;
  // Issue explore-step backend calls concurrently. Results are still
  // processed in engine-id order.
  bool parallel_backend_calls = false;
};

struct StepOutcome {
  std::string request_id;
  EngineId chosen_engine = 0;
  std::string translation;
  std::vector<EngineId> engines_called;  // ascending, distinct
  std::size_t qe_calls = 0;
  double cost = 0.0;
  bool explored = false;
  EngineId learned_label = 0;
  double entropy_at_decision = 0.0;
  std::size_t source_chars = 0;
};

inline double call_cost(const EngineSpec& engine, std::size_t source_chars) {
  return engine.price_per_million_chars * static_cast<double>(source_chars) / 1e6;
}

// Sum over `called` in the order given; callers pass ascending ids so the
// floating-point sum is reproducible.
inline double step_cost(std::span<const EngineSpec> engines, std::span<const EngineId> called,
                        std::size_t source_chars) {
  double total = 0.0;
  for (EngineId e : called) total += call_cost(engines[e], source_chars);
  return total;
}

inline void validate_engines(std::span<const EngineSpec> engines) {
  if (engines.empty()) throw ConfigError("at least one engine is required");
  std::vector<bool> seen(engines.size(), false);
  for (const auto& e : engines) {
    if (e.engine_id >= engines.size()) {
      throw ConfigError("engine '" + e.name + "': engine_id " + std::to_string(e.engine_id) +
                        " leaves a gap in 0.." + std::to_string(engines.size() - 1));
    }
    if (seen[e.engine_id]) throw ConfigError("duplicate engine_id " + std::to_string(e.engine_id));
    seen[e.engine_id] = true;
    if (!std::isfinite(e.price_per_million_chars) || e.price_per_million_chars < 0.0) {
      throw ConfigError("engine '" + e.name + "': price must be a nonnegative number");
    }
  }
  for (std::size_t i = 0; i < engines.size(); ++i) {
    if (engines[i].engine_id != i) throw ConfigError("engines must be listed in engine_id order");
  }
}

inline RouterConfig validate_config(RouterConfig config, std::span<const EngineSpec> engines) {
  validate_engines(engines);
  const std::size_t k = engines.size();
  if (config.max_mts < 1 || config.max_mts > k) {
    throw ConfigError("max_mts must be in [1, " + std::to_string(k) + "], got " +
                      std::to_string(config.max_mts));
  }
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(config.l2 >= 0.0) || !std::isfinite(config.l2)) throw ConfigError("l2 must be nonnegative");
  if (config.rerank_policy.kind == RerankPolicy::Kind::kSubset && config.rerank_policy.subset_size == 0) {
    throw ConfigError("subset rerank policy needs n >= 1");
  }
  return config;
}

}  // namespace mtroute
