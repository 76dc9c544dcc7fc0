#pragma once

// MT engine and quality-estimation backends.
//
// Simulated backends are pure functions of (world seed, request id, engine
// id): the hidden quality of a translation is
//   q* = clamp(quality[e][d] + sigma_q * N_q, 0, 1)
// and its QE score is q* + sigma_o * N_o, where N_q and N_o are standard
// normal draws keyed on (seed, fnv1a64(request id), engine id, tag).
//
// HTTP backends speak compact JSON:
//   POST /translate {"id","source","target_lang"} -> {"translation"}
//   POST /score     {"source","hypotheses":[...]} -> {"scores":[...]}
//   POST /embed     {"source"}                    -> {"embedding":[...]}
// Non-2xx responses carry {"error": "..."}.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mtroute/domain.hpp"
#include "mtroute/features.hpp"
#include "mtroute/random.hpp"

namespace mtroute {

class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string translate(const EngineSpec& engine, const TranslationRequest& request) = 0;
};

class QualityEstimator {
 public:
  virtual ~QualityEstimator() = default;
  // One score per hypothesis, in order.
  virtual std::vector<QEScore> batch_score(std::string_view source, std::span<const std::string> hypotheses) = 0;

  QEScore score(std::string_view source, const std::string& hypothesis) {
    return batch_score(source, std::span<const std::string>(&hypothesis, 1)).at(0);
  }
};

inline std::vector<QEScore> batch_qe_score(QualityEstimator& qe, std::string_view source,
                                           std::span<const std::string> hypotheses) {
  return qe.batch_score(source, hypotheses);
}

inline QEScore qe_score(QualityEstimator& qe, std::string_view source, const std::string& hypothesis) {
  return qe.score(source, hypothesis);
}

// ---------------------------------------------------------------------------
// Simulation

// Per-engine, per-domain mean quality plus the hidden-draw noise, and the
// registry of request ids to latent domains that the simulated engines and
// the harness share.
class SimulatedWorld {
 public:
  SimulatedWorld(std::vector<std::vector<double>> quality_matrix, double quality_noise_sigma, std::uint64_t seed)
      : quality_(std::move(quality_matrix)), sigma_(quality_noise_sigma), seed_(seed) {
    if (quality_.empty() || quality_.front().empty()) throw ConfigError("quality matrix must be non-empty");
    for (const auto& row : quality_) {
      if (row.size() != quality_.front().size()) throw ConfigError("quality matrix rows differ in length");
      for (double q : row) {
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quality matrix entries must be in [0, 1]");
      }
    }
    if (!(sigma_ >= 0.0)) throw ConfigError("quality noise sigma must be nonnegative");
  }

  std::size_t num_engines() const noexcept { return quality_.size(); }
  std::size_t num_domains() const noexcept { return quality_.front().size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  double quality_noise_sigma() const noexcept { return sigma_; }
  const std::vector<std::vector<double>>& quality_matrix() const noexcept { return quality_; }
  double mean_quality(EngineId e, int domain) const { return quality_.at(e).at(static_cast<std::size_t>(domain)); }

  void register_request(const std::string& id, int domain) {
    if (domain < 0 || static_cast<std::size_t>(domain) >= num_domains()) {
      throw ConfigError("latent domain " + std::to_string(domain) + " out of range for request '" + id + "'");
    }
    std::lock_guard lock(mutex_);
    domains_.insert_or_assign(id, domain);
  }

  void register_requests(std::span<const TranslationRequest> requests) {
    for (const auto& r : requests) {
      if (!r.latent_domain) throw ConfigError("request '" + r.id + "' has no latent domain");
      register_request(r.id, *r.latent_domain);
    }
  }

  std::optional<int> domain_of(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = domains_.find(id);
    if (it == domains_.end()) return std::nullopt;
    return it->second;
  }

  // Hidden quality of engine `e` on request `id`.
  double true_quality(const std::string& id, EngineId e) const {
    const auto d = domain_of(id);
    if (!d) throw LookupError("unknown request '" + id + "'");
    if (e >= num_engines()) throw LookupError("unknown engine " + std::to_string(e));
    return hidden_draw(id, e, *d);
  }

  double hidden_draw(const std::string& id, EngineId e, int domain) const {
    const double mean = mean_quality(e, domain);
    if (sigma_ == 0.0) return mean;
    KeyedStream stream(mix(seed_, fnv1a64(id), e, fnv1a64("quality")));
    return std::clamp(mean + sigma_ * stream.normal(), 0.0, 1.0);
  }

 private:
  std::vector<std::vector<double>> quality_;
  double sigma_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, int> domains_;
};

// Hypotheses look like "[sim:<engine>:<request id>] w w w ..."; the QE
// simulator recovers (engine, request) from the header.
inline std::string simulated_hypothesis(EngineId e, const std::string& request_id, std::uint64_t seed) {
  std::string out = "[sim:" + std::to_string(e) + ":" + request_id + "]";
  KeyedStream stream(mix(seed, fnv1a64(request_id), e, fnv1a64("text")));
  const std::size_t words = 3 + stream.next_bits() % 6;
  for (std::size_t w = 0; w < words; ++w) {
    out.push_back(' ');
    const std::size_t len = 2 + stream.next_bits() % 7;
    for (std::size_t c = 0; c < len; ++c) out.push_back(static_cast<char>('a' + stream.next_bits() % 26));
  }
  return out;
}

struct ParsedHypothesis {
  EngineId engine;
  std::string request_id;
};

inline std::optional<ParsedHypothesis> parse_simulated_hypothesis(std::string_view h) {
  constexpr std::string_view prefix = "[sim:";
  if (!h.starts_with(prefix)) return std::nullopt;
  h.remove_prefix(prefix.size());
  const auto colon = h.find(':');
  const auto close = h.rfind(']');
  if (colon == std::string_view::npos || close == std::string_view::npos || close < colon || colon == 0) {
    return std::nullopt;
  }
  EngineId e = 0;
  for (char c : h.substr(0, colon)) {
    if (c < '0' || c > '9') return std::nullopt;
    e = e * 10 + static_cast<EngineId>(c - '0');
  }
  return ParsedHypothesis{e, std::string(h.substr(colon + 1, close - colon - 1))};
}

class SimulatedTranslator final : public Translator {
 public:
  explicit SimulatedTranslator(std::shared_ptr<const SimulatedWorld> world) : world_(std::move(world)) {}

  std::string translate(const EngineSpec& engine, const TranslationRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    if (engine.engine_id >= world_->num_engines()) {
      throw BackendError(BackendFailure::kContract, engine.name,
                         "engine id " + std::to_string(engine.engine_id) + " not in simulated world");
    }
    if (!world_->domain_of(request.id)) {
      throw BackendError(BackendFailure::kContract, engine.name,
                         "request '" + request.id + "' not registered with the simulated world");
    }
    return simulated_hypothesis(engine.engine_id, request.id, world_->seed());
  }

  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  std::shared_ptr<const SimulatedWorld> world_;
  std::atomic<std::uint64_t> calls_{0};
};

class SimulatedQualityEstimator final : public QualityEstimator {
 public:
  SimulatedQualityEstimator(std::shared_ptr<const SimulatedWorld> world, double observation_noise_sigma)
      : world_(std::move(world)), sigma_(observation_noise_sigma) {
    if (!(sigma_ >= 0.0)) throw ConfigError("QE noise sigma must be nonnegative");
  }

  std::vector<QEScore> batch_score(std::string_view, std::span<const std::string> hypotheses) override {
    calls_.fetch_add(hypotheses.size(), std::memory_order_relaxed);
    std::vector<QEScore> out;
    out.reserve(hypotheses.size());
    for (const auto& h : hypotheses) {
      const auto parsed = parse_simulated_hypothesis(h);
      if (!parsed || parsed->engine >= world_->num_engines() || !world_->domain_of(parsed->request_id)) {
        throw BackendError(BackendFailure::kContract, "sim-qe", "hypothesis was not produced in this run");
      }
      double s = world_->true_quality(parsed->request_id, parsed->engine);
      if (sigma_ > 0.0) {
        KeyedStream stream(mix(world_->seed(), fnv1a64(parsed->request_id), parsed->engine, fnv1a64("qe")));
        s += sigma_ * stream.normal();
      }
      out.push_back({s});
    }
    return out;
  }

  double sigma() const noexcept { return sigma_; }
  std::uint64_t scored() const noexcept { return calls_.load(); }

 private:
  std::shared_ptr<const SimulatedWorld> world_;
  double sigma_;
  std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// HTTP

struct HttpEndpoint {
  std::string base_url;  // scheme://host:port, optionally with a path prefix
  int connect_timeout_ms = 2000;
  int read_timeout_ms = 10000;
  int write_timeout_ms = 10000;
  std::size_t max_concurrency = 4;
  // Retries on timeout/transport failure only. Every attempt is counted.
  std::size_t max_retries = 0;
};

// One JSON-over-HTTP endpoint with a concurrency cap and an attempt counter.
class JsonClient {
 public:
  JsonClient(HttpEndpoint endpoint, std::string name)
      : endpoint_(std::move(endpoint)),
        name_(std::move(name)),
        slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, endpoint_.max_concurrency))) {
    const auto scheme = endpoint_.base_url.find("://");
    if (scheme == std::string::npos) throw ConfigError(name_ + ": endpoint needs a scheme: " + endpoint_.base_url);
    const auto path = endpoint_.base_url.find('/', scheme + 3);
    host_ = endpoint_.base_url.substr(0, path);
    if (path != std::string::npos) prefix_ = endpoint_.base_url.substr(path);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  const std::string& name() const noexcept { return name_; }
  const HttpEndpoint& endpoint() const noexcept { return endpoint_; }
  std::uint64_t attempts() const noexcept { return attempts_.load(); }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) {
    struct Slot {
      std::counting_semaphore<>& s;
      explicit Slot(std::counting_semaphore<>& sem) : s(sem) { s.acquire(); }
      ~Slot() { s.release(); }
    } slot(slots_);

    const std::string payload = body.dump();
    for (std::size_t attempt = 0;; ++attempt) {
      attempts_.fetch_add(1, std::memory_order_relaxed);
      httplib::Client cli(host_);
      cli.set_connection_timeout(std::chrono::milliseconds(endpoint_.connect_timeout_ms));
      cli.set_read_timeout(std::chrono::milliseconds(endpoint_.read_timeout_ms));
      cli.set_write_timeout(std::chrono::milliseconds(endpoint_.write_timeout_ms));
      auto res = cli.Post(prefix_ + path, payload, "application/json");
      if (!res) {
        const auto err = res.error();
        const auto failure = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                              err == httplib::Error::Write)
                                 ? BackendFailure::kTimeout
                                 : BackendFailure::kTransport;
        if (attempt < endpoint_.max_retries) continue;
        throw BackendError(failure, name_, "POST " + path + ": " + httplib::to_string(err));
      }
      if (res->status < 200 || res->status >= 300) {
        std::string detail = "HTTP " + std::to_string(res->status);
        auto parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_string()) {
          detail += ": " + parsed["error"].get<std::string>();
        }
        throw BackendError(BackendFailure::kStatus, name_, "POST " + path + ": " + detail);
      }
      auto parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded() || !parsed.is_object()) {
        throw BackendError(BackendFailure::kMalformed, name_, "POST " + path + ": response is not a JSON object");
      }
      return parsed;
    }
  }

  [[noreturn]] void malformed(const std::string& what) const {
    throw BackendError(BackendFailure::kMalformed, name_, what);
  }

 private:
  HttpEndpoint endpoint_;
  std::string name_;
  std::string host_;
  std::string prefix_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> attempts_{0};
};

class HttpTranslator final : public Translator {
 public:
  HttpTranslator(HttpEndpoint endpoint, std::string name, std::string target_lang)
      : client_(std::move(endpoint), std::move(name)), target_lang_(std::move(target_lang)) {}

  std::string translate(const EngineSpec&, const TranslationRequest& request) override {
    const auto res = client_.post("/translate", {{"id", request.id}, {"source", request.source}, {"target_lang", target_lang_}});
    if (!res.contains("translation") || !res["translation"].is_string()) {
      client_.malformed("/translate response lacks a string 'translation'");
    }
    return res["translation"].get<std::string>();
  }

  const JsonClient& client() const noexcept { return client_; }

 private:
  JsonClient client_;
  std::string target_lang_;
};

class HttpQualityEstimator final : public QualityEstimator {
 public:
  explicit HttpQualityEstimator(HttpEndpoint endpoint, std::string name = "qe")
      : client_(std::move(endpoint), std::move(name)) {}

  std::vector<QEScore> batch_score(std::string_view source, std::span<const std::string> hypotheses) override {
    const auto res = client_.post("/score", {{"source", std::string(source)},
                                             {"hypotheses", std::vector<std::string>(hypotheses.begin(), hypotheses.end())}});
    if (!res.contains("scores") || !res["scores"].is_array()) client_.malformed("/score response lacks 'scores'");
    const auto& scores = res["scores"];
    if (scores.size() != hypotheses.size()) {
      client_.malformed("/score returned " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(hypotheses.size()) + " hypotheses");
    }
    std::vector<QEScore> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
      if (!s.is_number()) client_.malformed("/score: non-numeric score");
      const double v = s.get<double>();
      if (!std::isfinite(v)) client_.malformed("/score: non-finite score");
      out.push_back({v});
    }
    return out;
  }

  const JsonClient& client() const noexcept { return client_; }

 private:
  JsonClient client_;
};

class HttpEmbedder {
 public:
  HttpEmbedder(HttpEndpoint endpoint, std::size_t dim, std::string name = "embed")
      : client_(std::move(endpoint), std::move(name)), dim_(dim) {}

  std::vector<double> embed(std::string_view source) {
    const auto res = client_.post("/embed", {{"source", std::string(source)}});
    if (!res.contains("embedding") || !res["embedding"].is_array()) client_.malformed("/embed response lacks 'embedding'");
    const auto& e = res["embedding"];
    if (e.size() != dim_) {
      client_.malformed("/embed returned dim " + std::to_string(e.size()) + ", configured " + std::to_string(dim_));
    }
    std::vector<double> out;
    out.reserve(dim_);
    for (const auto& v : e) {
      if (!v.is_number()) client_.malformed("/embed: non-numeric entry");
      out.push_back(v.get<double>());
    }
    return out;
  }

  std::size_t dim() const noexcept { return dim_; }
  const JsonClient& client() const noexcept { return client_; }

 private:
  JsonClient client_;
  std::size_t dim_;
};

// Embeddings fetched once per request id and kept in a VectorStore.
class EmbeddingCache {
 public:
  EmbeddingCache(std::shared_ptr<HttpEmbedder> embedder, VectorStore store = {})
      : embedder_(std::move(embedder)), store_(std::move(store)) {}

  std::vector<double> get(const std::string& id, std::string_view source) {
    {
      std::lock_guard lock(mutex_);
      if (const auto* v = store_.find(id)) return *v;
    }
    auto v = embedder_->embed(source);
    std::lock_guard lock(mutex_);
    store_.put(id, v);
    return v;
  }

  const VectorStore& store() const noexcept { return store_; }

 private:
  std::shared_ptr<HttpEmbedder> embedder_;
  std::mutex mutex_;
  VectorStore store_;
};

}  // namespace mtroute
