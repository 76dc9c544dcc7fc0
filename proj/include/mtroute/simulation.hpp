#pragma once

// Seeded synthetic corpora. Each request has a latent domain d drawn
// uniformly from D; its features are signal * onehot(d) in the first D
// dimensions plus independent Gaussian noise in all F dimensions. Every
// request is derived from (seed, index) alone.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mtroute/backends.hpp"
#include "mtroute/domain.hpp"
#include "mtroute/random.hpp"
#include "mtroute/util.hpp"

namespace mtroute {

struct CorpusParams {
  std::size_t n_requests = 2000;
  std::size_t n_domains = 4;
  std::size_t feature_dim = 32;
  double feature_signal = 3.0;
  double feature_noise_sigma = 0.5;
  std::uint64_t seed = 1;
};

inline void validate(const CorpusParams& p) {
  if (p.n_requests == 0) throw ConfigError("corpus: n_requests must be positive");
  if (p.n_domains == 0) throw ConfigError("corpus: n_domains must be positive");
  if (p.feature_dim < p.n_domains) throw ConfigError("corpus: feature_dim must be >= n_domains");
  if (!(p.feature_signal >= 0.0)) throw ConfigError("corpus: feature_signal must be >= 0");
  if (!(p.feature_noise_sigma >= 0.0)) throw ConfigError("corpus: feature_noise_sigma must be >= 0");
}

inline std::string request_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%06zu", index);
  return buf;
}

inline std::string synthetic_source(std::uint64_t seed, std::size_t index) {
  KeyedStream stream(mix(seed, index, fnv1a64("source")));
  const std::size_t words = 4 + stream.next_bits() % 27;
  std::string out;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out.push_back(' ');
    const std::size_t len = 1 + stream.next_bits() % 10;
    for (std::size_t c = 0; c < len; ++c) {
      char ch = static_cast<char>('a' + stream.next_bits() % 26);
      if (w == 0 && c == 0) ch = static_cast<char>(ch - 'a' + 'A');
      out.push_back(ch);
    }
  }
  out.push_back('.');
  return out;
}

inline TranslationRequest generate_request(const CorpusParams& p, std::size_t index) {
  KeyedStream stream(mix(p.seed, index, fnv1a64("request")));
  const int domain = static_cast<int>(stream.below(p.n_domains));
  std::vector<double> x(p.feature_dim, 0.0);
  x[static_cast<std::size_t>(domain)] = p.feature_signal;
  if (p.feature_noise_sigma > 0.0) {
    for (double& v : x) v += p.feature_noise_sigma * stream.normal();
  }
  return TranslationRequest{request_id_for(index), synthetic_source(p.seed, index), FeatureVector(std::move(x)),
                            static_cast<std::uint64_t>(index), domain};
}

inline std::vector<TranslationRequest> generate_corpus(const CorpusParams& p) {
  validate(p);
  std::vector<TranslationRequest> out;
  out.reserve(p.n_requests);
  for (std::size_t i = 0; i < p.n_requests; ++i) out.push_back(generate_request(p, i));
  return out;
}

// Corpus file, version 1. A magic line, optional '#' comment lines, then one
// tab-separated record per request:
//   id  arrival_index  latent_domain|-  source(escaped)  features(comma-separated)
inline void save_corpus(std::ostream& out, const std::vector<TranslationRequest>& corpus) {
  out << "mtroute-corpus 1\n";
  out << "# id\tarrival_index\tlatent_domain\tsource\tfeatures\n";
  for (const auto& r : corpus) {
    out << escape_field(r.id) << '\t' << r.arrival_index << '\t'
        << (r.latent_domain ? std::to_string(*r.latent_domain) : std::string("-")) << '\t'
        << escape_field(r.source) << '\t' << join_doubles(r.features.values()) << '\n';
  }
}

inline bool looks_like_corpus(std::istream& in) {
  const auto pos = in.tellg();
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(pos);
  if (!first.empty() && first.back() == '\r') first.pop_back();
  return first.starts_with("mtroute-corpus ");
}

inline std::vector<TranslationRequest> load_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("corpus: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "mtroute-corpus 1") throw FormatError("corpus: unsupported header '" + line + "'");
  std::vector<TranslationRequest> out;
  std::size_t lineno = 1;
  std::optional<std::size_t> dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    const auto where = "corpus line " + std::to_string(lineno) + ": ";
    if (fields.size() != 5) throw FormatError(where + "expected 5 fields");
    try {
      TranslationRequest r;
      r.id = unescape_field(fields[0]);
      r.arrival_index = parse_u64(fields[1]);
      if (fields[2] != "-") r.latent_domain = static_cast<int>(parse_u64(fields[2]));
      r.source = unescape_field(fields[3]);
      r.features = FeatureVector(parse_doubles(fields[4]));
      if (!dim) dim = r.features.dim();
      if (r.features.dim() != *dim) throw FormatError("feature dimension changes mid-file");
      out.push_back(std::move(r));
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
  }
  return out;
}

// Default engine table. Four specialists (one per domain), a cheap generalist
// and a weak engine. Prices are per million source characters; the cheapest
// is a third of the most expensive.
struct DefaultEngine {
  const char* name;
  double price_per_million_chars;
  std::vector<double> quality;  // per domain, D = 4
};

inline const std::vector<DefaultEngine>& default_engine_table() {
  static const std::vector<DefaultEngine> table = {
      {"mt-a", 20.0, {0.86, 0.74, 0.76, 0.72}},
      {"mt-b", 15.0, {0.75, 0.87, 0.73, 0.77}},
      {"mt-c", 12.0, {0.74, 0.75, 0.85, 0.74}},
      {"mt-d", 24.0, {0.73, 0.76, 0.74, 0.86}},
      {"mt-e", 8.0, {0.79, 0.79, 0.78, 0.79}},
      {"mt-f", 10.0, {0.70, 0.71, 0.72, 0.70}},
  };
  return table;
}

// Everything needed to run the router against simulated backends.
struct SimulationSetup {
  std::vector<TranslationRequest> corpus;
  std::shared_ptr<SimulatedWorld> world;
  std::vector<EngineSpec> engines;
  std::shared_ptr<QualityEstimator> qe;
};

struct WorldParams {
  std::vector<std::vector<double>> quality_matrix;  // K x D
  std::vector<double> prices;                       // K
  std::vector<std::string> names;                   // K, optional
  double quality_noise_sigma = 0.03;
  double qe_noise_sigma = 0.02;
  std::uint64_t seed = 7;
};

// First `k` engines of the default table.
inline WorldParams default_world(std::size_t k) {
  const auto& table = default_engine_table();
  if (k < 1 || k > table.size()) throw ConfigError("default world supports 1..6 engines");
  WorldParams w;
  for (std::size_t e = 0; e < k; ++e) {
    w.quality_matrix.push_back(table[e].quality);
    w.prices.push_back(table[e].price_per_million_chars);
    w.names.emplace_back(table[e].name);
  }
  return w;
}

inline std::vector<EngineSpec> simulated_engines(const WorldParams& w, std::shared_ptr<Translator> backend) {
  std::vector<EngineSpec> engines;
  for (std::size_t e = 0; e < w.quality_matrix.size(); ++e) {
    const std::string name = e < w.names.size() ? w.names[e] : "engine-" + std::to_string(e);
    engines.push_back({e, name, w.prices.at(e), backend});
  }
  return engines;
}

inline SimulationSetup make_simulation(std::vector<TranslationRequest> corpus, const WorldParams& w) {
  if (w.prices.size() != w.quality_matrix.size()) throw ConfigError("need one price per engine");
  SimulationSetup s;
  s.world = std::make_shared<SimulatedWorld>(w.quality_matrix, w.quality_noise_sigma, w.seed);
  s.world->register_requests(corpus);
  s.corpus = std::move(corpus);
  s.engines = simulated_engines(w, std::make_shared<SimulatedTranslator>(s.world));
  s.qe = std::make_shared<SimulatedQualityEstimator>(s.world, w.qe_noise_sigma);
  validate_engines(s.engines);
  return s;
}

inline SimulationSetup make_simulation(const CorpusParams& corpus, const WorldParams& w) {
  if (w.quality_matrix.empty() || w.quality_matrix.front().size() != corpus.n_domains) {
    throw ConfigError("quality matrix must have one column per domain");
  }
  return make_simulation(generate_corpus(corpus), w);
}

// Noise-free quality of `engine` on `request`: the simulated engine's hidden draw.
inline double true_quality(const SimulatedWorld& world, const TranslationRequest& request, EngineId engine) {
  return world.true_quality(request.id, engine);
}

}  // namespace mtroute
