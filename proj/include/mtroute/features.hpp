#pragma once

// Request features: language-agnostic surface statistics, hashed character
// trigrams, optional precomputed embeddings, and online standardization.
//
// Surface layout (dimension 6 + B):
//   [0] token count: maximal runs of non-whitespace code points
//   [1] character count in code points
//   [2] average token length in code points (0 with no tokens)
//   [3] digit ratio       (ASCII 0-9 over all code points)
//   [4] punctuation ratio (see text::is_punct)
//   [5] uppercase ratio   (see text::is_upper)
//   [6 .. 6+B) trigram bucket frequencies
//
// Trigram buckets: every run of three consecutive code points c0 c1 c2 in the
// source (whitespace included) is UTF-8 encoded and hashed with 64-bit FNV-1a
// (offset 0xcbf29ce484222325, prime 0x100000001b3); the bucket is the hash
// modulo B. Each bucket holds its count divided by the number of trigrams, so
// buckets sum to 1 when the source has at least three code points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtroute/domain.hpp"
#include "mtroute/random.hpp"
#include "mtroute/text.hpp"
#include "mtroute/util.hpp"

namespace mtroute {

constexpr std::size_t kSurfaceStatCount = 6;
constexpr std::size_t kDefaultTrigramBuckets = 64;

inline std::size_t surface_dim(std::size_t buckets = kDefaultTrigramBuckets) {
  return kSurfaceStatCount + buckets;
}

inline std::uint64_t trigram_hash(char32_t a, char32_t b, char32_t c) {
  std::string bytes;
  text::append_utf8(bytes, a);
  text::append_utf8(bytes, b);
  text::append_utf8(bytes, c);
  return fnv1a64(bytes);
}

inline FeatureVector extract_surface(std::string_view source,
                                     std::size_t buckets = kDefaultTrigramBuckets) {
  if (buckets == 0) throw ConfigError("trigram bucket count must be positive");
  const auto cps = text::decode_utf8(source);
  std::vector<double> out(surface_dim(buckets), 0.0);

  std::size_t tokens = 0, token_chars = 0, digits = 0, puncts = 0, uppers = 0;
  bool in_token = false;
  for (char32_t c : cps) {
    if (text::is_space(c)) {
      in_token = false;
      continue;
    }
    if (!in_token) ++tokens;
    in_token = true;
    ++token_chars;
    if (text::is_digit(c)) ++digits;
    if (text::is_punct(c)) ++puncts;
    if (text::is_upper(c)) ++uppers;
  }

  const double n = static_cast<double>(cps.size());
  out[0] = static_cast<double>(tokens);
  out[1] = n;
  out[2] = tokens ? static_cast<double>(token_chars) / static_cast<double>(tokens) : 0.0;
  if (!cps.empty()) {
    out[3] = static_cast<double>(digits) / n;
    out[4] = static_cast<double>(puncts) / n;
    out[5] = static_cast<double>(uppers) / n;
  }

  if (cps.size() >= 3) {
    const std::size_t trigrams = cps.size() - 2;
    std::vector<std::size_t> counts(buckets, 0);
    for (std::size_t i = 0; i < trigrams; ++i) {
      ++counts[trigram_hash(cps[i], cps[i + 1], cps[i + 2]) % buckets];
    }
    for (std::size_t b = 0; b < buckets; ++b) {
      out[kSurfaceStatCount + b] = static_cast<double>(counts[b]) / static_cast<double>(trigrams);
    }
  }
  return FeatureVector(std::move(out));
}

// Precomputed embeddings keyed by request id. On disk: one record per line,
// `id<TAB>v0,v1,...`.
class VectorStore {
 public:
  VectorStore() = default;
  explicit VectorStore(std::size_t dim) : dim_(dim) {}

  static VectorStore load(std::istream& in, std::optional<std::size_t> dim = std::nullopt) {
    VectorStore store;
    store.dim_ = dim;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw FormatError("vector store line " + std::to_string(lineno) + ": missing tab");
      }
      try {
        store.put(line.substr(0, tab), parse_doubles(std::string_view(line).substr(tab + 1)));
      } catch (const FormatError& e) {
        throw FormatError("vector store line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return store;
  }

  void save(std::ostream& out) const {
    std::vector<const std::string*> ids;
    ids.reserve(vectors_.size());
    for (const auto& [id, v] : vectors_) ids.push_back(&id);
    std::sort(ids.begin(), ids.end(), [](auto* a, auto* b) { return *a < *b; });
    for (const auto* id : ids) out << *id << '\t' << join_doubles(vectors_.at(*id)) << '\n';
  }

  // The first stored vector fixes the dimension unless one was given.
  void put(std::string id, std::vector<double> v) {
    if (!dim_) dim_ = v.size();
    if (v.size() != *dim_) {
      throw FormatError("vector for '" + id + "' has dim " + std::to_string(v.size()) + ", store expects " +
                        std::to_string(*dim_));
    }
    vectors_.insert_or_assign(std::move(id), std::move(v));
  }

  const std::vector<double>* find(const std::string& id) const {
    auto it = vectors_.find(id);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  bool contains(const std::string& id) const { return vectors_.contains(id); }
  std::size_t size() const noexcept { return vectors_.size(); }
  std::optional<std::size_t> dim() const noexcept { return dim_; }

 private:
  std::optional<std::size_t> dim_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Looks up the embedding for `id`, checks it against `expected_dim`, and
// appends it after `surface` when surface features are in use.
inline FeatureVector ingest_precomputed(const std::string& id, const VectorStore& store,
                                        std::size_t expected_dim,
                                        const FeatureVector* surface = nullptr) {
  const auto* v = store.find(id);
  if (!v) throw LookupError("no precomputed vector for request '" + id + "'");
  if (v->size() != expected_dim) {
    throw FormatError("precomputed vector for '" + id + "' has dim " + std::to_string(v->size()) +
                      ", configured " + std::to_string(expected_dim));
  }
  std::vector<double> out;
  out.reserve((surface ? surface->dim() : 0) + v->size());
  if (surface) out.assign(surface->values().begin(), surface->values().end());
  out.insert(out.end(), v->begin(), v->end());
  return FeatureVector(std::move(out));
}

struct FeatureOptions {
  bool surface = true;
  std::size_t trigram_buckets = kDefaultTrigramBuckets;
  std::optional<std::size_t> embedding_dim;  // set to ingest precomputed vectors

  std::size_t dim() const {
    return (surface ? surface_dim(trigram_buckets) : 0) + embedding_dim.value_or(0);
  }
};

inline FeatureVector build_features(const std::string& id, std::string_view source,
                                    const FeatureOptions& options, const VectorStore* store) {
  if (!options.surface && !options.embedding_dim) throw ConfigError("no feature source enabled");
  std::optional<FeatureVector> surface;
  if (options.surface) surface = extract_surface(source, options.trigram_buckets);
  if (!options.embedding_dim) return std::move(*surface);
  if (!store) throw ConfigError("embedding features enabled without a vector store");
  return ingest_precomputed(id, *store, *options.embedding_dim, surface ? &*surface : nullptr);
}

// Per-dimension running mean and variance (Welford).
class RunningStats {
 public:
  static constexpr double kVarianceFloor = 1e-12;

  RunningStats() = default;
  explicit RunningStats(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  std::size_t dim() const noexcept { return mean_.size(); }
  std::uint64_t count() const noexcept { return count_; }
  std::span<const double> mean() const noexcept { return mean_; }

  double variance(std::size_t i) const {
    return count_ ? std::max(0.0, m2_[i] / static_cast<double>(count_)) : 0.0;
  }

  void update(std::span<const double> x) {
    if (x.size() != dim()) throw FormatError("running stats: dimension mismatch");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / n;
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  // z-score against the current snapshot; low-variance dimensions pass through.
  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != dim()) throw FormatError("running stats: dimension mismatch");
    std::vector<double> z(x.begin(), x.end());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double var = variance(i);
      if (var >= kVarianceFloor) z[i] = (x[i] - mean_[i]) / std::sqrt(var);
    }
    return z;
  }

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

// Standardizes `fv` with the statistics seen so far, then folds `fv` in.
inline std::pair<FeatureVector, RunningStats> standardize(const FeatureVector& fv, RunningStats stats) {
  if (fv.dim() != stats.dim()) {
    throw FormatError("standardize: vector dim " + std::to_string(fv.dim()) + " vs stats dim " +
                      std::to_string(stats.dim()));
  }
  FeatureVector z(stats.apply(fv.values()));
  stats.update(fv.values());
  return {std::move(z), std::move(stats)};
}

}  // namespace mtroute
