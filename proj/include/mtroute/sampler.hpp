#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mtroute/domain.hpp"
#include "mtroute/random.hpp"

namespace mtroute {

// Ordered weighted sampling without replacement via Gumbel-top-k: each
// engine with p_i > 0 gets key ln p_i + G_i with G_i standard Gumbel, and the
// engines are taken in decreasing key order. The first element is therefore
// distributed exactly as p. Engines with p_i = 0 follow all positive ones in
// engine-id order. Exactly K Gumbel draws are consumed per call, whatever m is.
inline std::vector<EngineId> sample_engines(const ClassProbabilities& p, std::size_t m, Rng& rng) {
  if (m < 1) throw ConfigError("sample_engines: m must be at least 1");
  const std::size_t k = p.size();

  struct Keyed {
    double key;
    EngineId id;
  };
  std::vector<Keyed> positive;
  std::vector<EngineId> zero;
  positive.reserve(k);
  for (EngineId i = 0; i < k; ++i) {
    const double g = standard_gumbel(rng);
    if (p[i] > 0.0) positive.push_back({std::log(p[i]) + g, i});
    else zero.push_back(i);
  }
  std::sort(positive.begin(), positive.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key > b.key : a.id < b.id;
  });

  std::vector<EngineId> out;
  out.reserve(std::min(m, k));
  for (const auto& e : positive) {
    if (out.size() == m) return out;
    out.push_back(e.id);
  }
  for (EngineId e : zero) {
    if (out.size() == m) return out;
    out.push_back(e);
  }
  return out;
}

}  // namespace mtroute
