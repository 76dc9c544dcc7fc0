#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mtroute/sampler.hpp"

using namespace mtroute;

namespace {

std::vector<double> first_counts(const std::vector<double>& p, std::size_t m, int draws, std::uint64_t seed) {
  Rng rng(seed);
  const ClassProbabilities cp(p);
  std::vector<double> freq(p.size(), 0.0);
  for (int i = 0; i < draws; ++i) freq[sample_engines(cp, m, rng).front()] += 1.0 / draws;
  return freq;
}

}  // namespace

TEST(Sampler, OneHotAlwaysFirst) {
  Rng rng(1);
  const ClassProbabilities p({0, 0, 1, 0});
  for (std::size_t m = 1; m <= 6; ++m) {
    for (int i = 0; i < 200; ++i) {
      const auto s = sample_engines(p, m, rng);
      ASSERT_EQ(s.front(), 2u);
      ASSERT_EQ(s.size(), std::min<std::size_t>(m, 4));
    }
  }
  // zero-probability tail comes in id order
  EXPECT_EQ(sample_engines(p, 4, rng), (std::vector<EngineId>{2, 0, 1, 3}));
}

TEST(Sampler, UniformFirstElement) {
  const auto f = first_counts({1.0 / 3, 1.0 / 3, 1.0 / 3}, 3, 100000, 17);
  for (double v : f) EXPECT_NEAR(v, 1.0 / 3, 0.01);
}

TEST(Sampler, UniformPermutations) {
  Rng rng(5);
  const ClassProbabilities p({1.0 / 3, 1.0 / 3, 1.0 / 3});
  std::map<std::vector<EngineId>, int> seen;
  for (int i = 0; i < 60000; ++i) ++seen[sample_engines(p, 3, rng)];
  ASSERT_EQ(seen.size(), 6u);
  for (const auto& [perm, n] : seen) EXPECT_NEAR(n / 60000.0, 1.0 / 6, 0.01);
}

TEST(Sampler, SkewedFirstElement) {
  const auto f = first_counts({0.7, 0.2, 0.1}, 2, 100000, 23);
  EXPECT_NEAR(f[0], 0.7, 0.01);
  EXPECT_NEAR(f[1], 0.2, 0.01);
  EXPECT_NEAR(f[2], 0.1, 0.01);
}

TEST(Sampler, SecondElementFollowsSequentialLaw) {
  // P(second = j) = sum_i p_i p_j / (1 - p_i), i != j, for draws without replacement.
  const std::vector<double> p{0.5, 0.3, 0.2};
  std::vector<double> expect(3, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) expect[j] += p[i] * p[j] / (1 - p[i]);
  Rng rng(31);
  const ClassProbabilities cp(p);
  std::vector<double> got(3, 0.0);
  for (int i = 0; i < 100000; ++i) got[sample_engines(cp, 2, rng)[1]] += 1e-5;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(got[j], expect[j], 0.01);
}

TEST(Sampler, DistinctAndPermutation) {
  Rng rng(9);
  std::mt19937_64 g(10);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t k = 1 + g() % 6;
    std::vector<double> p(k);
    double s = 0;
    for (double& v : p) s += (v = (g() % 4 == 0) ? 0.0 : u(g));
    if (s == 0) {
      p[0] = 1;
      s = 1;
    }
    for (double& v : p) v /= s;
    const std::size_t m = 1 + g() % 8;
    const auto out = sample_engines(ClassProbabilities(p), m, rng);
    ASSERT_EQ(out.size(), std::min(m, k));
    ASSERT_EQ(std::set<EngineId>(out.begin(), out.end()).size(), out.size());
    // positive-probability engines all precede zero-probability ones
    bool hit_zero = false;
    for (EngineId e : out) {
      if (p[e] == 0) hit_zero = true;
      else ASSERT_FALSE(hit_zero);
    }
    if (m >= k) {
      auto sorted = out;
      std::sort(sorted.begin(), sorted.end());
      for (EngineId e = 0; e < k; ++e) ASSERT_EQ(sorted[e], e);
    }
  }
}

TEST(Sampler, DeterministicGivenRngState) {
  Rng a(123), b(123);
  const ClassProbabilities p({0.1, 0.2, 0.3, 0.4});
  for (int i = 0; i < 100; ++i) ASSERT_EQ(sample_engines(p, 3, a), sample_engines(p, 3, b));
}

TEST(Sampler, ConsumesOneDrawPerEngine) {
  // m does not change how far the stream advances
  Rng a(55), b(55);
  const ClassProbabilities p({0.25, 0.25, 0.25, 0.25});
  sample_engines(p, 1, a);
  sample_engines(p, 4, b);
  EXPECT_EQ(a(), b());
}

TEST(Sampler, RejectsZeroM) {
  Rng rng(1);
  EXPECT_THROW(sample_engines(ClassProbabilities({1.0}), 0, rng), ConfigError);
}
