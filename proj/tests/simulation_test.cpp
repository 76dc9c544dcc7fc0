#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mtroute/classifier.hpp"
#include "mtroute/simulation.hpp"

using namespace mtroute;

namespace {

bool same(const TranslationRequest& a, const TranslationRequest& b) {
  return a.id == b.id && a.source == b.source && a.features == b.features && a.arrival_index == b.arrival_index &&
         a.latent_domain == b.latent_domain;
}

}  // namespace

TEST(Corpus, Deterministic) {
  CorpusParams p;
  p.n_requests = 300;
  const auto a = generate_corpus(p), b = generate_corpus(p);
  ASSERT_EQ(a.size(), 300u);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_TRUE(same(a[i], b[i]));
  EXPECT_EQ(a[7].id, "r000007");
  EXPECT_EQ(a[7].arrival_index, 7u);

  p.seed = 2;
  const auto c = generate_corpus(p);
  int differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].features == c[i].features ? 0 : 1;
  EXPECT_GT(differ, 250);
}

TEST(Corpus, PrefixStable) {
  // request i does not depend on n
  CorpusParams p;
  p.n_requests = 50;
  const auto small = generate_corpus(p);
  p.n_requests = 500;
  const auto big = generate_corpus(p);
  for (std::size_t i = 0; i < small.size(); ++i) ASSERT_TRUE(same(small[i], big[i]));
}

TEST(Corpus, NoiselessIsScaledOneHot) {
  CorpusParams p;
  p.n_requests = 400;
  p.feature_noise_sigma = 0;
  const auto corpus = generate_corpus(p);
  for (const auto& r : corpus) {
    const auto x = r.features.values();
    for (std::size_t j = 0; j < x.size(); ++j) {
      ASSERT_EQ(x[j], j == static_cast<std::size_t>(*r.latent_domain) ? 3.0 : 0.0);
    }
  }
  // a linear model trained online separates the domains perfectly
  OnlineSoftmaxModel m(4, p.feature_dim, 0.1, 0.0);
  for (const auto& r : corpus) m.learn(r.features.values(), static_cast<EngineId>(*r.latent_domain));
  for (const auto& r : corpus) {
    ASSERT_EQ(m.predict_proba(r.features.values()).argmax(), static_cast<EngineId>(*r.latent_domain));
  }
}

TEST(Corpus, DomainCountsConcentrate) {
  CorpusParams p;
  p.n_requests = 30000;
  p.n_domains = 3;
  p.feature_dim = 3;
  std::vector<double> counts(3, 0.0);
  for (const auto& r : generate_corpus(p)) counts[static_cast<std::size_t>(*r.latent_domain)] += 1;
  const double n = 30000, q = 1.0 / 3;
  const double sd = std::sqrt(n * q * (1 - q));
  for (double c : counts) EXPECT_LT(std::abs(c - n * q), 3 * sd);
}

TEST(Corpus, NoiseLevel) {
  CorpusParams p;
  p.n_requests = 5000;
  p.feature_noise_sigma = 0.5;
  double sq = 0;
  std::size_t n = 0;
  for (const auto& r : generate_corpus(p)) {
    const auto x = r.features.values();
    for (std::size_t j = 4; j < x.size(); ++j, ++n) sq += x[j] * x[j];  // dims past D carry only noise
  }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 0.5, 0.01);
}

TEST(Corpus, RejectsBadParams) {
  CorpusParams p;
  p.n_requests = 0;
  EXPECT_THROW(generate_corpus(p), ConfigError);
  p = {};
  p.feature_dim = 2;
  EXPECT_THROW(generate_corpus(p), ConfigError);
  p = {};
  p.feature_noise_sigma = -1;
  EXPECT_THROW(generate_corpus(p), ConfigError);
  p = {};
  p.n_domains = 0;
  EXPECT_THROW(generate_corpus(p), ConfigError);
}

TEST(Corpus, FileRoundTrip) {
  CorpusParams p;
  p.n_requests = 100;
  auto corpus = generate_corpus(p);
  corpus[3].source = "tab\there\nnewline \\ back";
  corpus[4].latent_domain.reset();
  std::stringstream s;
  save_corpus(s, corpus);
  EXPECT_TRUE(looks_like_corpus(s));
  const auto back = load_corpus(s);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) ASSERT_TRUE(same(back[i], corpus[i])) << i;
}

TEST(Corpus, FileErrors) {
  std::istringstream bad_header("mtroute-corpus 2\n");
  EXPECT_THROW(load_corpus(bad_header), FormatError);
  std::istringstream fields("mtroute-corpus 1\nr1\t0\t1\tsrc\n");
  EXPECT_THROW(load_corpus(fields), FormatError);
  std::istringstream dims("mtroute-corpus 1\nr1\t0\t1\ts\t1,2\nr2\t1\t1\ts\t1\n");
  EXPECT_THROW(load_corpus(dims), FormatError);
  std::istringstream plain("just text\n");
  EXPECT_FALSE(looks_like_corpus(plain));
  std::string first;
  std::getline(plain, first);
  EXPECT_EQ(first, "just text");  // stream position restored
}

TEST(TrueQuality, MatchesHiddenDraw) {
  CorpusParams p;
  p.n_requests = 200;
  auto sim = make_simulation(p, default_world(6));
  for (const auto& r : sim.corpus) {
    for (EngineId e = 0; e < 6; ++e) {
      ASSERT_EQ(true_quality(*sim.world, r, e), sim.world->hidden_draw(r.id, e, *r.latent_domain));
    }
  }
}

TEST(TrueQuality, OracleDominatesFixedEngines) {
  CorpusParams p;
  p.n_requests = 1000;
  auto sim = make_simulation(p, default_world(6));
  double oracle = 0;
  std::vector<double> fixed(6, 0.0);
  for (const auto& r : sim.corpus) {
    double best = 0;
    for (EngineId e = 0; e < 6; ++e) {
      const double q = true_quality(*sim.world, r, e);
      fixed[e] += q;
      best = std::max(best, q);
    }
    oracle += best;
  }
  for (double f : fixed) EXPECT_GE(oracle, f);
}

TEST(Simulation, DefaultWorldShape) {
  const auto w = default_world(6);
  ASSERT_EQ(w.quality_matrix.size(), 6u);
  EXPECT_EQ(w.prices, (std::vector<double>{20, 15, 12, 24, 8, 10}));
  EXPECT_THROW(default_world(7), ConfigError);
  CorpusParams p;
  p.n_domains = 3;
  EXPECT_THROW(make_simulation(p, default_world(4)), ConfigError);
  auto bad = default_world(4);
  bad.prices.pop_back();
  EXPECT_THROW(make_simulation(CorpusParams{}, bad), ConfigError);
}
