#include <random>

#include <gtest/gtest.h>

#include "mtroute/queue.hpp"
#include "test_support.hpp"

using namespace mtroute;
using mtroute::testing::make_request;
using mtroute::testing::ScriptedModel;

namespace {

// Two-class distribution with the given normalized entropy-ish ordering:
// larger `a` (<= 0.5) means higher entropy.
std::vector<double> two(double a) { return {a, 1.0 - a}; }

double entropy_of(const TranslationRequest& r, const Learner& m) {
  return normalized_entropy(m.predict_proba(r.features.values()));
}

}  // namespace

TEST(Queue, FifoBeforeAnyUpdate) {
  RankedQueue q(RerankPolicy::full());
  ScriptedModel m(2);
  q.push(make_request("c", two(0.1), 0));
  q.push(make_request("a", two(0.5), 1));
  q.push(make_request("b", two(0.3), 2));
  q.rerank(m);  // version 0: nothing to do
  EXPECT_EQ(q.recomputations(), 0u);
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "c");
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "a");
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "b");
  EXPECT_THROW(q.pop_max_entropy(&m), LookupError);
}

TEST(Queue, DuplicateIdRejected) {
  RankedQueue q;
  q.push(make_request("x", two(0.5), 0));
  EXPECT_THROW(q.push(make_request("x", two(0.5), 1)), ConfigError);
  q.pop_max_entropy();
  EXPECT_NO_THROW(q.push(make_request("x", two(0.5), 2)));  // id free again once popped
}

TEST(Queue, FullPolicyPopsMaxEntropy) {
  // entropies ordered 0.2 < 0.5 < 0.9 via three two-class distributions
  RankedQueue q(RerankPolicy::full());
  ScriptedModel m(2);
  m.bump();
  auto low = make_request("low", two(0.03), 0), high = make_request("high", two(0.4), 1),
       mid = make_request("mid", two(0.11), 2);
  const double hl = entropy_of(low, m), hh = entropy_of(high, m), hm = entropy_of(mid, m);
  ASSERT_LT(hl, hm);
  ASSERT_LT(hm, hh);
  q.push(low);
  q.push(high);
  q.push(mid);
  q.rerank(m);
  EXPECT_EQ(q.recomputations(), 3u);
  const auto e = q.pop_max_entropy(&m);
  EXPECT_EQ(e.request.id, "high");
  EXPECT_DOUBLE_EQ(e.cached_entropy, hh);
  EXPECT_EQ(e.model_version, 1u);
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "mid");
}

TEST(Queue, SubsetRecomputesExactlyN) {
  RankedQueue q(RerankPolicy::subset(2));
  ScriptedModel m(2);
  for (int i = 0; i < 1000; ++i) q.push(make_request("r" + std::to_string(i), two(0.5), i));
  for (int step = 0; step < 20; ++step) {
    m.bump();
    const auto before = q.recomputations();
    q.rerank(m);
    EXPECT_EQ(q.recomputations() - before, 2u);
    q.pop_max_entropy(&m);
  }
}

TEST(Queue, SubsetRefreshesStalestFirst) {
  RankedQueue q(RerankPolicy::subset(1));
  ScriptedModel m(2);
  for (int i = 0; i < 3; ++i) q.push(make_request("r" + std::to_string(i), two(0.2), i));
  m.bump();
  q.rerank(m);  // r0 scored at v1
  q.rerank(m);  // r1 scored at v1
  const auto ranked = q.ranked();
  // two scored entries now below the unscored one (entropy 1.0)
  EXPECT_EQ(ranked.front()->request.id, "r2");
  EXPECT_FALSE(ranked.front()->model_version.has_value());
  EXPECT_EQ(ranked[1]->model_version, 1u);
}

TEST(Queue, TiesGoToEarliestArrival) {
  RankedQueue q(RerankPolicy::full());
  ScriptedModel m(2);
  m.bump();
  q.push(make_request("late", two(0.3), 9));
  q.push(make_request("early", two(0.3), 4));
  q.push(make_request("mid", two(0.3), 6));
  q.rerank(m);
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "early");
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "mid");
  EXPECT_EQ(q.pop_max_entropy(&m).request.id, "late");
}

TEST(Queue, SingleEntry) {
  RankedQueue q;
  q.push(make_request("only", two(0.5), 0));
  EXPECT_EQ(q.pop_max_entropy().request.id, "only");
  EXPECT_TRUE(q.empty());
}

TEST(Queue, LazyRefreshesOnlyOnPop) {
  RankedQueue q(RerankPolicy::lazy());
  ScriptedModel m(2);
  q.push(make_request("a", two(0.05), 0));
  q.push(make_request("b", two(0.45), 1));
  q.push(make_request("c", two(0.25), 2));
  m.bump();
  q.rerank(m);
  EXPECT_EQ(q.recomputations(), 0u);
  // a is refreshed, drops below the unscored entries; b refreshed and wins
  // only once it is current at the top
  const auto e = q.pop_max_entropy(&m);
  EXPECT_EQ(e.request.id, "b");
  EXPECT_EQ(e.model_version, 1u);
  EXPECT_GE(q.recomputations(), 2u);
}

TEST(Queue, FullPolicyBruteForce) {
  std::mt19937_64 g(314);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  RankedQueue q(RerankPolicy::full());
  ScriptedModel m(3);
  auto rand_req = [&](int i) {
    std::vector<double> p{u(g), u(g), u(g)};
    const double s = p[0] + p[1] + p[2];
    for (double& v : p) v /= s;
    return make_request("r" + std::to_string(i), p, i);
  };
  int next = 0;
  for (; next < 200; ++next) q.push(rand_req(next));
  for (int step = 0; step < 500 && !q.empty(); ++step) {
    m.bump();
    q.rerank(m);
    double best = -1;
    for (const auto* e : q.ranked()) best = std::max(best, entropy_of(e->request, m));
    const auto popped = q.pop_max_entropy(&m);
    ASSERT_EQ(entropy_of(popped.request, m), best);
    ASSERT_EQ(popped.cached_entropy, best);
    if (step % 2 == 0) q.push(rand_req(next++));
  }
}

TEST(Queue, ConservesIds) {
  RankedQueue q(RerankPolicy::subset(3));
  ScriptedModel m(2);
  std::set<std::string> in, out;
  for (int i = 0; i < 50; ++i) {
    auto r = make_request("r" + std::to_string(i), two(0.01 * i), i);
    in.insert(r.id);
    q.push(r);
  }
  while (!q.empty()) {
    const auto n = q.size();
    m.bump();
    q.rerank(m);
    out.insert(q.pop_max_entropy(&m).request.id);
    EXPECT_EQ(q.size(), n - 1);
  }
  EXPECT_EQ(in, out);
}
