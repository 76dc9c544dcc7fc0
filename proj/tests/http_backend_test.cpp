#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "mtroute/backends.hpp"

using namespace mtroute;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

// Loopback server speaking the wire protocol. Path prefixes select failure
// modes: /slow (sleeps past the client timeout), /status (503), /garbage
// (non-JSON body), /short (wrong score count), /flaky (slow once, then fine),
// /busy (tracks peak concurrency).
class FixtureServer {
 public:
  FixtureServer() {
    for (std::string prefix : {"", "/slow", "/status", "/garbage", "/short", "/flaky", "/busy"}) {
      for (std::string op : {"/translate", "/score", "/embed"}) {
        srv_.Post(prefix + op, [this, prefix, op](const httplib::Request& req, httplib::Response& res) {
          handle(prefix, op, req, res);
        });
      }
    }
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~FixtureServer() {
    srv_.stop();
    thread_.join();
  }

  std::string url(const std::string& prefix = "") const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix;
  }

  std::atomic<int> hits{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};

 private:
  void handle(const std::string& prefix, const std::string& op, const httplib::Request& req, httplib::Response& res) {
    const int n = ++hits;
    if (prefix == "/slow" || (prefix == "/flaky" && n == 1)) std::this_thread::sleep_for(400ms);
    if (prefix == "/status") {
      res.status = 503;
      res.set_content(R"({"error":"overloaded"})", "application/json");
      return;
    }
    if (prefix == "/garbage") {
      res.set_content("<html>oops</html>", "text/html");
      return;
    }
    if (prefix == "/busy") {
      const int now = ++in_flight;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(60ms);
      --in_flight;
    }
    const auto body = json::parse(req.body);
    json out;
    if (op == "/translate") {
      out["translation"] = body.at("source").get<std::string>() + "@" + body.at("target_lang").get<std::string>() +
                           "#" + body.at("id").get<std::string>();
    } else if (op == "/score") {
      json scores = json::array();
      for (const auto& h : body.at("hypotheses")) scores.push_back(static_cast<double>(h.get<std::string>().size()) / 100.0);
      if (prefix == "/short") scores.erase(scores.begin());
      out["scores"] = scores;
    } else {
      const auto s = body.at("source").get<std::string>();
      out["embedding"] = {static_cast<double>(s.size()), 1.0, -0.5};
    }
    res.set_content(out.dump(), "application/json");
  }

  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
};

HttpEndpoint ep(const std::string& url) {
  HttpEndpoint e;
  e.base_url = url;
  e.connect_timeout_ms = 500;
  e.read_timeout_ms = 150;
  e.write_timeout_ms = 150;
  return e;
}

TranslationRequest req(const std::string& id, const std::string& source) {
  TranslationRequest r;
  r.id = id;
  r.source = source;
  r.features = FeatureVector({0.0});
  return r;
}

BackendFailure failure_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const BackendError& e) {
    return e.failure();
  }
  ADD_FAILURE() << "no BackendError";
  return BackendFailure::kContract;
}

}  // namespace

TEST(Http, TranslateRoundTrip) {
  FixtureServer s;
  HttpTranslator t(ep(s.url()), "remote", "cs");
  const EngineSpec spec{0, "remote", 1.0, nullptr};
  EXPECT_EQ(t.translate(spec, req("r1", "Dobrý den")), "Dobrý den@cs#r1");
  EXPECT_EQ(t.client().attempts(), 1u);
}

TEST(Http, ScoreKeepsOrder) {
  FixtureServer s;
  HttpQualityEstimator qe(ep(s.url()));
  const std::vector<std::string> h{"a", "abcd", "ab"};
  const auto sc = qe.batch_score("src", h);
  ASSERT_EQ(sc.size(), 3u);
  EXPECT_DOUBLE_EQ(sc[0].value, 0.01);
  EXPECT_DOUBLE_EQ(sc[1].value, 0.04);
  EXPECT_DOUBLE_EQ(sc[2].value, 0.02);
  EXPECT_EQ(qe.score("src", "abc"), QEScore{0.03});
}

TEST(Http, PathPrefixIsKept) {
  FixtureServer s;
  HttpQualityEstimator qe(ep(s.url("/short/")));
  EXPECT_EQ(failure_of([&] { qe.batch_score("s", std::vector<std::string>{"a", "b"}); }), BackendFailure::kMalformed);
}

TEST(Http, EmbedAndCache) {
  FixtureServer s;
  auto emb = std::make_shared<HttpEmbedder>(ep(s.url()), 3);
  EXPECT_EQ(emb->embed("hello"), (std::vector<double>{5.0, 1.0, -0.5}));
  EmbeddingCache cache(emb);
  cache.get("r1", "hello");
  cache.get("r1", "hello");
  cache.get("r2", "hi");
  EXPECT_EQ(emb->client().attempts(), 3u);  // one direct + one per distinct id
  EXPECT_EQ(cache.store().size(), 2u);

  HttpEmbedder wrong(ep(s.url()), 1024);
  EXPECT_EQ(failure_of([&] { wrong.embed("x"); }), BackendFailure::kMalformed);
}

TEST(Http, DistinctFailureKinds) {
  FixtureServer s;
  const EngineSpec spec{0, "remote", 1.0, nullptr};
  HttpTranslator slow(ep(s.url("/slow")), "slow", "de");
  EXPECT_EQ(failure_of([&] { slow.translate(spec, req("r", "x")); }), BackendFailure::kTimeout);

  HttpTranslator status(ep(s.url("/status")), "status", "de");
  try {
    status.translate(spec, req("r", "x"));
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.failure(), BackendFailure::kStatus);
    EXPECT_EQ(e.backend(), "status");
    EXPECT_NE(std::string(e.what()).find("overloaded"), std::string::npos);
  }

  HttpTranslator garbage(ep(s.url("/garbage")), "garbage", "de");
  EXPECT_EQ(failure_of([&] { garbage.translate(spec, req("r", "x")); }), BackendFailure::kMalformed);

  // nothing listens on the port of a stopped server
  std::string dead_url;
  {
    FixtureServer gone;
    dead_url = gone.url();
  }
  HttpTranslator dead(ep(dead_url), "dead", "de");
  EXPECT_EQ(failure_of([&] { dead.translate(spec, req("r", "x")); }), BackendFailure::kTransport);
}

TEST(Http, RetriesOnlyTimeouts) {
  FixtureServer s;
  const EngineSpec spec{0, "remote", 1.0, nullptr};
  auto e = ep(s.url("/slow"));
  e.max_retries = 2;
  HttpTranslator slow(e, "slow", "de");
  EXPECT_EQ(failure_of([&] { slow.translate(spec, req("r", "x")); }), BackendFailure::kTimeout);
  EXPECT_EQ(slow.client().attempts(), 3u);

  auto st = ep(s.url("/status"));
  st.max_retries = 2;
  HttpTranslator status(st, "status", "de");
  EXPECT_THROW(status.translate(spec, req("r", "x")), BackendError);
  EXPECT_EQ(status.client().attempts(), 1u);
}

TEST(Http, RetryRecovers) {
  FixtureServer s;
  const EngineSpec spec{0, "remote", 1.0, nullptr};
  auto e = ep(s.url("/flaky"));
  e.max_retries = 1;
  HttpTranslator flaky(e, "flaky", "de");
  EXPECT_EQ(flaky.translate(spec, req("r9", "x")), "x@de#r9");
  EXPECT_EQ(flaky.client().attempts(), 2u);
}

TEST(Http, ConcurrencyCap) {
  FixtureServer s;
  auto e = ep(s.url("/busy"));
  e.read_timeout_ms = 2000;
  e.max_concurrency = 2;
  HttpTranslator t(e, "busy", "de");
  const EngineSpec spec{0, "busy", 1.0, nullptr};
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&, i] { t.translate(spec, req("r" + std::to_string(i), "x")); });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(s.hits.load(), 6);
  EXPECT_LE(s.peak.load(), 2);
  EXPECT_GE(s.peak.load(), 1);
}

TEST(Http, EndpointNeedsScheme) {
  EXPECT_THROW(HttpQualityEstimator(ep("localhost:80")), ConfigError);
}
