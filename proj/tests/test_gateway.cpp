#include <gtest/gtest.h>

#include <fstream>
#include <future>
#include <sstream>
#include <vector>

#include "mock_sidecar.hpp"
#include "tabprem/gateway.hpp"
#include "test_support.hpp"

using namespace tabprem;
using nlohmann::json;

namespace {

EmbedRequest request_of(const json& j) {
  return EmbedRequest{j.at("sentence").get<std::string>(), j.at("target_start").get<long>(),
                      j.at("target_end").get<long>()};
}

std::vector<json> protocol_fixtures() {
  std::vector<json> out;
  std::ifstream in(test_data("protocol_fixtures.jsonl"));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

RetryPolicy fast_retries() {
  RetryPolicy p;
  p.max_retries = 2;
  p.base_backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::seconds(2);
  return p;
}

class CountingEmbedder : public ContextualEmbedder {
public:
  EmbedResponse embed(const EmbedRequest& req) override {
    ++calls;
    return EmbedResponse{EmbeddingVector({static_cast<double>(req.sentence.size()), 1.0}), "count"};
  }
  std::atomic<int> calls{0};
};

}  // namespace

TEST(Request, ValidationHappensBeforeNetwork) {
  EXPECT_NO_THROW(validate_request({"volume", -1, -1}));
  EXPECT_NO_THROW(validate_request({"volume", 0, 6}));
  EXPECT_THROW(validate_request({"volume", 0, 7}), ProtocolError);
  EXPECT_THROW(validate_request({"volume", 4, 2}), ProtocolError);
  EXPECT_THROW(validate_request({"volume", -1, 2}), ProtocolError);
  EXPECT_THROW(validate_request({"Ampère", 0, 4}), ProtocolError);

  // closed port, but the span error must surface first
  HttpEmbedClient client("http://127.0.0.1:1", fast_retries());
  EXPECT_THROW(client.embed({"volume", 0, 99}), ProtocolError);
}

TEST(Request, JsonShape) {
  EXPECT_EQ(request_to_json({"a b", 2, 3}).dump(), R"({"sentence":"a b","target_start":2,"target_end":3})");
}

TEST(Protocol, FixtureCorpusAgainstParser) {
  auto fixtures = protocol_fixtures();
  ASSERT_GE(fixtures.size(), 20u);
  for (const auto& f : fixtures) {
    const auto expect = f["expect"].get<std::string>();
    SCOPED_TRACE(f["name"].get<std::string>());
    if (expect == "request_error") {
      EXPECT_THROW(validate_request(request_of(f["request"])), ProtocolError);
      continue;
    }
    validate_request(request_of(f["request"]));
    if (f["status"] != 200) continue;  // status handling is a client concern
    const auto body = f["body"].get<std::string>();
    if (expect == "ok") {
      auto r = parse_embed_response(body);
      auto j = json::parse(body);
      EXPECT_EQ(r.vector.dim(), j["dim"].get<std::size_t>());
      EXPECT_EQ(r.model, j["model"].get<std::string>());
      for (std::size_t i = 0; i < r.vector.dim(); ++i) EXPECT_EQ(r.vector[i], j["vector"][i].get<double>());
    } else {
      EXPECT_THROW(parse_embed_response(body), ProtocolError);
    }
  }
}

TEST(Protocol, FixtureCorpusOverHttp) {
  auto fixtures = protocol_fixtures();
  std::mutex mu;
  json current;
  MockSidecar sidecar([&](const json& req) -> std::pair<int, std::string> {
    std::lock_guard lock(mu);
    EXPECT_EQ(req, current["request"]);
    return {current["status"].get<int>(), current["body"].get<std::string>()};
  });
  int expected_hits = 0;
  for (const auto& f : fixtures) {
    SCOPED_TRACE(f["name"].get<std::string>());
    // a client pins the dim of its first reply, so each fixture gets its own
    HttpEmbedClient client(sidecar.url(), fast_retries());
    {
      std::lock_guard lock(mu);
      current = f;
    }
    const auto expect = f["expect"].get<std::string>();
    auto req = request_of(f["request"]);
    if (expect == "ok") {
      auto r = client.embed(req);
      EXPECT_EQ(r.vector.dim(), json::parse(f["body"].get<std::string>())["dim"].get<std::size_t>());
      ++expected_hits;
    } else if (expect == "protocol_error") {
      EXPECT_THROW(client.embed(req), ProtocolError);
      ++expected_hits;
    } else {
      EXPECT_THROW(client.embed(req), ProtocolError);
    }
    EXPECT_EQ(sidecar.hits(), expected_hits);
  }
}

TEST(Protocol, Health) {
  MockSidecar sidecar([](const json& r) { return std::pair{200, MockSidecar::hashed_response(r, 4)}; }, 4,
                      "mock-model");
  HttpEmbedClient client(sidecar.url(), fast_retries());
  auto h = client.health();
  EXPECT_EQ(h.dim, 4u);
  EXPECT_EQ(h.model, "mock-model");
  EXPECT_EQ(client.embed({"a b c", -1, -1}).vector.dim(), 4u);

  EXPECT_THROW(parse_health_response(R"({"status":"down","dim":4,"model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_health_response(R"({"status":"ok","model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_health_response("nope"), ProtocolError);
}

TEST(Protocol, AdvertisedDimIsEnforced) {
  MockSidecar sidecar([](const json& r) { return std::pair{200, MockSidecar::hashed_response(r, 3)}; }, 4);
  HttpEmbedClient client(sidecar.url(), fast_retries());
  client.health();
  EXPECT_THROW(client.embed({"x", -1, -1}), ProtocolError);
}

TEST(Client, UnreachableSidecarRetriesThenFails) {
  HttpEmbedClient client("http://127.0.0.1:1", fast_retries());
  auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(client.embed({"volume", -1, -1}), GatewayUnavailable);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(Client, SameRequestSameBytes) {
  MockSidecar sidecar([](const json& r) { return std::pair{200, MockSidecar::hashed_response(r, 8)}; }, 8);
  HttpEmbedClient client(sidecar.url(), fast_retries());
  auto a = client.embed({"The volume of trade.", 4, 10});
  auto b = client.embed({"The volume of trade.", 4, 10});
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_EQ(a.vector.dim(), 8u);
}

TEST(Gateway, CacheIsTransparent) {
  MockSidecar sidecar([](const json& r) { return std::pair{200, MockSidecar::hashed_response(r, 4)}; });
  EmbeddingGateway cached(std::make_unique<HttpEmbedClient>(sidecar.url(), fast_retries()));
  HttpEmbedClient direct(sidecar.url(), fast_retries());
  const std::vector<EmbedRequest> reqs = {{"a volume b", 2, 8}, {"a volume b", -1, -1}, {"x", 0, 1}};
  for (int round = 0; round < 3; ++round)
    for (const auto& r : reqs) EXPECT_EQ(cached.embed(r), direct.embed(r).vector);
  // three distinct requests reached the sidecar through the gateway, nine direct
  EXPECT_EQ(sidecar.hits(), 3 + 9);
}

TEST(Gateway, NoRemoteAndCacheMissIsUnavailable) {
  EmbeddingGateway g;
  EXPECT_THROW(g.embed({"x", -1, -1}), GatewayUnavailable);
  g.cache().put({"x", -1, -1}, EmbedResponse{EmbeddingVector({1, 2}), "m"});
  EXPECT_EQ(contextual_embed(g, {"x", -1, -1}), EmbeddingVector({1, 2}));
  EXPECT_THROW(g.embed({"x", 0, 5}), ProtocolError);
}

TEST(Cache, SaveLoadRoundTripIsByteStable) {
  EmbedCache c;
  c.put({"zeta", -1, -1}, EmbedResponse{EmbeddingVector({0.1, 0.2}), "m"});
  c.put({"alpha beta", 6, 10}, EmbedResponse{EmbeddingVector({1e-17, -3.25}), "m"});
  c.put({"alpha beta", 0, 5}, EmbedResponse{EmbeddingVector({0.30000000000000004, 1}), "m"});
  std::ostringstream first;
  c.save(first);
  EmbedCache d;
  std::istringstream in(first.str());
  d.load(in, "mem");
  EXPECT_EQ(d.size(), 3u);
  std::ostringstream second;
  d.save(second);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(d.get({"alpha beta", 6, 10})->vector, EmbeddingVector({1e-17, -3.25}));
}

TEST(Cache, CommittedFixtureLoads) {
  EmbedCache c;
  c.load_file(test_data("gateway_cache.jsonl"));
  EXPECT_GE(c.size(), 10u);
  std::ifstream in(test_data("gateway_cache.jsonl"));
  std::stringstream original;
  original << in.rdbuf();
  std::ostringstream resaved;
  c.save(resaved);
  EXPECT_EQ(resaved.str(), original.str());
}

TEST(Cache, MalformedLines) {
  EmbedCache c;
  std::istringstream bad_span(R"({"sentence":"x","target_start":0,"target_end":5,"vector":[1],"dim":1,"model":"m"})");
  EXPECT_THROW(c.load(bad_span, "mem"), MalformedInput);
  std::istringstream bad_json("{");
  EXPECT_THROW(c.load(bad_json, "mem"), MalformedInput);
}

TEST(Gateway, BoundedInFlightUnderConcurrency) {
  MockSidecar sidecar([](const json& r) { return std::pair{200, MockSidecar::hashed_response(r, 4)}; });
  sidecar.set_delay_ms(20);
  EmbeddingGateway g(std::make_unique<HttpEmbedClient>(sidecar.url(), fast_retries()), 2);
  std::vector<std::future<EmbeddingVector>> futures;
  for (int i = 0; i < 12; ++i)
    futures.push_back(std::async(std::launch::async, [&g, i] {
      return g.embed({"sentence number " + std::to_string(i % 6), -1, -1});
    }));
  for (auto& f : futures) EXPECT_EQ(f.get().dim(), 4u);
  EXPECT_LE(sidecar.peak_in_flight(), 2);
  EXPECT_EQ(g.cache().size(), 6u);
}

TEST(Gateway, ConcurrentCacheReadersAgree) {
  auto remote = std::make_unique<CountingEmbedder>();
  auto* counter = remote.get();
  EmbeddingGateway g(std::move(remote), 8);
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&g] {
      for (int i = 0; i < 200; ++i) g.embed({std::string(1 + i % 10, 'x'), -1, -1});
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(g.cache().size(), 10u);
  EXPECT_GE(counter->calls.load(), 10);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(g.embed({std::string(1 + i, 'x'), -1, -1})[0], static_cast<double>(1 + i));
}
