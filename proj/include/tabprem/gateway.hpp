#pragma once

// Contextual embeddings for key disambiguation, served by an external
// sidecar over HTTP/JSON:
//
//   POST /embed  {"sentence": str, "target_start": int, "target_end": int}
//             -> 200 {"vector": [number x dim], "dim": int, "model": str}
//   GET /health -> 200 {"status": "ok", "dim": int, "model": str}
//
// Offsets are UTF-8 byte offsets; (-1, -1) requests whole-sentence pooling.
// Responses are cached by (sentence, start, end) and the cache can be saved
// and replayed, so runs without a sidecar are reproducible.

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <thread>
#include <tuple>

#include "httplib.h"
#include "json.hpp"
#include "tabprem/embedding.hpp"
#include "tabprem/error.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

struct EmbedRequest {
  std::string sentence;
  long target_start = -1;
  long target_end = -1;

  bool whole_sentence() const { return target_start == -1 && target_end == -1; }
  auto tie() const { return std::tie(sentence, target_start, target_end); }
  friend bool operator<(const EmbedRequest& a, const EmbedRequest& b) { return a.tie() < b.tie(); }
  friend bool operator==(const EmbedRequest& a, const EmbedRequest& b) { return a.tie() == b.tie(); }
};

/// Throws ProtocolError when the span is not a valid byte range on character
/// boundaries. Checked before any network traffic.
inline void validate_request(const EmbedRequest& req) {
  if (req.whole_sentence()) return;
  const auto len = static_cast<long>(req.sentence.size());
  if (req.target_start < 0 || req.target_end < 0 || req.target_start >= req.target_end ||
      req.target_end > len)
    throw ProtocolError("target span [" + std::to_string(req.target_start) + ", " +
                        std::to_string(req.target_end) + ") invalid for sentence of " +
                        std::to_string(len) + " bytes");
  if (!text::on_char_boundary(req.sentence, static_cast<std::size_t>(req.target_start)) ||
      !text::on_char_boundary(req.sentence, static_cast<std::size_t>(req.target_end)))
    throw ProtocolError("target span splits a UTF-8 character");
}

inline nlohmann::ordered_json request_to_json(const EmbedRequest& req) {
  nlohmann::ordered_json j;
  j["sentence"] = req.sentence;
  j["target_start"] = req.target_start;
  j["target_end"] = req.target_end;
  return j;
}

struct HealthInfo {
  std::size_t dim = 0;
  std::string model;
};

struct EmbedResponse {
  EmbeddingVector vector;
  std::string model;
};

inline EmbedResponse parse_embed_response(std::string_view body,
                                          std::optional<std::size_t> expected_dim = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("embed response is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("embed response is not an object");
  auto vec = j.find("vector");
  auto dim = j.find("dim");
  auto model = j.find("model");
  if (vec == j.end() || !vec->is_array()) throw ProtocolError("embed response lacks \"vector\"");
  if (dim == j.end() || !dim->is_number_unsigned()) throw ProtocolError("embed response lacks \"dim\"");
  if (model == j.end() || !model->is_string()) throw ProtocolError("embed response lacks \"model\"");
  std::vector<double> comps;
  comps.reserve(vec->size());
  for (const auto& c : *vec) {
    if (!c.is_number()) throw ProtocolError("non-numeric vector component");
    comps.push_back(c.get<double>());
  }
  const auto d = dim->get<std::size_t>();
  if (comps.size() != d || d == 0)
    throw ProtocolError("vector length " + std::to_string(comps.size()) + " != dim " +
                        std::to_string(d));
  if (expected_dim && *expected_dim != d)
    throw ProtocolError("dim " + std::to_string(d) + " differs from advertised " +
                        std::to_string(*expected_dim));
  try {
    return EmbedResponse{EmbeddingVector(std::move(comps)), model->get<std::string>()};
  } catch (const MalformedInput& e) {
    throw ProtocolError(e.what());
  }
}

inline HealthInfo parse_health_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("health response is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("status", "") != "ok" || !j.contains("dim") ||
      !j["dim"].is_number_unsigned() || j["dim"].get<std::size_t>() == 0 ||
      !j.contains("model") || !j["model"].is_string())
    throw ProtocolError("health response does not match {status: ok, dim, model}");
  return HealthInfo{j["dim"].get<std::size_t>(), j["model"].get<std::string>()};
}

class ContextualEmbedder {
public:
  virtual ~ContextualEmbedder() = default;
  virtual EmbedResponse embed(const EmbedRequest& req) = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_backoff{200};
  std::chrono::seconds timeout{30};
};

/// Client for the sidecar. Transport failures are retried with exponential
/// backoff; a non-200 status or a malformed body is a ProtocolError and is
/// not retried.
class HttpEmbedClient : public ContextualEmbedder {
public:
  explicit HttpEmbedClient(std::string base_url, RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  HealthInfo health() {
    auto res = with_retries([&](httplib::Client& cli) { return cli.Get("/health"); });
    if (res->status != 200)
      throw ProtocolError("GET /health returned " + std::to_string(res->status));
    auto info = parse_health_response(res->body);
    std::lock_guard lock(mu_);
    advertised_dim_ = info.dim;
    return info;
  }

  EmbedResponse embed(const EmbedRequest& req) override {
    validate_request(req);
    const auto body = request_to_json(req).dump();
    auto res = with_retries([&](httplib::Client& cli) {
      return cli.Post("/embed", body, "application/json");
    });
    if (res->status != 200)
      throw ProtocolError("POST /embed returned " + std::to_string(res->status));
    std::optional<std::size_t> dim;
    {
      std::lock_guard lock(mu_);
      dim = advertised_dim_;
    }
    auto parsed = parse_embed_response(res->body, dim);
    std::lock_guard lock(mu_);
    if (!advertised_dim_) advertised_dim_ = parsed.vector.dim();
    return parsed;
  }

private:
  template <typename Call>
  httplib::Result with_retries(Call&& call) {
    std::string last_error;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(policy_.base_backoff * (1 << (attempt - 1)));
      httplib::Client cli(base_url_);
      cli.set_connection_timeout(policy_.timeout);
      cli.set_read_timeout(policy_.timeout);
      auto res = call(cli);
      if (res) return res;
      last_error = httplib::to_string(res.error());
    }
    throw GatewayUnavailable("sidecar at " + base_url_ + " unreachable after " +
                             std::to_string(policy_.max_retries) + " retries (" +
                             last_error + ")");
  }

  std::string base_url_;
  RetryPolicy policy_;
  std::mutex mu_;
  std::optional<std::size_t> advertised_dim_;
};

/// Response cache; concurrent readers, exclusive writers. The file form is
/// JSON-lines of request fields plus "vector", "dim" and "model", written in
/// sorted request order so saved caches are byte-stable.
class EmbedCache {
public:
  std::optional<EmbedResponse> get(const EmbedRequest& req) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(req);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const EmbedRequest& req, EmbedResponse resp) {
    std::unique_lock lock(mu_);
    entries_.insert_or_assign(req, std::move(resp));
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  void load(std::istream& in, std::string_view source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      auto where = std::string(source) + ":" + std::to_string(lineno) + ": ";
      try {
        auto j = nlohmann::json::parse(line);
        EmbedRequest req{j.at("sentence").get<std::string>(),
                         j.at("target_start").get<long>(), j.at("target_end").get<long>()};
        validate_request(req);
        put(req, parse_embed_response(line));
      } catch (const nlohmann::json::exception& e) {
        throw MalformedInput(where + e.what());
      } catch (const ProtocolError& e) {
        throw MalformedInput(where + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    auto in = text::open_input(path);
    load(in, path);
  }

  void save(std::ostream& out) const {
    std::shared_lock lock(mu_);
    for (const auto& [req, resp] : entries_) {
      auto j = request_to_json(req);
      j["vector"] = std::vector<double>(resp.vector.components().begin(),
                                        resp.vector.components().end());
      j["dim"] = resp.vector.dim();
      j["model"] = resp.model;
      out << j.dump() << '\n';
    }
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MalformedInput(path + ": cannot write cache");
    save(out);
  }

private:
  mutable std::shared_mutex mu_;
  std::map<EmbedRequest, EmbedResponse> entries_;
};

/// Cache in front of an optional remote embedder, with a bound on concurrent
/// remote calls.
class EmbeddingGateway {
public:
  static constexpr std::ptrdiff_t kMaxInFlight = 64;

  explicit EmbeddingGateway(std::unique_ptr<ContextualEmbedder> remote = nullptr,
                            std::ptrdiff_t in_flight = 4)
      : remote_(std::move(remote)),
        slots_(std::clamp<std::ptrdiff_t>(in_flight, 1, kMaxInFlight)) {}

  EmbedCache& cache() { return cache_; }
  const EmbedCache& cache() const { return cache_; }
  bool has_remote() const { return remote_ != nullptr; }

  EmbeddingVector embed(const EmbedRequest& req) {
    validate_request(req);
    if (auto hit = cache_.get(req)) return hit->vector;
    if (!remote_)
      throw GatewayUnavailable("no sidecar configured and request not cached: \"" +
                               req.sentence + "\"");
    slots_.acquire();
    std::optional<EmbedResponse> resp;
    try {
      resp = remote_->embed(req);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();
    cache_.put(req, *resp);
    return resp->vector;
  }

private:
  std::unique_ptr<ContextualEmbedder> remote_;
  EmbedCache cache_;
  std::counting_semaphore<kMaxInFlight> slots_;
};

inline EmbeddingVector contextual_embed(EmbeddingGateway& gateway, const EmbedRequest& req) {
  return gateway.embed(req);
}

}  // namespace tabprem
