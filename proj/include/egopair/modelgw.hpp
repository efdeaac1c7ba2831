// Uniform gateway to model backends: remote inference services behind
// dialect adapters, and seeded reference policies used to validate the
// harness itself. Also carries the pinhole depth back-projection used to
// feed point-cloud backends, and the query/response transcript sink.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "egopair/detail/hash.hpp"
#include "egopair/detail/jsonl.hpp"
#include "egopair/detail/sha256.hpp"
#include "egopair/detail/text.hpp"
#include "egopair/errors.hpp"
#include "egopair/promptkit.hpp"
#include "egopair/types.hpp"

namespace egopair {

// ---- backend interface -------------------------------------------------------

// Per-query context. index makes policy answers a pure function of
// (policy seed, query index); oracle_hint is the ground-truth side channel
// consumed only by the test-only Oracle policy.
struct QueryContext {
  std::uint64_t index = 0;
  std::optional<Pick> oracle_hint;
};

inline constexpr std::size_t kMaxImageBytes = 20 * 1024 * 1024;

class ModelBackend {
 public:
  ModelBackend(std::string id, int max_images) : id_(std::move(id)), max_images_(max_images) {}
  virtual ~ModelBackend() = default;

  const std::string& id() const { return id_; }
  int max_images() const { return max_images_; }
  virtual bool is_policy() const { return false; }
  virtual int parallelism() const { return 1; }

  std::string query(const std::vector<std::string>& image_paths,
                    const PromptText& prompt) {
    QueryContext ctx;
    ctx.index = auto_index_.fetch_add(1);
    return query(image_paths, prompt, ctx);
  }

  std::string query(const std::vector<std::string>& image_paths,
                    const PromptText& prompt, const QueryContext& ctx) {
    if (static_cast<int>(image_paths.size()) > max_images_) {
      throw Error("backend \"" + id_ + "\" accepts at most " +
                  std::to_string(max_images_) + " images, got " +
                  std::to_string(image_paths.size()));
    }
    return run_query(image_paths, prompt, ctx);
  }

 protected:
  virtual std::string run_query(const std::vector<std::string>& image_paths,
                                const PromptText& prompt,
                                const QueryContext& ctx) = 0;

 private:
  std::string id_;
  int max_images_;
  std::atomic<std::uint64_t> auto_index_{0};
};

// ---- reference policies --------------------------------------------------------

enum class PolicyKind {
  oracle,          // answers the ground-truth hint; test-only
  always_first,    // always "img1"
  always_second,   // always "img2": mimics pure chronological-order bias
  seeded_random,   // 50/50, deterministic in (seed, query index)
  chrono_bias_sim  // "img2" with probability p
};

inline std::optional<PolicyKind> policy_kind_from_string(std::string_view s) {
  if (s == "oracle") return PolicyKind::oracle;
  if (s == "always_first") return PolicyKind::always_first;
  if (s == "always_second") return PolicyKind::always_second;
  if (s == "seeded_random") return PolicyKind::seeded_random;
  if (s == "chrono_bias_sim") return PolicyKind::chrono_bias_sim;
  return std::nullopt;
}

// Policies answer from (kind, seed, query index) alone and never open image
// files, so they run against nonexistent paths and replay byte-identically.
class PolicyBackend : public ModelBackend {
 public:
  PolicyBackend(std::string id, PolicyKind kind, std::uint64_t seed = 0, double p = 0.5)
      : ModelBackend(std::move(id), 2), kind_(kind), p_(p), rng_(seed, "policy") {}

  bool is_policy() const override { return true; }
  PolicyKind kind() const { return kind_; }

 protected:
  std::string run_query(const std::vector<std::string>&, const PromptText&,
                        const QueryContext& ctx) override {
    switch (kind_) {
      case PolicyKind::oracle:
        if (!ctx.oracle_hint) {
          throw Error("oracle policy requires a ground-truth hint");
        }
        return format_verdict_line(*ctx.oracle_hint);
      case PolicyKind::always_first:
        return format_verdict_line(Pick::img1);
      case PolicyKind::always_second:
        return format_verdict_line(Pick::img2);
      case PolicyKind::seeded_random:
        return format_verdict_line(rng_.unit_at(ctx.index) < 0.5 ? Pick::img1
                                                                 : Pick::img2);
      case PolicyKind::chrono_bias_sim:
        return format_verdict_line(rng_.unit_at(ctx.index) < p_ ? Pick::img2
                                                                : Pick::img1);
    }
    throw Error("unknown policy kind");
  }

 private:
  PolicyKind kind_;
  double p_;
  detail::CounterRng rng_;
};

// ---- depth back-projection -------------------------------------------------------

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
};

struct Point3 {
  double x = 0;
  double y = 0;
  double z = 0;
};

// Row-major depth grid in meters; 0 (or negative) marks an invalid pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(col)];
  }
};

// Pinhole model: x = (u - cx) * d / fx, y = (v - cy) * d / fy, z = d.
// One point per valid pixel, row-major order.
inline std::vector<Point3> backproject_depth(const DepthImage& depth,
                                             const CameraIntrinsics& intr) {
  if (depth.width <= 0 || depth.height <= 0 ||
      depth.data.size() != static_cast<std::size_t>(depth.width) *
                               static_cast<std::size_t>(depth.height)) {
    throw Error("depth grid is empty or inconsistent with its dimensions");
  }
  if (intr.fx <= 0 || intr.fy <= 0) {
    throw Error("camera intrinsics must have fx, fy > 0");
  }
  std::vector<Point3> cloud;
  cloud.reserve(depth.data.size());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(v, u);
      if (d <= 0) continue;
      cloud.push_back({(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d});
    }
  }
  if (cloud.empty()) {
    throw Error("all depth pixels invalid");
  }
  return cloud;
}

// ---- remote backends ------------------------------------------------------------

struct BackendConfig {
  std::string id;
  std::string kind = "policy";  // "remote" | "policy"
  std::string endpoint;         // e.g. http://host:port/v1/chat/completions
  std::string dialect = "simple";
  std::string model;
  std::string api_key_env;
  int max_images = 2;
  double timeout_s = 30.0;
  int max_retries = 2;
  int parallelism = 4;
  std::string policy;  // policy kind name when kind == "policy"
  std::uint64_t seed = 0;
  double p = 0.5;

  static BackendConfig from_json(const nlohmann::json& j) {
    BackendConfig c;
    if (!j.contains("id") || !j["id"].is_string()) {
      throw SchemaError("backends[].id", "missing or not a string");
    }
    c.id = j["id"].get<std::string>();
    if (j.contains("kind")) c.kind = j["kind"].get<std::string>();
    if (j.contains("endpoint")) c.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("dialect")) c.dialect = j["dialect"].get<std::string>();
    if (j.contains("model")) c.model = j["model"].get<std::string>();
    if (j.contains("api_key_env")) c.api_key_env = j["api_key_env"].get<std::string>();
    if (j.contains("max_images")) c.max_images = j["max_images"].get<int>();
    if (j.contains("timeout_s")) c.timeout_s = j["timeout_s"].get<double>();
    if (j.contains("max_retries")) c.max_retries = j["max_retries"].get<int>();
    if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<int>();
    if (j.contains("policy")) c.policy = j["policy"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("p")) c.p = j["p"].get<double>();
    return c;
  }
};

namespace detail_gw {

struct ParsedEndpoint {
  std::string host_port;  // scheme://host:port
  std::string path;       // /path (default "/")
};

inline ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw SchemaError("endpoint", "expected scheme://host[:port][/path], got \"" +
                                      endpoint + "\"");
  }
  if (endpoint.substr(0, scheme_end) == "https") {
    throw TransportError("https endpoints require a TLS-enabled build; use http");
  }
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

inline std::string mime_for(const std::filesystem::path& p) {
  const std::string ext = detail::to_lower(p.extension().string());
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

inline std::string read_image_b64(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path);
  const auto size = std::filesystem::file_size(path);
  if (size > kMaxImageBytes) {
    throw OversizeImage("image exceeds " + std::to_string(kMaxImageBytes) +
                        " bytes: " + path);
  }
  return detail::base64_encode(detail::read_text_file(path));
}

}  // namespace detail_gw

// Dialect adapter: builds the request body and extracts the reply text for
// one service flavor. Greedy decoding / temperature 0 is requested wherever
// the dialect has a field for it.
struct Dialect {
  virtual ~Dialect() = default;
  virtual nlohmann::json build_request(const BackendConfig& cfg,
                                       const std::vector<std::string>& image_paths,
                                       const std::string& prompt) const = 0;
  virtual std::string extract_response(const nlohmann::json& reply) const = 0;
};

// Minimal chat-style POST: {"prompt", "images": [b64...], "temperature": 0}
// answered by {"text": "..."}.
struct SimpleDialect : Dialect {
  nlohmann::json build_request(const BackendConfig& cfg,
                               const std::vector<std::string>& image_paths,
                               const std::string& prompt) const override {
    nlohmann::json body;
    if (!cfg.model.empty()) body["model"] = cfg.model;
    body["prompt"] = prompt;
    body["temperature"] = 0;
    body["images"] = nlohmann::json::array();
    for (const auto& p : image_paths) {
      body["images"].push_back(detail_gw::read_image_b64(p));
    }
    return body;
  }

  std::string extract_response(const nlohmann::json& reply) const override {
    if (!reply.contains("text") || !reply["text"].is_string()) {
      throw TransportError("simple dialect reply has no \"text\" field");
    }
    return reply["text"].get<std::string>();
  }
};

// OpenAI-compatible chat completions with base64 image_url content parts.
struct OpenAiChatDialect : Dialect {
  nlohmann::json build_request(const BackendConfig& cfg,
                               const std::vector<std::string>& image_paths,
                               const std::string& prompt) const override {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : image_paths) {
      content.push_back(
          {{"type", "image_url"},
           {"image_url",
            {{"url", "data:" + detail_gw::mime_for(p) + ";base64," +
                         detail_gw::read_image_b64(p)}}}});
    }
    content.push_back({{"type", "text"}, {"text", prompt}});
    nlohmann::json body;
    if (!cfg.model.empty()) body["model"] = cfg.model;
    body["temperature"] = 0;
    body["messages"] = nlohmann::json::array({
        {{"role", "user"}, {"content", content}},
    });
    return body;
  }

  std::string extract_response(const nlohmann::json& reply) const override {
    if (reply.contains("choices") && reply["choices"].is_array() &&
        !reply["choices"].empty()) {
      const auto& msg = reply["choices"][0];
      if (msg.contains("message") && msg["message"].contains("content") &&
          msg["message"]["content"].is_string()) {
        return msg["message"]["content"].get<std::string>();
      }
    }
    throw TransportError("openai_chat reply has no choices[0].message.content");
  }
};

inline std::unique_ptr<Dialect> make_dialect(const std::string& name) {
  if (name == "simple") return std::make_unique<SimpleDialect>();
  if (name == "openai_chat") return std::make_unique<OpenAiChatDialect>();
  throw SchemaError("dialect", "unknown dialect \"" + name + "\"");
}

class RemoteBackend : public ModelBackend {
 public:
  explicit RemoteBackend(BackendConfig cfg)
      : ModelBackend(cfg.id, cfg.max_images),
        cfg_(std::move(cfg)),
        dialect_(make_dialect(cfg_.dialect)) {
    detail_gw::parse_endpoint(cfg_.endpoint);  // validate early
  }

  int parallelism() const override { return cfg_.parallelism; }

 protected:
  std::string run_query(const std::vector<std::string>& image_paths,
                        const PromptText& prompt, const QueryContext&) override;

 private:
  BackendConfig cfg_;
  std::unique_ptr<Dialect> dialect_;
};

inline std::unique_ptr<ModelBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == "policy") {
    auto kind = policy_kind_from_string(cfg.policy.empty() ? cfg.id : cfg.policy);
    if (!kind) {
      throw SchemaError("backends[].policy",
                        "unknown policy kind \"" + cfg.policy + "\" for backend \"" +
                            cfg.id + "\"");
    }
    return std::make_unique<PolicyBackend>(cfg.id, *kind, cfg.seed, cfg.p);
  }
  if (cfg.kind == "remote") return std::make_unique<RemoteBackend>(cfg);
  throw SchemaError("backends[].kind", "expected \"remote\" or \"policy\", got \"" +
                                           cfg.kind + "\"");
}

// The built-in policy roster, always available to the CLI and tests.
inline void add_builtin_policies(std::map<std::string, std::unique_ptr<ModelBackend>>& out,
                                 std::uint64_t seed) {
  auto add = [&](const char* name, PolicyKind kind, double p = 0.5) {
    out[name] = std::make_unique<PolicyBackend>(name, kind, seed, p);
  };
  add("oracle", PolicyKind::oracle);
  add("always_first", PolicyKind::always_first);
  add("always_second", PolicyKind::always_second);
  add("seeded_random", PolicyKind::seeded_random);
  add("chrono_bias_sim", PolicyKind::chrono_bias_sim, 0.8);
}

// Roster file: {"backends": [ {...}, ... ]} or a bare array.
inline std::map<std::string, std::unique_ptr<ModelBackend>> load_backends(
    const std::filesystem::path& file, std::uint64_t default_seed) {
  std::map<std::string, std::unique_ptr<ModelBackend>> out;
  add_builtin_policies(out, default_seed);
  if (file.empty()) return out;
  nlohmann::json doc = nlohmann::json::parse(detail::read_text_file(file), nullptr, false);
  if (doc.is_discarded()) throw SchemaError("<backends>", "malformed JSON");
  const nlohmann::json* arr = &doc;
  if (doc.is_object() && doc.contains("backends")) arr = &doc["backends"];
  if (!arr->is_array()) throw SchemaError("backends", "expected an array");
  for (const auto& j : *arr) {
    BackendConfig cfg = BackendConfig::from_json(j);
    out[cfg.id] = make_backend(cfg);
  }
  return out;
}

// ---- transcript -------------------------------------------------------------------

struct TranscriptEntry {
  std::string sample_id;
  std::string backend_id;
  std::string prompt_sha256;
  std::string response;
  std::int64_t latency_ms = 0;
  std::int64_t ts = 0;
};

// Append-only JSONL sink. An unwritable sink degrades to a warning: the
// evaluation still produces metrics.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(const std::filesystem::path& path) : path_(path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) {
      available_ = false;
      std::cerr << "warning: transcript sink unavailable: " << path.string() << "\n";
    }
  }

  bool available() const { return available_; }
  const std::filesystem::path& path() const { return path_; }

  void append(const TranscriptEntry& e) {
    if (!available_) return;
    nlohmann::json j;
    j["sample_id"] = e.sample_id;
    j["backend_id"] = e.backend_id;
    j["prompt_sha256"] = e.prompt_sha256;
    j["response"] = e.response;
    j["latency_ms"] = e.latency_ms;
    j["ts"] = e.ts;
    std::lock_guard<std::mutex> lock(mu_);
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
  bool available_ = true;
};

inline std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> entries;
  detail::for_each_jsonl(path, [&](std::size_t, const nlohmann::json& j) {
    TranscriptEntry e;
    e.sample_id = j.at("sample_id").get<std::string>();
    e.backend_id = j.at("backend_id").get<std::string>();
    e.prompt_sha256 = j.value("prompt_sha256", "");
    e.response = j.at("response").get<std::string>();
    e.latency_ms = j.value("latency_ms", std::int64_t{0});
    e.ts = j.value("ts", std::int64_t{0});
    entries.push_back(std::move(e));
  });
  return entries;
}

}  // namespace egopair

// RemoteBackend::run_query lives out of line to keep httplib's inclusion in
// one obvious place.
#include "httplib.h"

namespace egopair {

inline std::string RemoteBackend::run_query(const std::vector<std::string>& image_paths,
                                            const PromptText& prompt,
                                            const QueryContext&) {
  const auto ep = detail_gw::parse_endpoint(cfg_.endpoint);
  const nlohmann::json body = dialect_->build_request(cfg_, image_paths, prompt.text);
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_error = "no attempt made";
  const int attempts = cfg_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto backoff = std::chrono::milliseconds(100LL << (attempt - 1));
      std::this_thread::sleep_for(std::min(backoff, std::chrono::milliseconds(2000)));
    }
    httplib::Client client(ep.host_port);
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write) {
        last_error = "timeout: " + httplib::to_string(err);
        if (attempt + 1 == attempts) throw Timeout(last_error + " from " + cfg_.endpoint);
      } else {
        last_error = "transport: " + httplib::to_string(err);
        if (attempt + 1 == attempts) {
          throw TransportError(last_error + " from " + cfg_.endpoint);
        }
      }
      continue;
    }
    if (res->status == 429) {
      last_error = "rate limited (429)";
      if (attempt + 1 == attempts) throw RateLimited(last_error + " from " + cfg_.endpoint);
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error (" + std::to_string(res->status) + ")";
      if (attempt + 1 == attempts) {
        throw TransportError(last_error + " from " + cfg_.endpoint);
      }
      continue;
    }
    if (res->status != 200) {
      // Client errors are not retried: the request itself is wrong.
      throw TransportError("status " + std::to_string(res->status) + " from " +
                           cfg_.endpoint + ": " + res->body);
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
      throw TransportError("non-JSON reply from " + cfg_.endpoint);
    }
    return dialect_->extract_response(reply);
  }
  throw TransportError(last_error + " from " + cfg_.endpoint);
}

}  // namespace egopair
