#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"

#include "egopair/detail/text.hpp"
#include "egopair/modelgw.hpp"
#include "test_helpers.hpp"

using namespace egopair;
using egotest::TempDir;

TEST_SUITE("modelgw") {

TEST_CASE("policies answer without reading pixels") {
  const PromptText prompt = render_short_prompt("pour water");
  const std::vector<std::string> ghost_images = {"/nonexistent/a.jpg",
                                                 "/nonexistent/b.jpg"};

  PolicyBackend second("always_second", PolicyKind::always_second);
  CHECK(second.query(ghost_images, prompt) == "closer to completion: [img2]");

  PolicyBackend first("always_first", PolicyKind::always_first);
  CHECK(first.query(ghost_images, prompt) == "closer to completion: [img1]");

  PolicyBackend oracle("oracle", PolicyKind::oracle);
  QueryContext ctx;
  ctx.oracle_hint = Pick::img1;
  CHECK(oracle.query(ghost_images, prompt, ctx) == "closer to completion: [img1]");
  CHECK_THROWS(oracle.query(ghost_images, prompt));  // no hint, test-only guard

  CHECK_THROWS(second.query({"a", "b", "c"}, prompt));  // max_images honored
}

TEST_CASE("seeded policies replay identically") {
  const PromptText prompt = render_short_prompt("x");
  const std::vector<std::string> images = {"a.jpg", "b.jpg"};

  PolicyBackend run1("r", PolicyKind::seeded_random, 7);
  PolicyBackend run2("r", PolicyKind::seeded_random, 7);
  PolicyBackend other("r", PolicyKind::seeded_random, 8);
  bool any_difference = false;
  std::size_t img2_count = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    QueryContext ctx;
    ctx.index = i;
    const std::string a = run1.query(images, prompt, ctx);
    CHECK(a == run2.query(images, prompt, ctx));
    if (a != other.query(images, prompt, ctx)) any_difference = true;
    if (a == "closer to completion: [img2]") ++img2_count;
  }
  CHECK(any_difference);
  CHECK(img2_count > 400);
  CHECK(img2_count < 600);

  PolicyBackend biased("b", PolicyKind::chrono_bias_sim, 5, 0.8);
  std::size_t biased_img2 = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    QueryContext ctx;
    ctx.index = i;
    if (biased.query(images, prompt, ctx) == "closer to completion: [img2]") {
      ++biased_img2;
    }
  }
  CHECK(biased_img2 > 740);
  CHECK(biased_img2 < 860);
}

TEST_CASE("backprojection satisfies the pinhole identities") {
  CameraIntrinsics intr{100.0, 120.0, 4.0, 5.0};

  DepthImage one{9, 11, std::vector<double>(99, 0.0)};
  one.data[static_cast<std::size_t>(5) * 9 + 4] = 2.0;  // pixel (u=cx, v=cy)
  auto cloud = backproject_depth(one, intr);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud[0].x == doctest::Approx(0.0));
  CHECK(cloud[0].y == doctest::Approx(0.0));
  CHECK(cloud[0].z == doctest::Approx(2.0));

  // Unit-tangent identity needs u = cx + fx inside the grid.
  CameraIntrinsics small{3.0, 2.0, 1.0, 1.0};
  DepthImage grid{8, 4, std::vector<double>(32, 0.0)};
  grid.data[static_cast<std::size_t>(1) * 8 + 4] = 3.0;  // (u=cx+fx=4, v=cy=1)
  cloud = backproject_depth(grid, small);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud[0].x == doctest::Approx(3.0));
  CHECK(cloud[0].y == doctest::Approx(0.0));
  CHECK(cloud[0].z == doctest::Approx(3.0));
}

TEST_CASE("plane back-projection round-trips through forward projection") {
  CameraIntrinsics intr{50.0, 60.0, 4.5, 4.5};
  DepthImage plane{10, 10, std::vector<double>(100, 1.0)};
  const auto cloud = backproject_depth(plane, intr);
  REQUIRE(cloud.size() == 100);

  // Forward-project oracle: u = x*fx/z + cx, v = y*fy/z + cy, row-major order.
  double max_err = 0.0;
  std::size_t i = 0;
  for (int v = 0; v < 10; ++v) {
    for (int u = 0; u < 10; ++u, ++i) {
      const double uu = cloud[i].x * intr.fx / cloud[i].z + intr.cx;
      const double vv = cloud[i].y * intr.fy / cloud[i].z + intr.cy;
      max_err = std::max({max_err, std::abs(uu - u), std::abs(vv - v)});
    }
  }
  CHECK(max_err < 1e-6);

  DepthImage invalid{4, 4, std::vector<double>(16, 0.0)};
  CHECK_THROWS(backproject_depth(invalid, intr));
  DepthImage holes{2, 2, {1.0, 0.0, -1.0, 2.0}};
  CHECK(backproject_depth(holes, intr).size() == 2);
}

TEST_CASE("transcript writer persists entries and degrades gracefully") {
  TempDir dir("transcript");
  const auto path = dir.path() / "transcript.jsonl";
  {
    TranscriptWriter writer(path);
    REQUIRE(writer.available());
    for (int i = 0; i < 10; ++i) {
      writer.append({"sample-" + std::to_string(i), "backend", "hash", "resp", 0, 0});
    }
  }
  const auto entries = read_transcript(path);
  REQUIRE(entries.size() == 10);
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.sample_id);
  CHECK(ids.size() == 10);
  CHECK(entries[0].backend_id == "backend");

  // Parent path is a regular file: the sink is unavailable but appends are
  // harmless no-ops.
  detail::write_text_file(dir.path() / "blocker", "");
  TranscriptWriter blocked(dir.path() / "blocker" / "t.jsonl");
  CHECK_FALSE(blocked.available());
  blocked.append({"s", "b", "h", "r", 0, 0});
}

TEST_CASE("backend roster: builtins plus config file entries") {
  TempDir dir("roster");
  detail::write_text_file(dir.path() / "backends.json", R"({
    "backends": [
      {"id": "my_bias", "kind": "policy", "policy": "chrono_bias_sim", "p": 0.9, "seed": 3},
      {"id": "svc", "kind": "remote", "endpoint": "http://127.0.0.1:1/v1",
       "dialect": "simple", "max_images": 2, "timeout_s": 1, "max_retries": 0}
    ]
  })");
  auto roster = load_backends(dir.path() / "backends.json", 42);
  CHECK(roster.count("oracle") == 1);
  CHECK(roster.count("always_second") == 1);
  CHECK(roster.count("seeded_random") == 1);
  CHECK(roster.count("my_bias") == 1);
  CHECK(roster.count("svc") == 1);
  CHECK(roster.at("my_bias")->is_policy());
  CHECK_FALSE(roster.at("svc")->is_policy());

  detail::write_text_file(dir.path() / "bad.json", R"([{"id": "x", "kind": "wat"}])");
  CHECK_THROWS_AS(load_backends(dir.path() / "bad.json", 0), SchemaError);

  BackendConfig https;
  https.id = "tls";
  https.kind = "remote";
  https.endpoint = "https://example.com/v1";
  CHECK_THROWS_AS(make_backend(https), TransportError);
}

TEST_CASE("remote backend speaks the simple dialect with retries") {
  TempDir dir("remote");
  const auto img1 = dir.path() / "a.jpg";
  const auto img2 = dir.path() / "b.jpg";
  detail::write_text_file(img1, "JPEGDATA-A");
  detail::write_text_file(img2, "JPEGDATA-B");

  httplib::Server server;
  std::atomic<int> hits{0};
  nlohmann::json last_request;
  std::mutex mu;
  server.Post("/v1/judge", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = hits.fetch_add(1);
    {
      std::lock_guard<std::mutex> lock(mu);
      last_request = nlohmann::json::parse(req.body);
    }
    if (n == 0) {
      res.status = 500;  // first attempt fails, retry must recover
      return;
    }
    res.set_content(R"({"text": "closer to completion: [img2]"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendConfig cfg;
  cfg.id = "svc";
  cfg.kind = "remote";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/judge";
  cfg.dialect = "simple";
  cfg.max_retries = 2;
  cfg.timeout_s = 5;
  RemoteBackend backend(cfg);

  const PromptText prompt = render_short_prompt("stack blocks");
  const std::string response =
      backend.query({img1.string(), img2.string()}, prompt);
  CHECK(response == "closer to completion: [img2]");
  CHECK(hits.load() == 2);
  {
    std::lock_guard<std::mutex> lock(mu);
    CHECK(last_request.at("prompt").get<std::string>() == prompt.text);
    CHECK(last_request.at("temperature").get<int>() == 0);
    REQUIRE(last_request.at("images").size() == 2);
    CHECK(last_request.at("images")[0].get<std::string>() ==
          detail::base64_encode("JPEGDATA-A"));
    CHECK(last_request.at("images")[1].get<std::string>() ==
          detail::base64_encode("JPEGDATA-B"));
  }

  CHECK_THROWS_AS(backend.query({(dir.path() / "missing.jpg").string()}, prompt),
                  MissingFile);

  server.stop();
  listener.join();
}

TEST_CASE("remote backend surfaces typed transport errors") {
  TempDir dir("remote-err");
  const auto img = dir.path() / "a.jpg";
  detail::write_text_file(img, "X");

  httplib::Server server;
  std::atomic<int> limited_hits{0};
  server.Post("/limited", [&](const httplib::Request&, httplib::Response& res) {
    limited_hits.fetch_add(1);
    res.status = 429;
  });
  std::atomic<int> notfound_hits{0};
  server.Post("/notfound", [&](const httplib::Request&, httplib::Response& res) {
    notfound_hits.fetch_add(1);
    res.status = 404;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendConfig cfg;
  cfg.id = "svc";
  cfg.kind = "remote";
  cfg.dialect = "simple";
  cfg.timeout_s = 5;
  cfg.max_retries = 1;

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/limited";
  RemoteBackend limited(cfg);
  CHECK_THROWS_AS(limited.query({img.string()}, render_short_prompt("x")), RateLimited);
  CHECK(limited_hits.load() == 2);  // retried up to the bound, then surfaced

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/notfound";
  RemoteBackend notfound(cfg);
  CHECK_THROWS_AS(notfound.query({img.string()}, render_short_prompt("x")),
                  TransportError);
  CHECK(notfound_hits.load() == 1);  // client errors are not retried

  server.stop();
  listener.join();
}

TEST_CASE("openai_chat dialect shapes requests and parses choices") {
  TempDir dir("openai");
  const auto img = dir.path() / "frame.png";
  detail::write_text_file(img, "PNGDATA");

  httplib::Server server;
  nlohmann::json last_request;
  std::mutex mu;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                {
                  std::lock_guard<std::mutex> lock(mu);
                  last_request = nlohmann::json::parse(req.body);
                }
                res.set_content(
                    R"({"choices": [{"message": {"role": "assistant",
                        "content": "closer to completion: [img1]"}}]})",
                    "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendConfig cfg;
  cfg.id = "gpt";
  cfg.kind = "remote";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.dialect = "openai_chat";
  cfg.model = "test-model";
  cfg.timeout_s = 5;
  RemoteBackend backend(cfg);

  const std::string out = backend.query({img.string()}, render_short_prompt("t"));
  CHECK(out == "closer to completion: [img1]");
  {
    std::lock_guard<std::mutex> lock(mu);
    CHECK(last_request.at("model").get<std::string>() == "test-model");
    CHECK(last_request.at("temperature").get<int>() == 0);
    const auto& content = last_request.at("messages")[0].at("content");
    REQUIRE(content.size() == 2);
    CHECK(content[0].at("type") == "image_url");
    const std::string url = content[0].at("image_url").at("url").get<std::string>();
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
    CHECK(url.substr(url.find(',') + 1) == detail::base64_encode("PNGDATA"));
    CHECK(content[1].at("type") == "text");
  }

  server.stop();
  listener.join();
}

}  // TEST_SUITE
