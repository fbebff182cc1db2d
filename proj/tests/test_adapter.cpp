#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <thread>

#include "doctest.h"
#include "promptecho/adapter.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/templates.hpp"

using namespace promptecho;

namespace {

Scene red_circle_top_left() {
  Scene s;
  s.objects.push_back({Shape::kCircle, Color::kRed, 0, 0});
  return s;
}

ExternalBackendOptions opts(const std::string& name) {
  ExternalBackendOptions o;
  o.model_name = name;
  return o;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("base64 round trip") {
  std::vector<uint8_t> data;
  for (int n = 0; n < 10; ++n) {
    auto encoded = base64_encode(data);
    CHECK(base64_decode(encoded) == data);
    data.push_back(static_cast<uint8_t>(n * 37 + 1));
  }
  CHECK(base64_encode(std::vector<uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK_THROWS_AS(base64_decode("abc"), ConfigError);     // bad length
  CHECK_THROWS_AS(base64_decode("a!=="), ConfigError);    // bad character
}

TEST_CASE("PNG bytes survive the wire encoding") {
  Image img = render(red_circle_top_left());
  Image back = decode_png(base64_decode(base64_encode(encode_png(img))));
  CHECK(back.same_pixels(img));
}

TEST_CASE("external backend protocol") {
  Image img = render(red_circle_top_left());
  TokenSeq label = canonical_caption(red_circle_top_left());

  SUBCASE("tf_logprobs request carries the documented fields") {
    nlohmann::json seen;
    auto transport = std::make_shared<FnTransport>([&](const nlohmann::json& request) {
      seen = request;
      return nlohmann::json{{"logprobs", {-0.5, -0.25}}};
    });
    ExternalBackend backend(transport, opts("test-model"));
    auto lps = backend.teacher_forced_logprobs(img, caption_query(), label);
    CHECK(lps == std::vector<double>{-0.5, -0.25});
    CHECK(seen.at("op") == "tf_logprobs");
    // the desk caption query maps to the canonical real-model query text
    CHECK(seen.at("query") == "Describe this image in detail.");
    CHECK(seen.at("label").get<std::string>().find("a red circle") == 0);
    // the image travels as decodable base64 PNG
    Image wired = decode_png(base64_decode(seen.at("image").get<std::string>()));
    CHECK(wired.same_pixels(img));
  }
  SUBCASE("query template choice is recorded in the caps name") {
    auto transport = std::make_shared<FnTransport>([&](const nlohmann::json& request) {
      CHECK(request.at("query") == "What does this image show ?");
      return nlohmann::json{{"logprobs", {-1.0}}};
    });
    ExternalBackendOptions options;
    options.model_name = "qwen-like";
    options.caption_query_override = "What does this image show ?";
    options.template_tag = "alt-caption-v2";
    ExternalBackend backend(transport, options);
    CHECK(backend.caps().name == "external:qwen-like+alt-caption-v2");
    backend.teacher_forced_logprobs(img, caption_query(), label);
  }
  SUBCASE("the OCR query maps to the shipped recognition template by default") {
    auto transport = std::make_shared<FnTransport>([&](const nlohmann::json& request) {
      CHECK(request.at("query") == ocr_reward_template());
      return nlohmann::json{{"logprobs", {-1.0}}};
    });
    ExternalBackend backend(transport, opts("m"));
    backend.teacher_forced_logprobs(img, ocr_query(), label);
  }
  SUBCASE("generate parses the text reply") {
    auto transport = std::make_shared<FnTransport>([&](const nlohmann::json& request) {
      CHECK(request.at("op") == "generate");
      CHECK(request.at("max_tokens") == 16);
      return nlohmann::json{{"text", "a red circle in the top left . <eos>"}};
    });
    ExternalBackend backend(transport, opts("test-model"));
    TokenSeq got = backend.generate(img, caption_query(), 16, 0.0, 3);
    CHECK(got.ids == label.ids);
  }
  SUBCASE("no endpoint raises BackendUnavailable") {
    ExternalBackend backend(nullptr, opts("unconfigured"));
    CHECK_THROWS_AS(backend.teacher_forced_logprobs(img, caption_query(), label),
                    BackendUnavailable);
    CHECK_THROWS_AS(backend.generate(img, caption_query(), 8, 0.0, 1), BackendUnavailable);
  }
  SUBCASE("malformed replies raise BackendUnavailable") {
    auto bad1 = std::make_shared<FnTransport>(
        [](const nlohmann::json&) { return nlohmann::json{{"unexpected", 1}}; });
    CHECK_THROWS_AS(
        ExternalBackend(bad1, opts("m")).teacher_forced_logprobs(img, caption_query(), label),
        BackendUnavailable);
    auto bad2 = std::make_shared<FnTransport>(
        [](const nlohmann::json&) { return nlohmann::json{{"logprobs", {0.5}}}; });
    CHECK_THROWS_AS(
        ExternalBackend(bad2, opts("m")).teacher_forced_logprobs(img, caption_query(), label),
        BackendUnavailable);
  }
}

TEST_CASE("external judge fills the pairwise template and parses verdicts") {
  Image img = render(red_circle_top_left());
  TokenSeq prompt = canonical_caption(red_circle_top_left());

  SUBCASE("valid preferences map to picks") {
    for (auto [pref, pick] :
         {std::pair{"image_a", AdapterVerdict::Pick::kFirst},
          std::pair{"image_b", AdapterVerdict::Pick::kSecond},
          std::pair{"tie", AdapterVerdict::Pick::kTie}}) {
      auto transport = std::make_shared<FnTransport>([&, pref = pref](const nlohmann::json& req) {
        const std::string tmpl = req.at("template").get<std::string>();
        CHECK(tmpl.find("{prompt}") == std::string::npos);  // placeholder substituted
        CHECK(tmpl.find("a red circle in the top left") != std::string::npos);
        CHECK(req.at("temperature") == 0.3);
        return nlohmann::json{{"reasoning", "because"}, {"preference", pref}};
      });
      ExternalJudge judge(transport);
      CHECK(judge.judge(prompt, img, img).pick == pick);
    }
  }
  SUBCASE("out-of-schema preference raises VerdictParseError") {
    auto transport = std::make_shared<FnTransport>(
        [](const nlohmann::json&) { return nlohmann::json{{"preference", "both"}}; });
    ExternalJudge judge(transport);
    CHECK_THROWS_AS(judge.judge(prompt, img, img), VerdictParseError);
  }
  SUBCASE("missing preference raises VerdictParseError") {
    auto transport = std::make_shared<FnTransport>(
        [](const nlohmann::json&) { return nlohmann::json{{"reasoning", "no idea"}}; });
    ExternalJudge judge(transport);
    CHECK_THROWS_AS(judge.judge(prompt, img, img), VerdictParseError);
  }
}

TEST_CASE("embedded templates match the shipped asset files") {
  const std::string assets = PROMPTECHO_ASSETS_DIR;
  CHECK(judge_pairwise_template() == read_file(assets + "/judge_pairwise_v1.txt"));
  CHECK(label_extraction_template() == read_file(assets + "/label_extraction_v1.txt"));
  CHECK(ocr_reward_template() == read_file(assets + "/ocr_reward_query_v1.txt"));
  CHECK(text_eval_template() == read_file(assets + "/text_eval_v1.txt"));
}

TEST_CASE("fill_template substitutes every placeholder") {
  CHECK(fill_template("x {prompt} y {prompt}", "P") == "x P y P");
  CHECK(fill_template("no placeholder", "P") == "no placeholder");
}

TEST_CASE("tcp transport round trips against a local echo server") {
  // minimal line server: replies {"logprobs":[-1.0]} to any request
  int listen_fd = -1;
  int port = 0;
  {
    listen_fd = socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(listen_fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    REQUIRE(listen(listen_fd, 1) == 0);
    socklen_t len = sizeof(addr);
    REQUIRE(getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    port = ntohs(addr.sin_port);
  }
  std::thread server([listen_fd] {
    int conn = accept(listen_fd, nullptr, nullptr);
    if (conn < 0) return;
    std::string buf;
    char c;
    while (recv(conn, &c, 1, 0) == 1 && c != '\n') buf.push_back(c);
    std::string reply = "{\"logprobs\":[-1.0]}\n";
    send(conn, reply.data(), reply.size(), 0);
    close(conn);
  });

  TcpTransport transport("127.0.0.1", port);
  nlohmann::json reply = transport.roundtrip({{"op", "tf_logprobs"}});
  CHECK(reply.at("logprobs")[0] == -1.0);
  server.join();
  close(listen_fd);

  TcpTransport dead("127.0.0.1", 1);  // nothing listens on port 1
  CHECK_THROWS_AS(dead.roundtrip({{"op", "generate"}}), BackendUnavailable);
}
