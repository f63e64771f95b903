#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "forge/http_providers.hpp"

using namespace forge;
using namespace forge::http;
using nlohmann::json;

namespace {

class LocalServer {
public:
  LocalServer() {
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~LocalServer() {
    srv_.stop();
    thread_.join();
  }
  httplib::Server &srv() { return srv_; }
  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  Endpoint endpoint(std::string path) const {
    Endpoint e;
    e.base_url = url();
    e.path = std::move(path);
    e.timeout_seconds = 5;
    return e;
  }

private:
  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
};

ChatRequest request() {
  ChatRequest r;
  r.system_prompt = "sys";
  r.user_prompt = "hello";
  return r;
}

} // namespace

TEST(Base64, RoundTrip) {
  for (const std::string &s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)})
    EXPECT_EQ(base64_decode(base64_encode(s)), s);
  EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
}

TEST(HttpChat, SendsOpenAiShapeAndReadsContent) {
  LocalServer server;
  json seen;
  std::string auth;
  server.srv().Post("/v1/chat/completions", [&](const httplib::Request &req, httplib::Response &res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hi there"}}]})", "application/json");
  });
  ::setenv("FORGE_TEST_KEY", "secret", 1);
  auto ep = server.endpoint("/v1/chat/completions");
  ep.model = "m1";
  ep.api_key_env = "FORGE_TEST_KEY";
  OpenAiChat chat(ep);
  EXPECT_EQ(chat.complete(request()), "hi there");
  EXPECT_EQ(seen["model"], "m1");
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][1]["content"], "hello");
  EXPECT_EQ(auth, "Bearer secret");

  ChatRequest multi = request();
  AudioClip clip;
  clip.duration = 1;
  clip.payload = "RIFF";
  multi.messages = {{"assistant", "hi", std::nullopt}, {"user", "", clip}};
  chat.complete(multi);
  EXPECT_EQ(seen["messages"].size(), 3u);
  EXPECT_EQ(seen["messages"][2]["content"][0]["input_audio"]["data"], base64_encode("RIFF"));
}

TEST(HttpChat, StatusCategories) {
  LocalServer server;
  int status = 429;
  server.srv().Post("/c", [&](const httplib::Request &, httplib::Response &res) {
    res.status = status;
    res.set_content(status == 200 ? R"({"choices":[{"message":{"content":"  "}}]})" : "{}", "application/json");
  });
  OpenAiChat chat(server.endpoint("/c"));
  auto kind_of = [&] {
    try {
      chat.complete(request());
    } catch (const Error &e) {
      return e.kind();
    }
    return ErrorKind::precondition;
  };
  EXPECT_EQ(kind_of(), ErrorKind::rate_limit);
  status = 503;
  EXPECT_EQ(kind_of(), ErrorKind::transport);
  status = 401;
  EXPECT_EQ(kind_of(), ErrorKind::config);
  status = 200;
  EXPECT_EQ(kind_of(), ErrorKind::empty_completion);
}

TEST(HttpChat, ConnectionRefusedIsRetryableTransport) {
  Endpoint ep;
  ep.base_url = "http://127.0.0.1:1";
  ep.path = "/x";
  ep.timeout_seconds = 1;
  OpenAiChat chat(ep);
  try {
    chat.complete(request());
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::transport);
    EXPECT_TRUE(e.retryable());
  }
}

TEST(HttpChat, MissingCredentialVariable) {
  Endpoint ep;
  ep.base_url = "http://127.0.0.1:1";
  ep.api_key_env = "FORGE_DEFINITELY_UNSET_KEY";
  try {
    OpenAiChat chat(ep);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("FORGE_DEFINITELY_UNSET_KEY"), std::string::npos);
  }
}

TEST(HttpEmbedder, NormalizesAndChecksDimension) {
  LocalServer server;
  server.srv().Post("/v1/embeddings", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"data":[{"embedding":[3,4]}]})", "application/json");
  });
  auto ep = server.endpoint("/v1/embeddings");
  ep.dim = 2;
  OpenAiEmbedder emb(ep);
  const auto v = emb.embed("text");
  EXPECT_NEAR(v[0], 0.6, 1e-12);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_THROW(emb.embed(" "), Error);
  ep.dim = 3;
  try {
    OpenAiEmbedder(ep).embed("text");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}

TEST(HttpAudio, ServicesRoundTrip) {
  LocalServer server;
  server.srv().Post("/asr", [](const httplib::Request &req, httplib::Response &res) {
    const auto body = json::parse(req.body);
    res.set_content(json{{"text", base64_decode(body["audio"]) + "|" + body["language"].get<std::string>()}}.dump(),
                    "application/json");
  });
  server.srv().Post("/tts", [](const httplib::Request &req, httplib::Response &res) {
    const auto body = json::parse(req.body);
    if (body["text"] == "refuse") {
      res.set_content(R"({"refused":true,"reason":"policy"})", "application/json");
      return;
    }
    res.set_content(json{{"audio", base64_encode("WAV:" + body["text"].get<std::string>())}, {"duration", 2.5}}.dump(),
                    "application/json");
  });
  server.srv().Post("/spk", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"embedding":[1,1]})", "application/json");
  });
  server.srv().Post("/mos", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"score":5.7})", "application/json");
  });
  AudioClip ref;
  ref.duration = 6;
  ref.payload = "REF";
  ref.speaker = "spk1";

  HttpTranscriber asr(server.endpoint("/asr"));
  EXPECT_EQ(asr.transcribe(ref, "MSA"), "REF|MSA");
  HttpSynthesizer tts(server.endpoint("/tts"));
  const auto clip = tts.synthesize("marhaba", ref);
  EXPECT_EQ(clip.payload, "WAV:marhaba");
  EXPECT_DOUBLE_EQ(clip.duration, 2.5);
  EXPECT_EQ(clip.speaker, "spk1");
  try {
    tts.synthesize("refuse", ref);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::refusal);
  }
  HttpSpeakerEmbedder spk(server.endpoint("/spk"));
  EXPECT_NEAR(spk.speaker_embed(ref).norm(), 1.0, 1e-12);
  HttpQuality mos(server.endpoint("/mos"));
  EXPECT_DOUBLE_EQ(mos.predict_quality(ref), 5.0);
  AudioClip empty;
  EXPECT_THROW(mos.predict_quality(empty), Error);
}
