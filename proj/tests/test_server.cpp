#include <gtest/gtest.h>

#include <chrono>
#include <optional>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "support/synthetic.hpp"
#include "visdial/collect/server.hpp"
#include "visdial/collect/store.hpp"
#include "visdial/dataset_io.hpp"

using namespace visdial;
using namespace visdial::collect;
using namespace visdial::testing;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr auto kDeadline = std::chrono::seconds(5);

class WsClient {
 public:
  explicit WsClient(std::uint16_t port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    beast::get_lowest_layer(ws_).connect(resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/ws");
  }
  ~WsClient() { close(); }

  void send(const json& frame) { ws_.write(net::buffer(frame.dump())); }
  void send_raw(const std::string& text) { ws_.write(net::buffer(text)); }

  json recv() {
    beast::flat_buffer buf;
    std::optional<beast::error_code> result;
    ws_.async_read(buf, [&](beast::error_code ec, std::size_t) { result = ec; });
    run_until(result);
    if (!result) throw std::runtime_error("no frame within the deadline");
    if (*result) throw beast::system_error(*result);
    json f = json::parse(beast::buffers_to_string(buf.data()));
    EXPECT_EQ(f.at("seq").get<std::uint64_t>(), ++seq_) << f.dump();
    return f;
  }

  json recv_type(const std::string& type) {
    json f = recv();
    EXPECT_EQ(f.at("type"), type) << f.dump();
    return f;
  }

  void close() {
    if (!open_) return;
    open_ = false;
    std::optional<beast::error_code> result;
    ws_.async_close(websocket::close_code::normal, [&](beast::error_code ec) { result = ec; });
    run_until(result);
    beast::get_lowest_layer(ws_).close();
  }

 private:
  void run_until(const std::optional<beast::error_code>& done) {
    ioc_.restart();
    const auto until = std::chrono::steady_clock::now() + kDeadline;
    while (!done && std::chrono::steady_clock::now() < until) ioc_.run_one_until(until);
    if (!done) {
      beast::get_lowest_layer(ws_).cancel();
      ioc_.restart();
      ioc_.run_for(std::chrono::milliseconds(100));
    }
  }

  net::io_context ioc_;
  websocket::stream<beast::tcp_stream> ws_;
  std::uint64_t seq_ = 0;
  bool open_ = true;
};

std::pair<int, json> http_call(std::uint16_t port, http::verb verb, const std::string& target,
                               const std::string& body = "") {
  net::io_context ioc;
  tcp::socket sock(ioc);
  tcp::resolver resolver(ioc);
  net::connect(sock, resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.body() = body;
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return {res.result_int(), json::parse(res.body())};
}

const std::string kManifest =
    "{\"image_id\": \"img_a\", \"caption\": \"a man riding a horse\", \"image_url\": \"http://img/a.jpg\"}\n"
    "{\"image_id\": \"img_b\", \"caption\": \"two cats on a sofa\", \"image_url\": \"http://img/b.jpg\"}\n";

ServerConfig config_for(const TempDir& dir) {
  ServerConfig cfg;
  cfg.port = 0;
  cfg.data_dir = dir.path();
  cfg.collect.seed = 3;
  cfg.sweep_interval_ms = 50;
  return cfg;
}

struct Paired {
  json questioner_frame, answerer_frame;
  WsClient* questioner;
  WsClient* answerer;
};

Paired pair_clients(WsClient& a, WsClient& b, const std::string& ida, const std::string& idb) {
  a.send({{"type", "join"}, {"worker_id", ida}});
  b.send({{"type", "join"}, {"worker_id", idb}});
  json fa = a.recv_type("paired");
  json fb = b.recv_type("paired");
  EXPECT_EQ(fa["session_id"], fb["session_id"]);
  if (fa["role"] == "questioner") return {fa, fb, &a, &b};
  return {fb, fa, &b, &a};
}

}  // namespace

TEST(CollectServer, FullSessionOverWebsocket) {
  TempDir dir;
  Server server(config_for(dir));
  server.start();
  const auto port = server.port();
  ASSERT_NE(port, 0);

  auto [st, added] = http_call(port, http::verb::post, "/images", kManifest);
  EXPECT_EQ(st, 200);
  EXPECT_EQ(added["received"], 2);
  EXPECT_EQ(added["added"], 2);
  auto [hs, health] = http_call(port, http::verb::get, "/healthz");
  EXPECT_EQ(hs, 200);
  EXPECT_EQ(health["status"], "ok");
  EXPECT_EQ(health["unserved_images"], 2);

  WsClient a(port), b(port);
  Paired p = pair_clients(a, b, "alice", "bob");
  const std::string sid = p.questioner_frame["session_id"];
  EXPECT_FALSE(p.questioner_frame.contains("image_url"));
  EXPECT_EQ(p.answerer_frame["image_url"], "http://img/a.jpg");
  EXPECT_EQ(p.questioner_frame["caption"], "a man riding a horse");
  EXPECT_EQ(p.answerer_frame["role"], "answerer");

  for (int r = 1; r <= 10; ++r) {
    p.questioner->send({{"type", "message"}, {"text", "question " + std::to_string(r)}});
    json m = p.answerer->recv_type("message");
    EXPECT_EQ(m["from_role"], "questioner");
    EXPECT_EQ(m["round"], r);
    EXPECT_EQ(m["text"], "question " + std::to_string(r));
    if (r == 3) {
      p.questioner->send({{"type", "message"}, {"text", "impatient"}});
      p.questioner->recv_type("turn_rejected");
    }
    p.answerer->send({{"type", "message"}, {"text", "answer " + std::to_string(r)}});
    m = p.questioner->recv_type("message");
    EXPECT_EQ(m["from_role"], "answerer");
    EXPECT_EQ(m["text"], "answer " + std::to_string(r));
  }
  EXPECT_EQ(p.questioner->recv_type("session_complete")["discarded"], false);
  EXPECT_EQ(p.answerer->recv_type("session_complete")["discarded"], false);

  auto [ss, session] = http_call(port, http::verb::get, "/sessions/" + sid);
  EXPECT_EQ(ss, 200);
  EXPECT_EQ(session["state"], "completed");
  EXPECT_FALSE(session["events"].empty());
  auto [ms, missing] = http_call(port, http::verb::get, "/sessions/s999999");
  EXPECT_EQ(ms, 404);
  EXPECT_EQ(missing["error"], "UnknownSession");
  auto [bs, bad] = http_call(port, http::verb::post, "/images", "not json\n");
  EXPECT_EQ(bs, 400);
  EXPECT_EQ(bad["error"], "MalformedInput");

  const auto dialogs = load_dataset_file(dir.path() / "dialogs" / "img_a.json");
  ASSERT_EQ(dialogs.size(), 1u);
  EXPECT_EQ(dialogs[0].rounds[9].question, "question 10");
  EXPECT_EQ(dialogs[0].rounds[9].answer, "answer 10");

  auto [hs2, health2] = http_call(port, http::verb::get, "/healthz");
  EXPECT_EQ(health2["served_images"], 1);
  EXPECT_EQ(health2["unserved_images"], 1);
  a.close();
  b.close();
  server.stop();
  server.wait();
}

TEST(CollectServer, ProtocolErrors) {
  TempDir dir;
  Server server(config_for(dir));
  server.start();
  WsClient c(server.port());
  c.send_raw("{not json");
  EXPECT_EQ(c.recv_type("error")["code"], "MalformedInput");
  c.send({{"type", "dance"}});
  EXPECT_EQ(c.recv_type("error")["code"], "InvalidArgument");
  c.send({{"type", "message"}, {"text", "hi"}});
  EXPECT_EQ(c.recv_type("error")["code"], "SessionNotLive");
  c.send({{"type", "join"}, {"worker_id", "w1"}});
  c.send({{"type", "join"}, {"worker_id", "w1"}});
  EXPECT_EQ(c.recv_type("error")["code"], "AlreadyWaiting");
  WsClient d(server.port());
  d.send({{"type", "join"}, {"worker_id", "w1"}});
  EXPECT_EQ(d.recv_type("error")["code"], "AlreadyActive");
  c.close();
  d.close();
  server.stop();
  server.wait();
}

TEST(CollectServer, DisconnectFallbackAndRecovery) {
  TempDir dir;
  std::string sid;
  {
    Server server(config_for(dir));
    server.start();
    const auto port = server.port();
    http_call(port, http::verb::post, "/images", kManifest);
    WsClient a(port), b(port);
    Paired p = pair_clients(a, b, "q1", "a1");
    sid = p.questioner_frame["session_id"];
    p.questioner->send({{"type", "message"}, {"text", "is it sunny?"}});
    p.answerer->recv_type("message");
    p.answerer->close();
    p.questioner->recv_type("partner_disconnected");
    json prompt = p.questioner->recv_type("solo_prompt");
    EXPECT_EQ(prompt["quota"], 10);
    EXPECT_FALSE(prompt["instructions"].get<std::string>().empty());
    for (int i = 0; i < 3; ++i) p.questioner->send({{"type", "message"}, {"text", "solo " + std::to_string(i)}});
    p.questioner->send({{"type", "heartbeat"}});
    auto [st, s] = http_call(port, http::verb::get, "/sessions/" + sid);
    EXPECT_EQ(s["state"], "solo_fallback");
    server.stop();
    server.wait();
  }
  // The session was live at shutdown; on restart its image goes back to the queue.
  Server server(config_for(dir));
  server.start();
  auto [st, health] = http_call(server.port(), http::verb::get, "/healthz");
  EXPECT_EQ(health["unserved_images"], 2);
  EXPECT_EQ(health["served_images"], 0);
  WsClient a(server.port()), b(server.port());
  Paired p = pair_clients(a, b, "x", "y");
  EXPECT_NE(p.questioner_frame["session_id"], sid);
  a.close();
  b.close();
  server.stop();
  server.wait();
}

TEST(CollectServer, QuestionerFramesNeverCarryImage) {
  SessionEvent e;
  e.session_id = "s000001";
  e.kind = EventKind::role_assigned;
  e.audience = Role::questioner;
  e.recipient = "w1";
  e.payload = {{"session_id", "s000001"}, {"role", "questioner"}, {"caption", "c"}};
  const auto f = event_frame(e, 4);
  EXPECT_EQ(f["seq"], 4);
  EXPECT_EQ(f["type"], "paired");
  EXPECT_FALSE(f.contains("image_url"));
  e.kind = EventKind::image_requeued;
  EXPECT_TRUE(event_frame(e, 5).is_null());
}
