#include "visdial/collect/server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "visdial/collect/store.hpp"
#include "visdial/error.hpp"

namespace visdial::collect {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// (type, fields) of the client frame for an event; nullopt when server-only.
std::optional<std::pair<std::string, nlohmann::json>> frame_fields(const SessionEvent& e) {
  if (e.recipient.empty()) return std::nullopt;
  const auto& p = e.payload;
  nlohmann::json f = {{"session_id", e.session_id}};
  switch (e.kind) {
    case EventKind::role_assigned:
      f["role"] = p.at("role");
      f["caption"] = p.at("caption");
      if (p.contains("image_url")) f["image_url"] = p.at("image_url");
      return std::pair{std::string("paired"), std::move(f)};
    case EventKind::message_delivered:
      f["from_role"] = p.at("from_role");
      f["text"] = p.at("text");
      f["round"] = p.value("round", 0);
      return std::pair{std::string("message"), std::move(f)};
    case EventKind::turn_rejected:
      f["reason"] = p.value("reason", "");
      return std::pair{std::string("turn_rejected"), std::move(f)};
    case EventKind::partner_disconnected:
      return std::pair{std::string("partner_disconnected"), std::move(f)};
    case EventKind::solo_prompt:
      f["instructions"] = p.at("instructions");
      f["quota"] = p.value("quota", 0);
      return std::pair{std::string("solo_prompt"), std::move(f)};
    case EventKind::session_complete:
      f["discarded"] = false;
      return std::pair{std::string("session_complete"), std::move(f)};
    case EventKind::session_discarded:
      f["discarded"] = true;
      return std::pair{std::string("session_complete"), std::move(f)};
    default:
      return std::nullopt;
  }
}

nlohmann::ordered_json compose(std::uint64_t seq, const std::string& type, const nlohmann::json& fields) {
  nlohmann::ordered_json o;
  o["seq"] = seq;
  o["type"] = type;
  for (auto it = fields.begin(); it != fields.end(); ++it) o[it.key()] = it.value();
  return o;
}

}  // namespace

nlohmann::ordered_json event_frame(const SessionEvent& e, std::uint64_t seq) {
  auto f = frame_fields(e);
  if (!f) return nullptr;
  return compose(seq, f->first, f->second);
}

class WsConn;
class HttpConn;

struct ServerState {
  explicit ServerState(ServerConfig c)
      : config(std::move(c)), store(config.data_dir), coordinator(config.collect, store.hooks()), acceptor(ioc),
        sweep(ioc), signals(ioc) {}

  ServerConfig config;
  SessionStore store;
  std::mutex mu;  // coordinator, connections, worker bindings
  Coordinator coordinator;
  std::map<std::string, std::weak_ptr<WsConn>> connections;

  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer sweep;
  net::signal_set signals;
  std::vector<std::thread> threads;
  std::atomic<bool> started{false};
  std::atomic<bool> stopping{false};
  std::uint16_t bound_port = 0;

  std::mutex conn_mu;  // open sockets, closed on shutdown
  std::vector<std::weak_ptr<WsConn>> ws_conns;
  std::vector<std::weak_ptr<HttpConn>> http_conns;

  void do_accept();
  void arm_sweep();
  void route(const std::vector<SessionEvent>& events);
  void on_frame(const std::shared_ptr<WsConn>& conn, const std::string& text);
  void on_close(const std::shared_ptr<WsConn>& conn);
  void track(const std::shared_ptr<WsConn>& conn);
  void track(const std::shared_ptr<HttpConn>& conn);
  /// Stops accepting and closes every open socket; io threads then run out of work.
  void shutdown();
  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
};

class WsConn : public std::enable_shared_from_this<WsConn> {
 public:
  WsConn(tcp::socket&& socket, ServerState& server) : ws_(std::move(socket)), server_(server) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(server_.config.max_frame_bytes);
    ws_.async_accept(req, beast::bind_front_handler(&WsConn::on_accept, shared_from_this()));
  }

  /// Thread-safe; frames keep the order of calls.
  void send(std::string type, nlohmann::json fields) {
    net::post(ws_.get_executor(), [self = shared_from_this(), type = std::move(type), fields = std::move(fields)] {
      if (self->closed_) return;
      self->outbox_.push_back(compose(++self->frame_seq_, type, fields).dump());
      if (self->outbox_.size() == 1) self->write_next();
    });
  }

  void send_error(std::string code, std::string message) {
    send("error", {{"code", std::move(code)}, {"message", std::move(message)}});
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_) return;
      self->closed_ = true;
      self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
    });
  }

  void abort() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->closed_ = true;
      beast::get_lowest_layer(self->ws_).close();
    });
  }

  std::string worker_id;  // guarded by the server mutex

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConn::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      server_.on_close(shared_from_this());
      return;
    }
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    server_.on_frame(shared_from_this(), text);
    read_next();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()), beast::bind_front_handler(&WsConn::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      outbox_.clear();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServerState& server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::uint64_t frame_seq_ = 0;
  bool closed_ = false;
};

class HttpConn : public std::enable_shared_from_this<HttpConn> {
 public:
  HttpConn(tcp::socket&& socket, ServerState& server) : stream_(std::move(socket)), server_(server) {}

  void run() { read_next(); }

  void abort() {
    net::post(stream_.get_executor(), [self = shared_from_this()] { self->stream_.close(); });
  }

 private:
  void read_next() {
    parser_.emplace();
    parser_->body_limit(16 * 1024 * 1024);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpConn::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      if (req.target() == "/ws") {
        stream_.expires_never();
        auto ws = std::make_shared<WsConn>(stream_.release_socket(), server_);
        server_.track(ws);
        ws->accept(std::move(req));
        return;
      }
    }
    response_ = server_.handle_http(req);
    response_.keep_alive(req.keep_alive());
    response_.prepare_payload();
    http::async_write(stream_, response_, beast::bind_front_handler(&HttpConn::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!response_.keep_alive()) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    read_next();
  }

  beast::tcp_stream stream_;
  ServerState& server_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
  http::response<http::string_body> response_;
};

void ServerState::do_accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (stopping) return;
    if (!ec) {
      auto conn = std::make_shared<HttpConn>(std::move(socket), *this);
      track(conn);
      conn->run();
    }
    do_accept();
  });
}

void ServerState::arm_sweep() {
  sweep.expires_after(std::chrono::milliseconds(config.sweep_interval_ms));
  sweep.async_wait([this](beast::error_code ec) {
    if (ec || stopping) return;
    {
      std::lock_guard lock(mu);
      try {
        route(coordinator.expire(now_ms()));
      } catch (const std::exception& e) {
        std::cerr << "sweep: " << e.what() << '\n';
      }
    }
    arm_sweep();
  });
}

void ServerState::route(const std::vector<SessionEvent>& events) {
  for (const auto& e : events) {
    auto f = frame_fields(e);
    if (!f) continue;
    auto it = connections.find(e.recipient);
    if (it == connections.end()) continue;
    if (auto conn = it->second.lock()) conn->send(f->first, f->second);
  }
}

void ServerState::on_frame(const std::shared_ptr<WsConn>& conn, const std::string& text) {
  nlohmann::json frame = nlohmann::json::parse(text, nullptr, false);
  if (!frame.is_object() || !frame.contains("type") || !frame["type"].is_string()) {
    conn->send_error(std::string(errc_name(Errc::MalformedInput)), "frames are JSON objects with a string 'type'");
    return;
  }
  const std::string type = frame["type"].get<std::string>();
  const std::int64_t now = now_ms();
  std::lock_guard lock(mu);
  try {
    if (type == "join") {
      auto id = frame.find("worker_id");
      if (id == frame.end() || !id->is_string() || id->get<std::string>().empty())
        throw Error(Errc::InvalidArgument, "join needs a non-empty worker_id");
      const std::string worker = id->get<std::string>();
      if (!conn->worker_id.empty() && conn->worker_id != worker)
        throw Error(Errc::AlreadyActive, "connection is bound to worker '" + conn->worker_id + "'");
      if (auto it = connections.find(worker); it != connections.end()) {
        auto other = it->second.lock();
        if (other && other != conn) throw Error(Errc::AlreadyActive, "worker '" + worker + "' is connected elsewhere");
      }
      auto events = coordinator.enqueue_worker(worker, now);
      conn->worker_id = worker;
      connections[worker] = conn;
      route(events);
    } else if (type == "message") {
      auto t = frame.find("text");
      if (t == frame.end() || !t->is_string()) throw Error(Errc::InvalidArgument, "message needs a string 'text'");
      auto a = conn->worker_id.empty() ? std::nullopt : coordinator.assignment(conn->worker_id);
      if (!a) throw Error(Errc::SessionNotLive, "not in a session");
      auto events = coordinator.handle_message(a->first, a->second, t->get<std::string>(), now);
      const ChatSession* s = coordinator.session(a->first);
      if (s && s->state == SessionState::completable) coordinator.complete_session(a->first, now, &events);
      route(events);
    } else if (type == "heartbeat") {
      if (!conn->worker_id.empty()) coordinator.heartbeat(conn->worker_id, now);
    } else if (type == "leave") {
      if (!conn->worker_id.empty()) {
        auto events = coordinator.leave(conn->worker_id, now);
        connections.erase(conn->worker_id);
        conn->worker_id.clear();
        route(events);
      }
    } else {
      throw Error(Errc::InvalidArgument, "unknown frame type '" + type + "'");
    }
  } catch (const Error& e) {
    conn->send_error(std::string(errc_name(e.code())), e.what());
  } catch (const std::exception& e) {
    conn->send_error(std::string(errc_name(Errc::Io)), e.what());
  }
}

void ServerState::track(const std::shared_ptr<WsConn>& conn) {
  std::lock_guard lock(conn_mu);
  std::erase_if(ws_conns, [](const auto& w) { return w.expired(); });
  ws_conns.push_back(conn);
}

void ServerState::track(const std::shared_ptr<HttpConn>& conn) {
  std::lock_guard lock(conn_mu);
  std::erase_if(http_conns, [](const auto& w) { return w.expired(); });
  http_conns.push_back(conn);
}

void ServerState::shutdown() {
  if (stopping.exchange(true)) return;
  net::post(ioc, [this] {
    beast::error_code ignored;
    acceptor.close(ignored);
    sweep.cancel();
    signals.cancel();
  });
  std::lock_guard lock(conn_mu);
  for (auto& w : ws_conns)
    if (auto c = w.lock()) c->abort();
  for (auto& w : http_conns)
    if (auto c = w.lock()) c->abort();
}

void ServerState::on_close(const std::shared_ptr<WsConn>& conn) {
  std::lock_guard lock(mu);
  // Sessions cut by shutdown stay open in the log; recovery requeues them.
  if (conn->worker_id.empty() || stopping) return;
  auto it = connections.find(conn->worker_id);
  if (it != connections.end() && it->second.lock() == conn) connections.erase(it);
  try {
    route(coordinator.leave(conn->worker_id, now_ms()));
  } catch (const std::exception& e) {
    std::cerr << "disconnect: " << e.what() << '\n';
  }
  conn->worker_id.clear();
}

http::response<http::string_body> ServerState::handle_http(const http::request<http::string_body>& req) {
  auto reply = [&](http::status status, const nlohmann::json& body) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, "application/json");
    res.body() = body.dump() + "\n";
    return res;
  };
  const std::string target(req.target());
  const std::string path = target.substr(0, target.find('?'));

  if (path == "/healthz") {
    if (req.method() != http::verb::get) return reply(http::status::method_not_allowed, {{"error", "GET only"}});
    std::lock_guard lock(mu);
    return reply(http::status::ok, {{"status", "ok"},
                                    {"waiting_workers", coordinator.pool().waiting.size()},
                                    {"active_workers", coordinator.pool().active.size()},
                                    {"sessions", coordinator.sessions().size()},
                                    {"unserved_images", coordinator.unserved_images()},
                                    {"leased_images", coordinator.leased_images()},
                                    {"served_images", coordinator.served_images().size()}});
  }
  if (path.starts_with("/sessions/")) {
    if (req.method() != http::verb::get) return reply(http::status::method_not_allowed, {{"error", "GET only"}});
    const std::string id = path.substr(std::string_view("/sessions/").size());
    std::lock_guard lock(mu);
    const ChatSession* s = coordinator.session(id);
    if (!s) return reply(http::status::not_found, {{"error", errc_name(Errc::UnknownSession)}, {"session_id", id}});
    nlohmann::json body = session_to_json(*s);
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : coordinator.history(id)) events.push_back(event_to_json(e));
    body["events"] = std::move(events);
    return reply(http::status::ok, body);
  }
  if (path == "/images") {
    if (req.method() != http::verb::post) return reply(http::status::method_not_allowed, {{"error", "POST only"}});
    std::vector<ImageTask> images;
    try {
      images = parse_image_manifest(req.body());
    } catch (const Error& e) {
      return reply(http::status::bad_request, {{"error", errc_name(e.code())}, {"message", e.what()}});
    }
    std::lock_guard lock(mu);
    try {
      store.append_images(images);
      std::vector<SessionEvent> events;
      const std::size_t added = coordinator.add_images(images, now_ms(), &events);
      route(events);
      return reply(http::status::ok, {{"received", images.size()}, {"added", added}});
    } catch (const Error& e) {
      return reply(http::status::internal_server_error, {{"error", errc_name(e.code())}, {"message", e.what()}});
    }
  }
  return reply(http::status::not_found, {{"error", "not found"}, {"path", path}});
}

Server::Server(ServerConfig config) : impl_(std::make_unique<ServerState>(std::move(config))) {}

Server::~Server() { stop(); }

void Server::start() {
  ServerState& s = *impl_;
  if (s.started.exchange(true)) throw Error(Errc::InvalidArgument, "server already started");
  {
    std::lock_guard lock(s.mu);
    RecoveredState rec = s.store.recover();
    for (const auto& id : rec.served) s.coordinator.mark_served(id);
    s.coordinator.set_session_counter(rec.last_session_number);
    s.coordinator.add_images(rec.unserved, now_ms());
  }
  tcp::endpoint endpoint(net::ip::make_address(s.config.address), s.config.port);
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen(net::socket_base::max_listen_connections);
  s.bound_port = s.acceptor.local_endpoint().port();
  if (s.config.handle_signals) {
    s.signals.add(SIGINT);
    s.signals.add(SIGTERM);
    s.signals.async_wait([&s](beast::error_code ec, int) {
      if (!ec) s.shutdown();
    });
  }
  s.do_accept();
  s.arm_sweep();
  const int n = std::max(1, s.config.threads);
  for (int i = 0; i < n; ++i) s.threads.emplace_back([&s] { s.ioc.run(); });
}

void Server::wait() {
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
}

void Server::stop() {
  if (!impl_ || !impl_->started) return;
  impl_->shutdown();
  // Open sockets are closed above; give the io threads a moment to drain.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  while (!impl_->ioc.stopped() && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  impl_->ioc.stop();
  wait();
}

std::uint16_t Server::port() const { return impl_->bound_port; }

}  // namespace visdial::collect
