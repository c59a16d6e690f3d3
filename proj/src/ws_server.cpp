#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "handtwin/error.hpp"
#include "handtwin/service.hpp"

namespace handtwin::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedMessages = 64;

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class WebSocketSession : public std::enable_shared_from_this<WebSocketSession> {
 public:
  WebSocketSession(tcp::socket socket, MessageRouter& router)
      : ws_(std::move(socket)), router_(router) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->send(self->router_.hello_message(), false);
      self->read();
    });
  }

  /// Droppable messages (state broadcasts) are skipped when the client lags.
  void send(std::string text, bool droppable) {
    if (!open_) return;
    if (droppable && queue_.size() >= kMaxQueuedMessages) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write_next();
  }

  bool open() const { return open_; }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->send(self->router_.handle(text), false);
      self->read();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  MessageRouter& router_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool open_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, MessageRouter& router, std::string static_dir,
              std::vector<std::weak_ptr<WebSocketSession>>& sessions)
      : stream_(std::move(socket)), router_(router), static_dir_(std::move(static_dir)), sessions_(sessions) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->dispatch();
    });
  }

 private:
  void dispatch() {
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      auto ws = std::make_shared<WebSocketSession>(stream_.release_socket(), router_);
      sessions_.push_back(ws);
      ws->start(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    res->set(http::field::server, "handtwin");
    std::string target(req_.target());
    if (target.empty() || target == "/") target = "/index.html";
    const bool safe = target.find("..") == std::string::npos;
    const std::filesystem::path file = std::filesystem::path(static_dir_) / target.substr(1);
    std::ifstream in(file, std::ios::binary);
    if (req_.method() != http::verb::get || static_dir_.empty() || !safe || !in) {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    } else {
      std::ostringstream ss;
      ss << in.rdbuf();
      res->result(http::status::ok);
      res->set(http::field::content_type, mime_type(file));
      res->body() = ss.str();
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  MessageRouter& router_;
  std::string static_dir_;
  std::vector<std::weak_ptr<WebSocketSession>>& sessions_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct WsServer::Impl {
  Impl(control::HandController& c, MessageRouter& r, ServiceConfig config)
      : controller(c), router(r), cfg(std::move(config)), acceptor(ioc), control_timer(ioc), broadcast_timer(ioc) {}

  void accept() {
    acceptor.async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), router, cfg.static_dir, sessions)->start();
      accept();
    });
  }

  void schedule_control() {
    control_deadline += period(controller.config().period);
    control_timer.expires_at(control_deadline);
    control_timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      controller.step();
      schedule_control();
    });
  }

  void schedule_broadcast() {
    broadcast_deadline += period(1.0 / controller.config().broadcast_rate);
    broadcast_timer.expires_at(broadcast_deadline);
    broadcast_timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      std::erase_if(sessions, [](const auto& w) {
        auto s = w.lock();
        return !s || !s->open();
      });
      if (!sessions.empty()) {
        const std::string state = router.state_message();
        for (auto& w : sessions) {
          if (auto s = w.lock()) s->send(state, true);
        }
      }
      schedule_broadcast();
    });
  }

  static std::chrono::steady_clock::duration period(double seconds) {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
  }

  control::HandController& controller;
  MessageRouter& router;
  ServiceConfig cfg;
  asio::io_context ioc{1};
  tcp::acceptor acceptor;
  asio::steady_timer control_timer;
  asio::steady_timer broadcast_timer;
  std::chrono::steady_clock::time_point control_deadline;
  std::chrono::steady_clock::time_point broadcast_deadline;
  std::vector<std::weak_ptr<WebSocketSession>> sessions;
};

WsServer::WsServer(control::HandController& controller, MessageRouter& router, ServiceConfig cfg)
    : impl_(std::make_unique<Impl>(controller, router, std::move(cfg))) {
  try {
    const tcp::endpoint ep(asio::ip::make_address(impl_->cfg.address), impl_->cfg.port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw IoError("cannot listen on " + impl_->cfg.address + ":" + std::to_string(impl_->cfg.port) + ": " + e.what());
  }
}

WsServer::~WsServer() = default;

unsigned short WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::run() {
  impl_->accept();
  impl_->control_deadline = impl_->broadcast_deadline = std::chrono::steady_clock::now();
  impl_->schedule_control();
  impl_->schedule_broadcast();
  impl_->ioc.run();
  for (auto& w : impl_->sessions) {
    if (auto s = w.lock()) s->close();
  }
}

void WsServer::stop() { impl_->ioc.stop(); }

}  // namespace handtwin::service
