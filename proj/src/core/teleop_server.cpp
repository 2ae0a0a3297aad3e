#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <condition_variable>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "vfcbf/teleop_service.hpp"

namespace vfcbf {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Client;

struct Registry {
  std::mutex mu;
  std::set<std::shared_ptr<Client>> clients;
};

class Client : public std::enable_shared_from_this<Client> {
 public:
  Client(tcp::socket socket, Session& session, std::shared_ptr<Registry> registry)
      : ws_(std::move(socket)), session_(session), registry_(std::move(registry)) {}

  void run() {
    ws_.read_message_max(kMaxClientMessageBytes);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      {
        std::lock_guard lock(self->registry_->mu);
        self->registry_->clients.insert(self);
      }
      self->read();
    });
  }

  // Called from any thread.
  void send(std::shared_ptr<const std::string> text) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)] {
      if (self->closed_) return;
      if (self->writing_) {
        self->pending_ = text;  // an unsent older frame is dropped
        return;
      }
      self->write(text);
    });
  }

  void close(websocket::close_code code) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), code] { self->close_now(code); });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        if (ec == websocket::error::message_too_big) {
          self->close_now(websocket::close_code::too_big);
        } else {
          self->drop();
        }
        return;
      }
      self->on_message();
    });
  }

  void on_message() {
    if (!ws_.got_text()) {
      close_now(websocket::close_code::unknown_data);
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      session_.handle(parse_client_message(text));
    } catch (const ProtocolViolation&) {
      close_now(websocket::close_code::policy_error);
      return;
    } catch (const MessageError& e) {
      send(std::make_shared<const std::string>(error_message_json(e.what())));
    }
    read();
  }

  void write(std::shared_ptr<const std::string> text) {
    writing_ = true;
    current_ = std::move(text);
    ws_.text(true);
    ws_.async_write(asio::buffer(*current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      self->current_.reset();
      if (ec) {
        self->drop();
        return;
      }
      if (self->pending_ && !self->closed_) {
        auto next = std::move(self->pending_);
        self->pending_.reset();
        self->write(std::move(next));
      } else if (self->close_after_write_) {
        self->close_now(*self->close_after_write_);
      }
    });
  }

  void close_now(websocket::close_code code) {
    if (closed_) return;
    if (writing_) {
      pending_.reset();
      close_after_write_ = code;
      return;
    }
    closed_ = true;
    unregister();
    ws_.async_close(code, [self = shared_from_this()](beast::error_code) {});
  }

  void drop() {
    closed_ = true;
    unregister();
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

  void unregister() {
    std::lock_guard lock(registry_->mu);
    registry_->clients.erase(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  Session& session_;
  std::shared_ptr<Registry> registry_;
  beast::flat_buffer buffer_;
  bool writing_ = false;
  bool closed_ = false;
  std::optional<websocket::close_code> close_after_write_;
  std::shared_ptr<const std::string> current_;
  std::shared_ptr<const std::string> pending_;
};

}  // namespace

struct TeleopServer::Impl {
  Impl(Session& s, std::uint16_t p, std::string a) : session(s), requested_port(p), address(std::move(a)) {}

  void accept() {
    acceptor->async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Client>(std::move(socket), session, registry)->run();
      accept();
    });
  }

  Session& session;
  std::uint16_t requested_port;
  std::string address;
  asio::io_context ioc{1};
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::shared_ptr<Registry> registry = std::make_shared<Registry>();
  std::thread io_thread;
  int listener = -1;
  std::uint16_t bound_port = 0;

  std::mutex mu;
  std::condition_variable cv;
  bool started = false;
  bool stopped = false;
  bool done = false;
};

TeleopServer::TeleopServer(Session& session, std::uint16_t port, const std::string& address)
    : impl_(std::make_unique<Impl>(session, port, address)) {}

TeleopServer::~TeleopServer() { stop(); }

void TeleopServer::start() {
  auto& m = *impl_;
  if (m.started) throw std::logic_error("teleop server already started");
  try {
    const tcp::endpoint ep(asio::ip::make_address(m.address), m.requested_port);
    m.acceptor = std::make_unique<tcp::acceptor>(m.ioc);
    m.acceptor->open(ep.protocol());
    m.acceptor->set_option(asio::socket_base::reuse_address(true));
    m.acceptor->bind(ep);
    m.acceptor->listen();
    m.bound_port = m.acceptor->local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw std::runtime_error("teleop server: cannot listen on " + m.address + ":" +
                             std::to_string(m.requested_port) + ": " + e.code().message());
  }
  m.started = true;
  m.work.emplace(m.ioc.get_executor());
  m.accept();
  m.listener = m.session.subscribe([reg = m.registry](const std::string& text) {
    auto shared = std::make_shared<const std::string>(text);
    std::lock_guard lock(reg->mu);
    for (const auto& c : reg->clients) c->send(shared);
  });
  m.io_thread = std::thread([&m] { m.ioc.run(); });
}

void TeleopServer::stop() {
  auto& m = *impl_;
  {
    std::lock_guard lock(m.mu);
    if (!m.started || m.stopped) return;
    m.stopped = true;
  }
  m.session.unsubscribe(m.listener);
  asio::post(m.ioc, [&m] {
    beast::error_code ignored;
    m.acceptor->close(ignored);
    std::set<std::shared_ptr<Client>> clients;
    {
      std::lock_guard lock(m.registry->mu);
      clients = m.registry->clients;
    }
    for (const auto& c : clients) c->close(websocket::close_code::going_away);
  });
  m.work.reset();
  // Give clients a moment to receive the close frame, then stop hard.
  std::thread killer([&m] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    m.ioc.stop();
  });
  if (m.io_thread.joinable()) m.io_thread.join();
  killer.join();
  {
    std::lock_guard lock(m.registry->mu);
    m.registry->clients.clear();
  }
  {
    std::lock_guard lock(m.mu);
    m.done = true;
  }
  m.cv.notify_all();
}

void TeleopServer::wait() {
  auto& m = *impl_;
  std::unique_lock lock(m.mu);
  m.cv.wait(lock, [&m] { return m.done; });
}

std::uint16_t TeleopServer::port() const { return impl_->bound_port; }

std::size_t TeleopServer::client_count() const {
  std::lock_guard lock(impl_->registry->mu);
  return impl_->registry->clients.size();
}

}  // namespace vfcbf
