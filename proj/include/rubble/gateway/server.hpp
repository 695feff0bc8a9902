// TCP gateway: fans probe messages out to NDJSON and WebSocket (/stream)
// clients, forwards client drive commands to the probe, and appends every
// published message to the session log.
#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/time.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "rubble/gateway/message.hpp"
#include "rubble/gateway/serial.hpp"
#include "rubble/gateway/websocket.hpp"
#include "rubble/sim/probe.hpp"

namespace rubble::gateway {

class GatewayError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline bool send_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    const auto n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

inline std::string header_value(std::string_view request, std::string_view name) {
  std::size_t pos = 0;
  while (pos < request.size()) {
    const auto end = request.find("\r\n", pos);
    const auto stop = end == std::string_view::npos ? request.size() : end;
    const auto line = request.substr(pos, stop - pos);
    const auto colon = line.find(':');
    if (colon != std::string_view::npos && colon == name.size() && telemetry::detail::istarts_with(line, name)) {
      return std::string(telemetry::detail::trim(line.substr(colon + 1)));
    }
    if (end == std::string_view::npos) break;
    pos = end + 2;
  }
  return {};
}

}  // namespace detail

/// One connected client. Lines are queued unframed; the writer frames them for the client's protocol.
class Client {
 public:
  enum class Mode { pending, ndjson, websocket };

  Client(int fd, std::uint64_t id) : fd_(fd), id_(id) {}
  ~Client() {
    if (fd_ >= 0) ::close(fd_);
  }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  std::uint64_t id() const { return id_; }
  int fd() const { return fd_; }
  bool alive() const { return !dead_.load(); }
  Mode mode() const {
    std::lock_guard lock(mu_);
    return mode_;
  }

  void push_line(std::string line) { push({std::move(line), false}); }
  void push_raw(std::string bytes) { push({std::move(bytes), true}); }

  void set_mode(Mode m) {
    {
      std::lock_guard lock(mu_);
      mode_ = m;
    }
    cv_.notify_all();
  }
  /// Writer finishes the queue, then exits.
  void close_after_flush() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
    }
    cv_.notify_all();
  }
  void mark_dead() {
    dead_ = true;
    cv_.notify_all();
  }

  void writer_loop() {
    while (true) {
      Item item;
      Mode mode{};
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return dead_ || (mode_ != Mode::pending && (!queue_.empty() || closing_)); });
        if (dead_) return;
        if (queue_.empty()) return;  // closing and flushed
        item = std::move(queue_.front());
        queue_.pop_front();
        mode = mode_;
      }
      bool ok = true;
      if (item.raw) {
        ok = detail::send_all(fd_, item.data);
      } else if (mode == Mode::websocket) {
        ok = detail::send_all(fd_, ws::frame(item.data));
      } else {
        item.data.push_back('\n');
        ok = detail::send_all(fd_, item.data);
      }
      if (!ok) {
        mark_dead();
        return;
      }
    }
  }

  std::thread reader;
  std::thread writer;

 private:
  struct Item {
    std::string data;
    bool raw = false;
  };
  void push(Item item) {
    {
      std::lock_guard lock(mu_);
      if (closing_ || dead_) return;
      queue_.push_back(std::move(item));
    }
    cv_.notify_all();
  }

  int fd_;
  std::uint64_t id_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  Mode mode_ = Mode::pending;
  bool closing_ = false;
  std::atomic<bool> dead_{false};
};

/// Single serializer: assigns sequence numbers, appends to the log, fans out.
class Hub {
 public:
  explicit Hub(std::ostream* log = nullptr) : log_(log) {}

  Message publish(std::int64_t ts, Body body, const Client* only = nullptr) {
    std::lock_guard lock(mu_);
    last_ts_ = std::max(last_ts_, ts);
    auto msg = make_message(++seq_, last_ts_, std::move(body));
    const auto line = encode(msg);
    if (log_) {
      *log_ << line << '\n';
      log_->flush();
    }
    ++logged_;
    std::erase_if(clients_, [](const auto& c) { return !c->alive(); });
    for (const auto& c : clients_) {
      if (!only || c.get() == only) c->push_line(line);
    }
    return msg;
  }

  void add(std::shared_ptr<Client> c) {
    std::lock_guard lock(mu_);
    clients_.push_back(std::move(c));
  }
  void remove(const Client* c) {
    std::lock_guard lock(mu_);
    std::erase_if(clients_, [&](const auto& p) { return p.get() == c; });
  }
  std::size_t client_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(clients_.begin(), clients_.end(), [](const auto& c) { return c->alive(); }));
  }
  std::uint64_t last_seq() const {
    std::lock_guard lock(mu_);
    return seq_;
  }
  std::int64_t last_timestamp() const {
    std::lock_guard lock(mu_);
    return last_ts_;
  }
  std::uint64_t logged() const {
    std::lock_guard lock(mu_);
    return logged_;
  }

 private:
  mutable std::mutex mu_;
  std::ostream* log_;
  std::uint64_t seq_ = 0;
  std::uint64_t logged_ = 0;
  std::int64_t last_ts_ = 0;
  std::vector<std::shared_ptr<Client>> clients_;
};

/// Publishes one simulator tick.
inline void publish_tick(Hub& hub, const sim::TickOutput& t) {
  for (auto& body : tick_bodies(t)) hub.publish(t.timestamp_ms, std::move(body));
}

/// Runs the simulator offline and writes the session log; the same path serve() uses per tick.
inline void record_session(sim::Simulator& sim, const std::vector<sim::TimedCommand>& commands, std::uint64_t ticks,
                           std::ostream& log) {
  Hub hub(&log);
  sim::run_with_commands(sim, commands, ticks, [&](const sim::TickOutput& t) { publish_tick(hub, t); });
}

/// Drive commands recorded in a session log, with the timestamps they took effect at.
inline std::vector<sim::TimedCommand> drive_commands_from_log(std::istream& in) {
  std::vector<sim::TimedCommand> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto m = decode(line);
    if (const auto* d = std::get_if<Drive>(&m.body)) out.push_back({m.timestamp_ms, d->command});
  }
  return out;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 = ephemeral
  std::chrono::milliseconds tick_interval{2000};
  std::optional<std::uint64_t> max_ticks;
  std::size_t wait_for_clients = 0;  // hold the first tick until this many clients are connected
  std::chrono::milliseconds protocol_sniff{250};
};

class Gateway {
 public:
  /// Binds immediately; throws GatewayError when the port is unavailable.
  Gateway(ServeOptions opts, std::ostream* session_log) : opts_(std::move(opts)), hub_(session_log) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw GatewayError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opts_.port);
    if (::inet_pton(AF_INET, opts_.host.c_str(), &addr.sin_addr) != 1) {
      ::close(listen_fd_);
      throw GatewayError("invalid bind address '" + opts_.host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      const int err = errno;
      ::close(listen_fd_);
      if (err == EADDRINUSE) throw GatewayError("port " + std::to_string(opts_.port) + " is already in use");
      throw GatewayError("bind " + opts_.host + ":" + std::to_string(opts_.port) + ": " + std::strerror(err));
    }
    if (::listen(listen_fd_, 16) < 0) {
      const int err = errno;
      ::close(listen_fd_);
      throw GatewayError(std::string("listen: ") + std::strerror(err));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~Gateway() { shutdown(); }
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::uint16_t port() const { return port_; }
  Hub& hub() { return hub_; }
  std::size_t client_count() const { return hub_.client_count(); }

  /// Thread-safe; makes run_* return at the next opportunity.
  void stop() {
    {
      std::lock_guard lock(stop_mu_);
      stopping_ = true;
    }
    stop_cv_.notify_all();
  }

  /// Ticks the simulator every tick_interval until max_ticks or stop(), then shuts down.
  void run_simulation(sim::Simulator& sim) {
    {
      std::lock_guard lock(route_mu_);
      on_drive_ = [&sim](const sim::DriveCommand& c) { sim.submit(c); };
    }
    wait_for_clients();
    for (std::uint64_t n = 0; !opts_.max_ticks || n < *opts_.max_ticks; ++n) {
      if (n > 0 && sleep_or_stop(opts_.tick_interval)) break;
      if (stop_requested()) break;
      publish_tick(hub_, sim.tick());
    }
    shutdown();
  }

  /// Reads serial-monitor text until EOF, publishing frames and predictions; EOF broadcasts an error.
  void run_serial(std::istream& in) {
    {
      std::lock_guard lock(route_mu_);
      on_drive_ = [this](const sim::DriveCommand& c) { hub_.publish(hub_.last_timestamp(), Drive{c}); };
    }
    wait_for_clients();
    SerialBlockReader reader;
    std::string line;
    const auto handle = [&](const SerialEvent& ev) {
      if (const auto* f = std::get_if<telemetry::SensorFrame>(&ev)) {
        const auto ts = std::max(f->timestamp_ms, hub_.last_timestamp());
        hub_.publish(ts, Telemetry{*f});
        hub_.publish(ts, Survivability{telemetry::survivability(*f)});
      } else if (const auto* b = std::get_if<telemetry::PredictionBlock>(&ev)) {
        hub_.publish(std::max(b->timestamp_ms, hub_.last_timestamp()), PredictionMsg{*b});
      } else {
        hub_.publish(hub_.last_timestamp(), ErrorMsg{"serial_parse", std::get<SerialError>(ev).text});
      }
    };
    while (!stop_requested() && std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (auto ev = reader.feed(line)) handle(*ev);
    }
    if (!stop_requested()) {
      if (auto ev = reader.finish()) handle(*ev);
      hub_.publish(hub_.last_timestamp(), ErrorMsg{"source_disconnected", "serial input reached end of file"});
    }
    shutdown();
  }

  /// Stops accepting, flushes every client queue, closes connections. Idempotent.
  void shutdown() {
    stop();
    std::call_once(shutdown_once_, [this] {
      accepting_ = false;
      if (acceptor_.joinable()) acceptor_.join();
      ::close(listen_fd_);
      std::vector<std::shared_ptr<Client>> clients;
      {
        std::lock_guard lock(clients_mu_);
        clients.swap(all_clients_);
      }
      for (auto& c : clients) {
        if (c->mode() == Client::Mode::pending) c->set_mode(Client::Mode::ndjson);
        c->close_after_flush();
        if (c->writer.joinable()) c->writer.join();
        ::shutdown(c->fd(), SHUT_RDWR);
        if (c->reader.joinable()) c->reader.join();
        hub_.remove(c.get());
      }
    });
  }

 private:
  bool stop_requested() {
    std::lock_guard lock(stop_mu_);
    return stopping_;
  }
  /// true when stopped during the wait
  bool sleep_or_stop(std::chrono::milliseconds d) {
    std::unique_lock lock(stop_mu_);
    return stop_cv_.wait_for(lock, d, [&] { return stopping_; });
  }
  void wait_for_clients() {
    std::unique_lock lock(stop_mu_);
    stop_cv_.wait(lock, [&] { return stopping_ || hub_.client_count() >= opts_.wait_for_clients; });
  }

  void accept_loop() {
    std::uint64_t next_id = 1;
    while (accepting_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      const timeval send_timeout{5, 0};
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &send_timeout, sizeof send_timeout);
      auto c = std::make_shared<Client>(fd, next_id++);
      hub_.add(c);
      {
        std::lock_guard lock(clients_mu_);
        all_clients_.push_back(c);
      }
      c->writer = std::thread([c] { c->writer_loop(); });
      c->reader = std::thread([this, c] { reader_loop(*c); });
      stop_cv_.notify_all();
    }
  }

  void route_drive(const sim::DriveCommand& cmd) {
    std::lock_guard lock(route_mu_);
    if (on_drive_) on_drive_(cmd);
  }

  void handle_client_line(Client& c, std::string_view line) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    try {
      const auto msg = decode(line);
      if (const auto* d = std::get_if<Drive>(&msg.body)) {
        route_drive(d->command);
      } else {
        hub_.publish(hub_.last_timestamp(), ErrorMsg{"unsupported", "clients may only send drive messages"}, &c);
      }
    } catch (const ProtocolError& e) {
      hub_.publish(hub_.last_timestamp(), ErrorMsg{std::string(to_string(e.code())), e.what()}, &c);
    }
  }

  void reader_loop(Client& c) {
    std::string buf;
    char chunk[4096];
    const auto read_some = [&]() -> bool {
      const auto n = ::recv(c.fd(), chunk, sizeof chunk, 0);
      if (n <= 0) return false;
      buf.append(chunk, static_cast<std::size_t>(n));
      return true;
    };

    // Sniff: an HTTP upgrade request arrives immediately; NDJSON clients may stay silent.
    pollfd p{c.fd(), POLLIN, 0};
    const bool has_data = ::poll(&p, 1, static_cast<int>(opts_.protocol_sniff.count())) > 0;
    if (has_data && !read_some()) return finish_client(c);
    if (buf.starts_with("GET ")) {
      while (buf.find("\r\n\r\n") == std::string::npos) {
        if (buf.size() > 16384 || !read_some()) return finish_client(c);
      }
      const auto head_end = buf.find("\r\n\r\n") + 4;
      const std::string request = buf.substr(0, head_end);
      buf.erase(0, head_end);
      const auto line_end = request.find("\r\n");
      const std::string_view request_line(request.data(), line_end);
      const auto key = detail::header_value(request, "Sec-WebSocket-Key");
      if (!request_line.starts_with("GET /stream ") || key.empty()) {
        detail::send_all(c.fd(), "HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
        return finish_client(c);
      }
      const std::string response = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                                   "Sec-WebSocket-Accept: " + ws::accept_key(key) + "\r\n\r\n";
      if (!detail::send_all(c.fd(), response)) return finish_client(c);
      c.set_mode(Client::Mode::websocket);
      websocket_loop(c, buf, read_some);
      return finish_client(c);
    }

    c.set_mode(Client::Mode::ndjson);
    bool discarding = false;
    while (true) {
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        if (!discarding) handle_client_line(c, std::string_view(buf).substr(0, nl));
        discarding = false;
        buf.erase(0, nl + 1);
      }
      if (buf.size() > kMaxLineBytes) {
        if (!discarding) {
          hub_.publish(hub_.last_timestamp(), ErrorMsg{"oversize_line", "line exceeds 64 KiB"}, &c);
        }
        discarding = true;
        buf.clear();
      }
      if (!read_some()) break;
    }
    finish_client(c);
  }

  template <typename ReadSome>
  void websocket_loop(Client& c, std::string& buf, ReadSome&& read_some) {
    std::string message;
    while (true) {
      try {
        while (auto f = ws::parse_frame(buf, kMaxLineBytes)) {
          switch (f->opcode) {
            case ws::close:
              c.push_raw(ws::frame(f->payload.substr(0, std::min<std::size_t>(2, f->payload.size())), ws::close));
              return;
            case ws::ping:
              c.push_raw(ws::frame(f->payload, ws::pong));
              break;
            case ws::pong:
              break;
            default:
              message += f->payload;
              if (message.size() > kMaxLineBytes) {
                hub_.publish(hub_.last_timestamp(), ErrorMsg{"oversize_line", "message exceeds 64 KiB"}, &c);
                message.clear();
              } else if (f->fin) {
                std::size_t start = 0;
                while (start <= message.size()) {
                  const auto nl = message.find('\n', start);
                  handle_client_line(c, std::string_view(message).substr(start, nl == std::string::npos ? std::string::npos : nl - start));
                  if (nl == std::string::npos) break;
                  start = nl + 1;
                }
                message.clear();
              }
          }
        }
      } catch (const ws::FrameError&) {
        hub_.publish(hub_.last_timestamp(), ErrorMsg{"oversize_line", "frame exceeds 64 KiB"}, &c);
        return;
      }
      if (!read_some()) return;
    }
  }

  void finish_client(Client& c) {
    if (c.mode() == Client::Mode::pending) c.set_mode(Client::Mode::ndjson);
    c.close_after_flush();
    hub_.remove(&c);
    stop_cv_.notify_all();
  }

  ServeOptions opts_;
  Hub hub_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> accepting_{true};
  std::thread acceptor_;
  std::mutex clients_mu_;
  std::vector<std::shared_ptr<Client>> all_clients_;
  std::mutex route_mu_;
  std::function<void(const sim::DriveCommand&)> on_drive_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
  std::once_flag shutdown_once_;
};

}  // namespace rubble::gateway
