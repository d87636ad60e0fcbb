#include "lunasim/ground/gateway_server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>

namespace lunasim::ground {

namespace asio = boost::asio;
using asio::ip::tcp;

struct GatewayServer::Impl : std::enable_shared_from_this<GatewayServer::Impl> {
  struct Session : std::enable_shared_from_this<Session> {
    Session(Impl& owner, tcp::socket sock, std::uint64_t id) : owner(owner), socket(std::move(sock)), id(id) {}

    Impl& owner;
    tcp::socket socket;
    std::uint64_t id;
    std::array<char, 8192> rbuf{};
    FrameDecoder decoder;
    std::deque<std::string> wqueue;
    bool writing = false;
    bool closed = false;
    nlohmann::json last_sent;  // last snapshot message this client holds
    std::uint64_t last_seq = 0;

    void begin() {
      send(hello_message().dump());
      read();
    }

    void read() {
      auto self = shared_from_this();
      socket.async_read_some(asio::buffer(rbuf), [self](boost::system::error_code ec, std::size_t n) {
        if (ec) {
          self->close();
          return;
        }
        self->decoder.feed({self->rbuf.data(), n});
        try {
          while (auto body = self->decoder.next()) self->handle(*body);
        } catch (const ProtocolError& e) {
          // Oversized frame: the stream cannot be resynchronised.
          self->send(error_message(e.what()).dump());
          self->closed = true;
          return;
        }
        self->read();
      });
    }

    void handle(const std::string& body) {
      ClientMessage m;
      try {
        m = parse_client_message(body);
      } catch (const ProtocolError& e) {
        owner.rejected.fetch_add(1);
        send(error_message(e.what()).dump());
        return;
      }
      if (m.type == ClientType::kHello) {
        // Resync: the next tick sends a full snapshot.
        last_seq = 0;
        last_sent = nullptr;
      }
      if (m.type == ClientType::kSetRate && m.snapshot_hz) owner.set_hz(*m.snapshot_hz);
      if (owner.on_inbound) owner.on_inbound(m, id);
    }

    void send(std::string body) {
      wqueue.push_back(frame(body));
      if (!writing) write_next();
    }

    void write_next() {
      if (wqueue.empty() || !socket.is_open()) {
        writing = false;
        if (closed) close();
        return;
      }
      writing = true;
      auto self = shared_from_this();
      asio::async_write(socket, asio::buffer(wqueue.front()), [self](boost::system::error_code ec, std::size_t) {
        self->wqueue.pop_front();
        if (ec) {
          self->close();
          return;
        }
        self->write_next();
      });
    }

    void push_state(const nlohmann::json& snap, std::uint64_t seq) {
      if (seq == last_seq || writing) return;  // slow clients skip ticks
      if (last_seq == 0) {
        send(snap.dump());
      } else {
        send(delta_message(last_sent, snap, last_seq, seq).dump());
      }
      last_sent = snap;
      last_seq = seq;
    }

    void close() {
      if (!socket.is_open()) return;
      boost::system::error_code ignored;
      socket.shutdown(tcp::socket::shutdown_both, ignored);
      socket.close(ignored);
      owner.drop(id);
    }
  };

  Impl(Options o, InboundHandler h) : options(std::move(o)), on_inbound(std::move(h)), acceptor(io), timer(io) {
    hz.store(options.snapshot_hz);
  }

  void set_hz(double v) { hz.store(v); }

  void drop(std::uint64_t id) {
    std::lock_guard lock(sessions_mu);
    sessions.erase(id);
  }

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
      if (ec) return;
      std::shared_ptr<Session> s;
      {
        std::lock_guard lock(sessions_mu);
        s = std::make_shared<Session>(*this, std::move(sock), ++next_id);
        sessions[s->id] = s;
      }
      s->begin();
      accept();
    });
  }

  void tick() {
    const auto period = std::chrono::duration<double>(1.0 / hz.load());
    timer.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(period));
    timer.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      nlohmann::json snap;
      std::uint64_t seq = 0;
      {
        std::lock_guard lock(snap_mu);
        snap = latest;
        seq = latest_seq;
      }
      if (seq > 0) {
        std::vector<std::shared_ptr<Session>> live;
        {
          std::lock_guard lock(sessions_mu);
          for (auto& [id, s] : sessions) live.push_back(s);
        }
        for (auto& s : live) s->push_state(snap, seq);
      }
      tick();
    });
  }

  Options options;
  InboundHandler on_inbound;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::thread thread;
  std::atomic<double> hz{5.0};
  std::atomic<std::uint64_t> rejected{0};
  mutable std::mutex sessions_mu;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions;
  std::uint64_t next_id = 0;
  std::mutex snap_mu;
  nlohmann::json latest;
  std::uint64_t latest_seq = 0;
  std::uint16_t bound_port = 0;
  bool running = false;
};

GatewayServer::GatewayServer(Options options, InboundHandler on_inbound)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(on_inbound))) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  if (impl_->running) return;
  const tcp::endpoint ep(asio::ip::make_address(impl_->options.address), impl_->options.port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  impl_->bound_port = impl_->acceptor.local_endpoint().port();
  impl_->accept();
  impl_->tick();
  impl_->running = true;
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void GatewayServer::stop() {
  if (!impl_ || !impl_->running) return;
  asio::post(impl_->io, [this] {
    boost::system::error_code ignored;
    impl_->acceptor.close(ignored);
    impl_->timer.cancel();
    std::vector<std::shared_ptr<Impl::Session>> live;
    {
      std::lock_guard lock(impl_->sessions_mu);
      for (auto& [id, s] : impl_->sessions) live.push_back(s);
    }
    for (auto& s : live) s->close();
    impl_->io.stop();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->running = false;
}

std::uint16_t GatewayServer::port() const { return impl_->bound_port; }

void GatewayServer::publish(nlohmann::json snapshot) {
  std::lock_guard lock(impl_->snap_mu);
  ++impl_->latest_seq;
  impl_->latest = snapshot_message(std::move(snapshot), impl_->latest_seq);
}

void GatewayServer::set_snapshot_hz(double hz) { impl_->set_hz(hz); }

std::size_t GatewayServer::session_count() const {
  std::lock_guard lock(impl_->sessions_mu);
  return impl_->sessions.size();
}

std::uint64_t GatewayServer::rejected_messages() const { return impl_->rejected.load(); }

}  // namespace lunasim::ground
