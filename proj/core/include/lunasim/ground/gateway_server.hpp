#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include <nlohmann/json.hpp>

#include "lunasim/ground/protocol.hpp"

namespace lunasim::ground {

// TCP server for operator consoles. I/O runs on its own thread; the sim
// side only calls publish() and receives parsed messages through the
// inbound handler (invoked on the I/O thread, in arrival order).
class GatewayServer {
 public:
  using InboundHandler = std::function<void(const ClientMessage&, std::uint64_t session)>;

  struct Options {
    std::string address = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks a free port
    double snapshot_hz = 5.0;
  };

  GatewayServer(Options options, InboundHandler on_inbound);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const;

  // Replaces the outbound snapshot; sessions pick it up at their next tick.
  void publish(nlohmann::json snapshot);
  void set_snapshot_hz(double hz);
  std::size_t session_count() const;
  std::uint64_t rejected_messages() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lunasim::ground
