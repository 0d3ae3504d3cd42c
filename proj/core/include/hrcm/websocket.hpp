#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "hrcm/bridge_service.hpp"

namespace hrcm::ws {

/// WebSocket endpoint for the bridge. Each connection gets its own event
/// subscription; text messages are command envelopes and every command is
/// answered with a response envelope. Connecting with "?last_step=N" in the
/// request target resumes a stream and yields a gap notice for missed steps.
class Server {
public:
    Server(bridge::BridgeService& service, std::string bind_address, std::uint16_t port);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts accepting. Throws ConfigurationError if binding fails.
    void start();
    void stop();
    /// Actual port (useful when constructed with port 0).
    std::uint16_t port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Parses the `last_step` query parameter out of a request target such as
/// "/?last_step=12". Anything unparsable yields nullopt.
std::optional<int> last_step_from_target(std::string_view target);

/// Blocking client used by tests and tooling.
class Client {
public:
    Client();
    ~Client();

    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    /// Throws ConfigurationError if the connection or handshake fails.
    void connect(const std::string& host, std::uint16_t port, const std::string& target = "/");
    void send_text(std::string_view text);
    /// Next text message. nullopt on timeout or once the server has closed.
    std::optional<std::string> receive(std::chrono::milliseconds timeout);
    void close();
    bool connected() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace hrcm::ws
