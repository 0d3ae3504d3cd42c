#include "hrcm/websocket.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <deque>
#include <future>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/dispatch.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "hrcm/errors.hpp"

namespace hrcm::ws {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxMessageBytes = 16u << 20;

/// Unbounded FIFO of command texts handed from the network thread to the
/// connection's command thread.
class CommandQueue {
public:
    void push(std::string text) {
        {
            std::lock_guard lock(mutex_);
            if (closed_) {
                return;
            }
            items_.push_back(std::move(text));
        }
        cv_.notify_one();
    }

    std::optional<std::string> pop() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) {
            return std::nullopt;
        }
        auto text = std::move(items_.front());
        items_.pop_front();
        return text;
    }

    void close() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> items_;
    bool closed_ = false;
};

json answer(bridge::BridgeService& service, const std::string& text) {
    json command;
    try {
        command = json::parse(text);
    } catch (const json::exception& e) {
        return bridge::envelope("response", 0,
                                {{"ok", false},
                                 {"error", {{"code", "invalid"}, {"message", std::string("bad JSON: ") + e.what()}}}});
    }
    return service.submit(std::move(command)).get();
}

// Network I/O runs on the connection's strand. Two helper threads feed it:
// one drains the event subscription, the other waits on command futures so a
// slow command never stalls the reactor.
class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, bridge::BridgeService& service)
        : stream_(std::move(socket)), service_(service) {}

    void run() {
        beast::get_lowest_layer(stream_).expires_after(std::chrono::seconds(30));
        http::async_read(stream_.next_layer(), buffer_, request_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
    }

    /// Safe from any thread. Stops the helper threads and closes the socket.
    void shutdown() {
        finish();
        net::dispatch(stream_.get_executor(), [self = shared_from_this()] {
            beast::error_code ignored;
            beast::get_lowest_layer(self->stream_).socket().shutdown(tcp::socket::shutdown_both, ignored);
            beast::get_lowest_layer(self->stream_).close();
        });
    }

    void join() {
        if (pump_.joinable()) {
            pump_.join();
        }
        if (worker_.joinable()) {
            worker_.join();
        }
    }

    bool finished() const { return finished_; }

private:
    void on_request(beast::error_code ec) {
        if (ec) {
            finish();
            return;
        }
        if (!websocket::is_upgrade(request_)) {
            reject_ = std::make_shared<http::response<http::string_body>>(http::status::bad_request, request_.version());
            reject_->set(http::field::content_type, "text/plain");
            reject_->keep_alive(false);
            reject_->body() = "expected a websocket upgrade\n";
            reject_->prepare_payload();
            http::async_write(stream_.next_layer(), *reject_,
                              [self = shared_from_this()](beast::error_code, std::size_t) { self->shutdown(); });
            return;
        }
        beast::get_lowest_layer(stream_).expires_never();
        stream_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        stream_.read_message_max(kMaxMessageBytes);
        stream_.async_accept(request_, [self = shared_from_this()](beast::error_code e) { self->on_accept(e); });
    }

    void on_accept(beast::error_code ec) {
        if (ec) {
            finish();
            return;
        }
        {
            std::lock_guard lock(sub_mutex_);
            if (finished_) {
                return;
            }
            const auto target = request_.target();
            sub_ = service_.subscribe(last_step_from_target(std::string_view(target.data(), target.size())));
        }
        auto self = shared_from_this();
        pump_ = std::thread([self] {
            while (!self->finished_) {
                auto ev = self->sub_->pop(std::chrono::milliseconds(200));
                if (ev) {
                    self->send(ev->dump());
                } else if (self->sub_->closed()) {
                    break;
                }
            }
        });
        worker_ = std::thread([self] {
            while (auto text = self->commands_.pop()) {
                self->send(answer(self->service_, *text).dump());
            }
        });
        buffer_.clear();
        do_read();
    }

    void do_read() {
        stream_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->finish();
                return;
            }
            self->commands_.push(beast::buffers_to_string(self->buffer_.data()));
            self->buffer_.consume(self->buffer_.size());
            self->do_read();
        });
    }

    void send(std::string text) {
        net::post(stream_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
            self->outbox_.push_back(std::move(text));
            if (self->outbox_.size() == 1) {
                self->do_write();
            }
        });
    }

    void do_write() {
        stream_.text(true);
        stream_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->outbox_.clear();
                self->finish();
                return;
            }
            self->outbox_.pop_front();
            if (!self->outbox_.empty()) {
                self->do_write();
            }
        });
    }

    void finish() {
        std::lock_guard lock(sub_mutex_);
        if (finished_.exchange(true)) {
            return;
        }
        commands_.close();
        if (sub_) {
            service_.unsubscribe(sub_);
            sub_->close();
        }
    }

    websocket::stream<beast::tcp_stream> stream_;
    bridge::BridgeService& service_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    std::shared_ptr<http::response<http::string_body>> reject_;
    std::deque<std::string> outbox_;

    std::mutex sub_mutex_;
    std::shared_ptr<bridge::Subscription> sub_;
    CommandQueue commands_;
    std::atomic<bool> finished_{false};
    std::thread pump_;
    std::thread worker_;
};

} // namespace

std::optional<int> last_step_from_target(std::string_view target) {
    const auto query = target.find('?');
    if (query == std::string_view::npos) {
        return std::nullopt;
    }
    constexpr std::string_view key = "last_step=";
    auto pos = target.find(key, query);
    while (pos != std::string_view::npos && target[pos - 1] != '?' && target[pos - 1] != '&') {
        pos = target.find(key, pos + 1);
    }
    if (pos == std::string_view::npos) {
        return std::nullopt;
    }
    const auto begin = target.data() + pos + key.size();
    const auto end = target.data() + std::min(target.find('&', pos), target.size());
    int value = 0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || value < 0) {
        return std::nullopt;
    }
    return value;
}

struct Server::Impl {
    bridge::BridgeService& service;
    std::string bind;
    std::uint16_t port;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::thread io_thread;
    std::mutex conns_mutex;
    std::list<std::shared_ptr<Connection>> conns;
    bool running = false;

    Impl(bridge::BridgeService& s, std::string b, std::uint16_t p) : service(s), bind(std::move(b)), port(p) {}

    void do_accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec == net::error::operation_aborted || !acceptor.is_open()) {
                return;
            }
            if (!ec) {
                beast::error_code ignored;
                socket.set_option(tcp::no_delay(true), ignored);
                auto conn = std::make_shared<Connection>(std::move(socket), service);
                {
                    std::lock_guard lock(conns_mutex);
                    for (auto it = conns.begin(); it != conns.end();) {
                        if ((*it)->finished()) {
                            (*it)->join();
                            it = conns.erase(it);
                        } else {
                            ++it;
                        }
                    }
                    conns.push_back(conn);
                }
                conn->run();
            }
            do_accept();
        });
    }
};

Server::Server(bridge::BridgeService& service, std::string bind_address, std::uint16_t port)
    : impl_(std::make_unique<Impl>(service, std::move(bind_address), port)) {}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->port; }

void Server::start() {
    if (impl_->running) {
        return;
    }
    beast::error_code ec;
    const auto address = net::ip::make_address(impl_->bind, ec);
    if (ec) {
        throw ConfigurationError("bind address '" + impl_->bind + "' is not an IP address");
    }
    const tcp::endpoint endpoint(address, impl_->port);
    try {
        impl_->acceptor.open(endpoint.protocol());
        impl_->acceptor.set_option(net::socket_base::reuse_address(true));
        impl_->acceptor.bind(endpoint);
        impl_->acceptor.listen(net::socket_base::max_listen_connections);
    } catch (const boost::system::system_error& e) {
        beast::error_code ignored;
        impl_->acceptor.close(ignored);
        throw ConfigurationError("cannot listen on " + impl_->bind + ":" + std::to_string(impl_->port) + ": " +
                                 e.code().message());
    }
    impl_->port = impl_->acceptor.local_endpoint().port();
    impl_->running = true;
    impl_->do_accept();
    impl_->io_thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

void Server::stop() {
    if (!impl_ || !impl_->running) {
        return;
    }
    impl_->running = false;
    std::promise<void> closed;
    net::post(impl_->ioc, [impl = impl_.get(), &closed] {
        beast::error_code ignored;
        impl->acceptor.close(ignored);
        closed.set_value();
    });
    closed.get_future().wait();
    std::list<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lock(impl_->conns_mutex);
        conns.swap(impl_->conns);
    }
    for (auto& c : conns) {
        c->shutdown();
    }
    for (auto& c : conns) {
        c->join();
    }
    impl_->ioc.stop();
    impl_->io_thread.join();
}

struct Client::Impl {
    net::io_context ioc;
    std::optional<websocket::stream<beast::tcp_stream>> stream;
    beast::flat_buffer buffer;
    std::deque<std::string> inbox;
    bool open = false;
    bool reading = false;

    // A read stays outstanding between receive() calls, so a timeout never
    // has to cancel it.
    void arm_read() {
        reading = true;
        stream->async_read(buffer, [this](beast::error_code ec, std::size_t) {
            reading = false;
            if (ec) {
                open = false;
                return;
            }
            inbox.push_back(beast::buffers_to_string(buffer.data()));
            buffer.consume(buffer.size());
            if (open) {
                arm_read();
            }
        });
    }

    void run_until(const bool& done) {
        while (!done) {
            if (ioc.stopped()) {
                ioc.restart();
            }
            if (ioc.run_one() == 0) {
                break;
            }
        }
    }
};

Client::Client() : impl_(std::make_unique<Impl>()) {}

Client::~Client() { close(); }

bool Client::connected() const { return impl_->open; }

void Client::connect(const std::string& host, std::uint16_t port, const std::string& target) {
    close();
    impl_->ioc.restart();
    impl_->stream.emplace(impl_->ioc);
    try {
        tcp::resolver resolver(impl_->ioc);
        beast::get_lowest_layer(*impl_->stream).connect(resolver.resolve(host, std::to_string(port)));
        beast::get_lowest_layer(*impl_->stream).socket().set_option(tcp::no_delay(true));
        impl_->stream->read_message_max(kMaxMessageBytes);
        impl_->stream->handshake(host + ":" + std::to_string(port), target);
    } catch (const boost::system::system_error& e) {
        impl_->stream.reset();
        throw ConfigurationError("cannot open websocket to " + host + ":" + std::to_string(port) + ": " +
                                 e.code().message());
    }
    impl_->open = true;
    impl_->arm_read();
}

void Client::send_text(std::string_view text) {
    if (!impl_->open) {
        throw ConfigurationError("client is not connected");
    }
    const std::string payload(text);
    bool done = false;
    beast::error_code result;
    impl_->stream->text(true);
    impl_->stream->async_write(net::buffer(payload), [&](beast::error_code ec, std::size_t) {
        result = ec;
        done = true;
    });
    impl_->run_until(done);
    if (result || !done) {
        throw ConfigurationError("websocket send failed: " + result.message());
    }
}

std::optional<std::string> Client::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (impl_->inbox.empty() && impl_->reading) {
        if (impl_->ioc.stopped()) {
            impl_->ioc.restart();
        }
        if (impl_->ioc.run_one_until(deadline) == 0 && std::chrono::steady_clock::now() >= deadline) {
            break;
        }
    }
    if (impl_->inbox.empty()) {
        return std::nullopt;
    }
    auto text = std::move(impl_->inbox.front());
    impl_->inbox.pop_front();
    return text;
}

void Client::close() {
    if (!impl_->stream) {
        return;
    }
    if (impl_->open) {
        impl_->open = false;
        bool done = false;
        impl_->stream->async_close(websocket::close_code::normal, [&](beast::error_code) { done = true; });
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(1);
        while (!done && std::chrono::steady_clock::now() < deadline) {
            if (impl_->ioc.stopped()) {
                impl_->ioc.restart();
            }
            if (impl_->ioc.run_one_until(deadline) == 0) {
                break;
            }
        }
    }
    beast::error_code ignored;
    beast::get_lowest_layer(*impl_->stream).socket().close(ignored);
    impl_->ioc.restart();
    impl_->ioc.poll();
    impl_->stream.reset();
    impl_->inbox.clear();
    impl_->buffer.clear();
    impl_->reading = false;
}

} // namespace hrcm::ws
