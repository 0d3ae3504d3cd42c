#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hrcm/simulator.hpp"

namespace hrcm::bridge {

enum class SessionState { Idle, ManualControl, GraphReady, Servoing, Fault };

std::string to_string(SessionState state);

/// Outcome of one command. Rejected commands leave the session untouched.
struct Response {
    bool ok = true;
    nlohmann::json result = nlohmann::json::object();
    std::string error_code;  // "infeasible", "invalid", "unknown_target", "unknown_command"
    std::string error_message;

    static Response reject(std::string code, std::string message);
};

/// Single-threaded session: world, view graph and the active servo. All
/// mutation goes through handle() and tick(); the threaded service below
/// calls both from one control loop.
class Session {
public:
    explicit Session(scenario::ScenarioConfig config);

    SessionState state() const { return state_; }
    const sim::World& world() const { return *world_; }
    const graph::ViewGraph& graph() const { return graph_; }
    const scenario::ScenarioConfig& config() const { return config_; }

    /// Commands: get_state, enable_manual, jog, capture, select_and_execute,
    /// abort, reset.
    Response handle(const std::string& type, const nlohmann::json& payload);

    /// One servo frame when Servoing; std::nullopt otherwise. The returned
    /// event payload carries the metrics record and the observations.
    std::optional<nlohmann::json> tick();

    /// Number of servo frames executed in the active (or last) servo.
    int servo_step() const { return servo_step_; }

    nlohmann::json snapshot() const;

    /// Servo-finished notice produced by the last tick, if any.
    std::optional<nlohmann::json> take_finished();

    static constexpr std::size_t kMetricsTail = 50;
    static constexpr int kMaxJogSteps = 30;

private:
    Response do_jog(const nlohmann::json& payload);
    Response do_capture();
    Response do_select(const nlohmann::json& payload);
    void fresh_world();

    scenario::ScenarioConfig config_;
    std::unique_ptr<sim::World> world_;
    graph::ViewGraph graph_;
    SessionState state_ = SessionState::Idle;
    std::unique_ptr<sim::ServoRun> servo_;
    int servo_target_ = -1;
    int servo_step_ = 0;
    std::deque<metrics::MetricsRecord> tail_;
    std::optional<nlohmann::json> finished_;
};

/// Envelope helper: {type, seq, payload}.
nlohmann::json envelope(const std::string& type, std::uint64_t seq, nlohmann::json payload);

/// Bounded per-client event queue. When full, the oldest event is dropped and
/// the next pop() first yields a "gap" event counting what was lost.
class Subscription {
public:
    explicit Subscription(std::size_t capacity);

    void push(nlohmann::json event);
    /// Waits up to `timeout` for the next event.
    std::optional<nlohmann::json> pop(std::chrono::milliseconds timeout);
    void close();
    bool closed() const;
    std::uint64_t dropped_total() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t capacity_;
    std::deque<nlohmann::json> queue_;
    std::uint64_t pending_drops_ = 0;
    std::optional<int> first_dropped_step_;
    std::uint64_t dropped_total_ = 0;
    bool closed_ = false;
};

struct ServiceOptions {
    /// Servo tick period; zero runs ticks back to back.
    std::chrono::microseconds tick_period{33333};
    std::chrono::milliseconds heartbeat_period{1000};
    std::size_t subscriber_capacity = 256;
};

/// Owns a Session and runs it on a single control-loop thread. Commands from
/// any thread are queued and applied in arrival order; events fan out to
/// subscribers.
class BridgeService {
public:
    BridgeService(scenario::ScenarioConfig config, ServiceOptions options = {});
    ~BridgeService();

    BridgeService(const BridgeService&) = delete;
    BridgeService& operator=(const BridgeService&) = delete;

    void start();
    void stop();

    /// Queues an envelope {type, seq, payload}; the future yields the
    /// response envelope {type: "response", seq, payload}.
    std::future<nlohmann::json> submit(nlohmann::json command);
    /// Convenience wrapper that blocks for the response.
    nlohmann::json call(const std::string& type, nlohmann::json payload = nlohmann::json::object());

    /// New event stream. With `last_step` (a resuming client), the first event
    /// is a gap notice when servo steps were missed.
    std::shared_ptr<Subscription> subscribe(std::optional<int> last_step = std::nullopt);
    void unsubscribe(const std::shared_ptr<Subscription>& sub);

private:
    struct Pending {
        nlohmann::json command;
        std::promise<nlohmann::json> reply;
    };

    void loop();
    void publish(const std::string& type, nlohmann::json payload);
    nlohmann::json apply(const nlohmann::json& command);

    Session session_;
    ServiceOptions options_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Pending> commands_;
    bool running_ = false;
    bool stop_requested_ = false;
    std::thread thread_;

    std::mutex subs_mutex_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    std::uint64_t event_seq_ = 0;
    std::atomic<std::uint64_t> local_seq_{0};
    std::atomic<int> current_step_{0};
};

} // namespace hrcm::bridge
