#include "hrcm/bridge_service.hpp"

#include <algorithm>
#include <cmath>

#include "hrcm/errors.hpp"
#include "hrcm/serialization.hpp"

namespace hrcm::bridge {

using nlohmann::json;

namespace {

json visible_observations(const std::vector<vision::FeatureObservation>& obs) {
    json a = json::array();
    for (const auto& o : obs) {
        if (o.inside_fov) {
            a.push_back({o.id, o.pixel.x(), o.pixel.y()});
        }
    }
    return a;
}

Response infeasible(const std::string& command, SessionState state) {
    return Response::reject("infeasible", "command '" + command + "' is infeasible in state " + to_string(state));
}

} // namespace

std::string to_string(SessionState state) {
    switch (state) {
    case SessionState::Idle:
        return "Idle";
    case SessionState::ManualControl:
        return "ManualControl";
    case SessionState::GraphReady:
        return "GraphReady";
    case SessionState::Servoing:
        return "Servoing";
    case SessionState::Fault:
        return "Fault";
    }
    return "Idle";
}

Response Response::reject(std::string code, std::string message) {
    Response r;
    r.ok = false;
    r.error_code = std::move(code);
    r.error_message = std::move(message);
    return r;
}

Session::Session(scenario::ScenarioConfig config) : config_(std::move(config)) {
    config_.validate();
    fresh_world();
}

void Session::fresh_world() {
    servo_.reset();
    world_ = std::make_unique<sim::World>(sim::World::from_config(config_));
    graph_ = graph::ViewGraph{};
    state_ = SessionState::Idle;
    servo_target_ = -1;
    servo_step_ = 0;
    tail_.clear();
    finished_.reset();
}

Response Session::handle(const std::string& type, const json& payload) {
    try {
        if (type == "get_state") {
            Response r;
            r.result = snapshot();
            return r;
        }
        if (type == "reset") {
            fresh_world();
            return {};
        }
        if (type == "enable_manual") {
            if (state_ == SessionState::Servoing) {
                return infeasible(type, state_);
            }
            state_ = SessionState::ManualControl;
            return {};
        }
        if (type == "jog") {
            return state_ == SessionState::ManualControl ? do_jog(payload) : infeasible(type, state_);
        }
        if (type == "capture") {
            return state_ == SessionState::ManualControl ? do_capture() : infeasible(type, state_);
        }
        if (type == "select_and_execute") {
            if (state_ != SessionState::ManualControl && state_ != SessionState::GraphReady) {
                return infeasible(type, state_);
            }
            return do_select(payload);
        }
        if (type == "abort") {
            if (state_ != SessionState::Servoing) {
                return infeasible(type, state_);
            }
            servo_->abort();
            servo_.reset();
            state_ = SessionState::ManualControl;
            Response r;
            r.result = {{"aborted_at_step", servo_step_}};
            return r;
        }
    } catch (const Error& e) {
        // Only reachable after validation, i.e. from the simulation itself.
        state_ = SessionState::Fault;
        servo_.reset();
        return Response::reject("fault", e.what());
    }
    return Response::reject("unknown_command", "unknown command '" + type + "'");
}

Response Session::do_jog(const json& payload) {
    sim::Twist twist;
    int steps = 1;
    try {
        const auto v = io::vec_from_json(payload.at("twist"), 6);
        twist = v;
        steps = payload.value("steps", 1);
    } catch (const json::exception& e) {
        return Response::reject("invalid", std::string("jog needs a 6-element 'twist': ") + e.what());
    } catch (const ConfigurationError& e) {
        return Response::reject("invalid", e.what());
    }
    if (!twist.allFinite()) {
        return Response::reject("invalid", "jog twist must be finite");
    }
    if (steps < 1 || steps > kMaxJogSteps) {
        return Response::reject("invalid", "jog steps must lie in [1, " + std::to_string(kMaxJogSteps) + "]");
    }
    for (int k = 0; k < steps; ++k) {
        sim::manual_jog(*world_, twist, config_.controller);
    }
    Response r;
    r.result = {{"time_s", world_->time_s}, {"rcm_error_mm", 1000.0 * world_->rcm_error()}};
    return r;
}

Response Session::do_capture() {
    auto obs = world_->render();
    std::size_t visible = 0;
    for (const auto& o : obs) {
        visible += o.inside_fov ? 1 : 0;
    }
    if (visible < graph::ViewGraph::kMinSnapshotFeatures) {
        return Response::reject("invalid", "too few visible features to capture (" + std::to_string(visible) + ")");
    }
    const int id = graph_.capture(std::move(obs), world_->intrinsics(), world_->time_s, world_->camera_pose());
    Response r;
    r.result = {{"vertex", id}};
    return r;
}

Response Session::do_select(const json& payload) {
    int target = 0;
    try {
        target = payload.at("target").get<int>();
    } catch (const json::exception& e) {
        return Response::reject("invalid", std::string("select_and_execute needs an integer 'target': ") + e.what());
    }
    if (graph_.empty()) {
        return Response::reject("infeasible", "view graph is empty");
    }
    if (!graph_.contains(target)) {
        return Response::reject("unknown_target", "no vertex " + std::to_string(target) + " in the view graph");
    }
    auto options = sim::ServoOptions::from_config(config_);
    options.eval_scene_motion = kinematics::Pose{};
    std::unique_ptr<sim::ServoRun> run;
    try {
        run = std::make_unique<sim::ServoRun>(*world_, graph_, target, options);
    } catch (const NoPathError& e) {
        return Response::reject("unknown_target", e.what());
    }
    servo_ = std::move(run);
    servo_target_ = target;
    servo_step_ = 0;
    finished_.reset();
    state_ = SessionState::Servoing;
    Response r;
    r.result = {{"target", target}, {"path", servo_->path()}};
    return r;
}

std::optional<json> Session::tick() {
    if (state_ != SessionState::Servoing || !servo_) {
        return std::nullopt;
    }
    metrics::MetricsRecord rec;
    try {
        rec = servo_->step();
    } catch (const Error& e) {
        state_ = SessionState::Fault;
        finished_ = json{{"status", "fault"}, {"target", servo_target_}, {"steps", servo_step_}, {"message", e.what()}};
        servo_.reset();
        return std::nullopt;
    }
    servo_step_ = rec.step;
    tail_.push_back(rec);
    while (tail_.size() > kMetricsTail) {
        tail_.pop_front();
    }
    json event = {{"step", rec.step},
                  {"record", metrics::record_to_json(rec)},
                  {"observations", visible_observations(servo_->last_observations())},
                  {"servo", {{"target", servo_target_}, {"path", servo_->path()}, {"active", servo_->active_vertex()}}}};
    if (servo_->done()) {
        const auto status = servo_->status();
        if (status == sim::ServoStatus::Converged) {
            graph_.set_current(servo_target_);
            state_ = SessionState::GraphReady;
        } else {
            state_ = SessionState::Fault;
        }
        finished_ = json{{"status", sim::to_string(status)}, {"target", servo_target_}, {"steps", rec.step}};
        servo_.reset();
    }
    event["state"] = to_string(state_);
    return event;
}

std::optional<json> Session::take_finished() {
    auto out = std::move(finished_);
    finished_.reset();
    return out;
}

json Session::snapshot() const {
    json vertices = json::array();
    for (const auto& v : graph_.vertices()) {
        vertices.push_back({{"id", v.id},
                            {"timestamp", v.timestamp},
                            {"visible_features", v.visible_features()},
                            {"observations", visible_observations(v.snapshot)}});
    }
    json edges = json::array();
    for (const auto& [a, b] : graph_.edges()) {
        edges.push_back({a, b});
    }
    json tail = json::array();
    for (const auto& r : tail_) {
        tail.push_back(metrics::record_to_json(r));
    }
    const auto size = world_->camera.image_size();
    const auto mask = world_->camera.output_mask();
    json servo = nullptr;
    if (servo_) {
        servo = {{"target", servo_target_},
                 {"path", servo_->path()},
                 {"active", servo_->active_vertex()},
                 {"step", servo_step_},
                 {"mpd_px", std::isfinite(servo_->last_mpd()) ? json(servo_->last_mpd()) : json(nullptr)}};
    }
    return {{"state", to_string(state_)},
            {"time_s", world_->time_s},
            {"image", {{"width", size.x()}, {"height", size.y()}}},
            {"fov", {{"center", {mask.center.x(), mask.center.y()}}, {"radius", mask.radius}}},
            {"intrinsics", io::intrinsics_to_json(world_->intrinsics())},
            {"observations", visible_observations(world_->render())},
            {"graph",
             {{"vertices", vertices},
              {"edges", edges},
              {"current", graph_.current() ? json(*graph_.current()) : json(nullptr)}}},
            {"servo", servo},
            {"metrics_tail", tail},
            {"rcm_error_mm", 1000.0 * world_->rcm_error()},
            {"eval", {{"camera_pose", io::pose_to_json(world_->camera_pose())}, {"q", io::vec_to_json(world_->q)}}}};
}

json envelope(const std::string& type, std::uint64_t seq, json payload) {
    return {{"type", type}, {"seq", seq}, {"payload", std::move(payload)}};
}

Subscription::Subscription(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

void Subscription::push(json event) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        if (queue_.size() >= capacity_) {
            const auto& oldest = queue_.front();
            if (pending_drops_ == 0 && oldest.value("type", "") == "telemetry") {
                first_dropped_step_ = oldest.at("payload").value("step", 0);
            }
            queue_.pop_front();
            ++pending_drops_;
            ++dropped_total_;
        }
        queue_.push_back(std::move(event));
    }
    cv_.notify_one();
}

std::optional<json> Subscription::pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
    if (pending_drops_ > 0) {
        json gap = {{"dropped", pending_drops_}, {"reason", "overflow"}};
        gap["first_dropped_step"] = first_dropped_step_ ? json(*first_dropped_step_) : json(nullptr);
        pending_drops_ = 0;
        first_dropped_step_.reset();
        const auto seq = queue_.empty() ? 0 : queue_.front().value("seq", std::uint64_t{0});
        return envelope("gap", seq, std::move(gap));
    }
    if (queue_.empty()) {
        return std::nullopt;
    }
    json out = std::move(queue_.front());
    queue_.pop_front();
    return out;
}

void Subscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::uint64_t Subscription::dropped_total() const {
    std::lock_guard lock(mutex_);
    return dropped_total_;
}

BridgeService::BridgeService(scenario::ScenarioConfig config, ServiceOptions options)
    : session_(std::move(config)), options_(options) {}

BridgeService::~BridgeService() { stop(); }

void BridgeService::start() {
    std::lock_guard lock(mutex_);
    if (running_) {
        return;
    }
    running_ = true;
    stop_requested_ = false;
    thread_ = std::thread([this] { loop(); });
}

void BridgeService::stop() {
    {
        std::lock_guard lock(mutex_);
        if (!running_) {
            return;
        }
        stop_requested_ = true;
    }
    cv_.notify_all();
    thread_.join();
    std::deque<Pending> leftover;
    {
        std::lock_guard lock(mutex_);
        running_ = false;
        leftover.swap(commands_);
    }
    for (auto& p : leftover) {
        p.reply.set_value(envelope("response", p.command.value("seq", std::uint64_t{0}),
                                   {{"ok", false}, {"error", {{"code", "shutdown"}, {"message", "service stopped"}}}}));
    }
    std::lock_guard lock(subs_mutex_);
    for (auto& s : subs_) {
        s->close();
    }
    subs_.clear();
}

std::future<json> BridgeService::submit(json command) {
    Pending p;
    p.command = std::move(command);
    auto fut = p.reply.get_future();
    {
        std::lock_guard lock(mutex_);
        commands_.push_back(std::move(p));
    }
    cv_.notify_all();
    return fut;
}

json BridgeService::call(const std::string& type, json payload) {
    return submit(envelope(type, ++local_seq_, std::move(payload))).get();
}

std::shared_ptr<Subscription> BridgeService::subscribe(std::optional<int> last_step) {
    auto sub = std::make_shared<Subscription>(options_.subscriber_capacity);
    std::lock_guard lock(subs_mutex_);
    const int now = current_step_.load();
    if (last_step && now > *last_step) {
        sub->push(envelope("gap", event_seq_,
                           {{"reason", "reconnect"},
                            {"dropped", now - *last_step},
                            {"first_dropped_step", *last_step + 1},
                            {"current_step", now}}));
    }
    subs_.push_back(sub);
    return sub;
}

void BridgeService::unsubscribe(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(subs_mutex_);
    subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
    sub->close();
}

void BridgeService::publish(const std::string& type, json payload) {
    std::lock_guard lock(subs_mutex_);
    const auto ev = envelope(type, ++event_seq_, std::move(payload));
    for (auto& s : subs_) {
        s->push(ev);
    }
}

json BridgeService::apply(const json& command) {
    std::uint64_t seq = 0;
    std::string type;
    json payload = json::object();
    if (!command.is_object() || !command.contains("type") || !command.at("type").is_string()) {
        return envelope("response", 0,
                        {{"ok", false}, {"error", {{"code", "invalid"}, {"message", "envelope needs a string 'type'"}}}});
    }
    type = command.at("type").get<std::string>();
    if (command.contains("seq") && command.at("seq").is_number_unsigned()) {
        seq = command.at("seq").get<std::uint64_t>();
    }
    if (command.contains("payload") && command.at("payload").is_object()) {
        payload = command.at("payload");
    }
    const auto before = session_.state();
    const Response r = session_.handle(type, payload);
    json body = {{"ok", r.ok}, {"command", type}, {"state", to_string(session_.state())}};
    if (r.ok) {
        body["result"] = r.result;
    } else {
        body["error"] = {{"code", r.error_code}, {"message", r.error_message}};
    }
    if (session_.state() != before) {
        publish("state", {{"state", to_string(session_.state())}, {"previous", to_string(before)}});
    }
    if (type == "select_and_execute" && r.ok) {
        current_step_ = 0;
    }
    return envelope("response", seq, std::move(body));
}

void BridgeService::loop() {
    using clock = std::chrono::steady_clock;
    auto next_tick = clock::now();
    auto next_heartbeat = clock::now() + options_.heartbeat_period;
    std::unique_lock lock(mutex_);
    while (!stop_requested_) {
        while (!commands_.empty()) {
            Pending p = std::move(commands_.front());
            commands_.pop_front();
            lock.unlock();
            p.reply.set_value(apply(p.command));
            lock.lock();
            next_tick = std::max(next_tick, clock::now());
        }
        const auto now = clock::now();
        if (session_.state() == SessionState::Servoing) {
            if (now >= next_tick) {
                lock.unlock();
                const auto before = session_.state();
                if (auto ev = session_.tick()) {
                    current_step_ = ev->at("step").get<int>();
                    publish("telemetry", std::move(*ev));
                }
                if (auto done = session_.take_finished()) {
                    publish("servo_finished", std::move(*done));
                }
                if (session_.state() != before) {
                    publish("state", {{"state", to_string(session_.state())}, {"previous", to_string(before)}});
                }
                lock.lock();
                next_tick += options_.tick_period;
                // Missed deadlines are skipped rather than replayed.
                if (next_tick < clock::now()) {
                    next_tick = clock::now() + options_.tick_period;
                }
                next_heartbeat = clock::now() + options_.heartbeat_period;
                continue;
            }
            cv_.wait_until(lock, next_tick, [&] { return stop_requested_ || !commands_.empty(); });
            continue;
        }
        if (now >= next_heartbeat) {
            lock.unlock();
            publish("heartbeat", {{"state", to_string(session_.state())}, {"time_s", session_.world().time_s}});
            lock.lock();
            next_heartbeat = clock::now() + options_.heartbeat_period;
        }
        next_tick = clock::now();
        cv_.wait_until(lock, next_heartbeat, [&] { return stop_requested_ || !commands_.empty(); });
    }
}

} // namespace hrcm::bridge
