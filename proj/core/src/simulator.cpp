#include "hrcm/simulator.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"

namespace hrcm::sim {

using scenario::ScenarioConfig;

namespace {

// Elbow-up posture of the default chain looking down near the workspace center.
Eigen::VectorXd builtin_seed(int dof) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(dof);
    if (dof == 7) {
        q << 0.0, 0.6, 0.0, 1.2, 0.0, -0.8, 0.0;
    }
    return q;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::Vector3d m_star_for(scenario::MStarPolicy policy, const vision::MatchSet& matches,
                           const std::vector<bool>& inliers, const homography::CameraIntrinsics& K_target) {
    if (policy == scenario::MStarPolicy::PrincipalRay) {
        return Eigen::Vector3d::UnitZ();
    }
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    int n = 0;
    for (std::size_t i = 0; i < matches.pairs.size(); ++i) {
        if (inliers[i]) {
            sum += matches.pairs[i].target;
            ++n;
        }
    }
    const Eigen::Vector2d c = sum / std::max(n, 1);
    return K_target.inverse_matrix() * Eigen::Vector3d(c.x(), c.y(), 1.0);
}

} // namespace

World::World(kinematics::ChainModel chain_, Eigen::VectorXd q_, std::shared_ptr<const vision::PlanarScene> scene_,
             vision::EndoscopeCamera camera_, Eigen::Vector3d trocar_)
    : chain(std::move(chain_)), q(std::move(q_)), scene(std::move(scene_)), camera(std::move(camera_)),
      trocar(std::move(trocar_)) {
    if (q.size() != chain.dof()) {
        throw ConfigurationError("joint vector size does not match the chain");
    }
    if (!q.allFinite() || !trocar.allFinite()) {
        throw ConfigurationError("world state must be finite");
    }
    if (!scene) {
        throw ConfigurationError("world needs a scene");
    }
    refresh_rcm();
}

World World::from_config(const ScenarioConfig& config) {
    auto chain = config.chain();
    const Pose target = config.initial_view.camera_pose(config.trocar);
    const Eigen::VectorXd seed =
        config.initial_view.q_seed.size() > 0 ? config.initial_view.q_seed : builtin_seed(chain.dof());
    if (seed.size() != chain.dof()) {
        throw ConfigurationError("initial_view.q_seed has the wrong number of joints");
    }
    Eigen::VectorXd q = kinematics::solve_camera_ik(chain, target, seed);
    if (!chain.within_limits(q)) {
        throw ConfigurationError("initial view is only reachable outside the joint limits; adjust q_seed");
    }
    auto scene = std::make_shared<const vision::PlanarScene>(config.scene.build());
    return World(std::move(chain), std::move(q), std::move(scene), config.camera.build(), config.trocar);
}

kinematics::EndoscopeFrames World::frames() const { return kinematics::forward_kinematics(chain, q); }

Pose World::camera_pose() const { return frames().pose_ip1; }

std::vector<vision::FeatureObservation> World::render() const { return camera.render(*scene, camera_pose()); }

void World::refresh_rcm() {
    const auto f = frames();
    rcm = rcm::RcmState::from_endoscope(f.pose_i.translation, f.pose_ip1.translation, trocar);
}

bool integrate_step(World& world, const Eigen::VectorXd& q_dot, double dt) {
    if (!(dt > 0.0)) {
        throw ConfigurationError("integration step must be positive");
    }
    if (q_dot.size() != world.q.size()) {
        throw ConfigurationError("joint velocity size does not match the chain");
    }
    if (!q_dot.allFinite()) {
        throw NumericError("non-finite joint velocity");
    }
    world.q += dt * q_dot;
    const bool clamped = world.chain.clamp_to_limits(world.q);
    if (clamped) {
        if (world.limit_warnings == 0) {
            std::cerr << "warning: joint limit reached at t=" << world.time_s << " s; clamping\n";
        }
        ++world.limit_warnings;
    }
    world.refresh_rcm();
    world.time_s += dt;
    return clamped;
}

ServoController::ServoController(const scenario::ControllerConfig& config, int dof)
    : config_(config), pid_(config.gains.channels(), config.control_dt(), config.integral_clamp),
      filter_(config.filter_length) {
    config_.validate();
    if (dof < 1) {
        throw ConfigurationError("controller needs at least one joint");
    }
}

Eigen::Vector4d ServoController::smooth(const Eigen::Vector4d& projected_error) {
    return filter_.push(projected_error);
}

void ServoController::apply(World& world, const Eigen::Vector4d& task_error) {
    const double h = config_.control_dt();
    const Eigen::VectorXd e_t = config_.task_sign * task_error;
    for (int s = 0; s < config_.control_substeps; ++s) {
        const auto f = world.frames();
        const Eigen::Vector3d x_i = f.pose_i.translation;
        const Eigen::Vector3d x_ip1 = f.pose_ip1.translation;
        const Eigen::MatrixXd J_ip1 = kinematics::geometric_jacobian(world.chain, world.q, x_ip1);
        const Eigen::MatrixXd J_i = kinematics::geometric_jacobian(world.chain, world.q, x_i);
        const Eigen::MatrixXd J_t = homography::task_jacobian(J_ip1, f.pose_ip1.rotation, config_.mode);
        const Eigen::MatrixXd J_rcm =
            rcm::rcm_jacobian(kinematics::translational_jacobian(J_i), kinematics::translational_jacobian(J_ip1),
                              world.rcm.lambda, x_i, x_ip1);
        const auto out = rcm::pid_step(pid_, config_.gains, rcm::composite_jacobian(J_t, J_rcm), e_t,
                                       world.rcm.e_rcm_p, config_.damping);
        integrate_step(world, out.q_dot, h);
    }
}

void ServoController::reset() {
    pid_.reset();
    filter_.reset();
}

void manual_jog(World& world, const Twist& twist, const scenario::ControllerConfig& config) {
    if (!twist.allFinite()) {
        throw NumericError("non-finite jog command");
    }
    ServoController controller(config, world.chain.dof());
    const Eigen::Vector4d e = homography::project_task(twist.head<3>(), twist.tail<3>(), config.mode);
    // The sign flip in apply() only concerns estimated errors, not operator commands.
    controller.apply(world, config.task_sign * e);
}

std::uint64_t step_seed(std::uint64_t seed, int step) {
    return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(step));
}

std::string to_string(ServoStatus status) {
    switch (status) {
    case ServoStatus::Running:
        return "running";
    case ServoStatus::Converged:
        return "converged";
    case ServoStatus::Failed:
        return "failed";
    case ServoStatus::Aborted:
        return "aborted";
    }
    return "running";
}

ServoOptions ServoOptions::from_config(const ScenarioConfig& config) {
    ServoOptions o;
    o.controller = config.controller;
    o.servo = config.servo;
    o.corruption = config.corruption;
    o.corruption.image_size = config.camera.build().image_size();
    if (config.kind == scenario::ScenarioKind::ToolMotion) {
        o.tool_motion = config.tool_motion;
    }
    o.seed = config.seed;
    if (config.kind == scenario::ScenarioKind::Reposition) {
        o.eval_scene_motion = config.reposition.transform(config.trocar);
    }
    return o;
}

ServoRun::ServoRun(World& world, const graph::ViewGraph& graph, int target, ServoOptions options)
    : world_(world), graph_(graph), options_(std::move(options)),
      controller_(options_.controller, world.chain.dof()) {
    if (graph.empty()) {
        throw ConfigurationError("cannot servo on an empty view graph");
    }
    const int start = graph.current().value_or(target);
    path_ = graph.shortest_path(start, target);
    options_.servo.validate();
    options_.corruption.validate();
}

double ServoRun::tip_error_mm(int vertex) const {
    const auto& v = graph_.vertex(vertex);
    if (!v.eval_camera_pose) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const Eigen::Vector3d ref = options_.eval_scene_motion.transform(v.eval_camera_pose->translation);
    return 1000.0 * (world_.camera_pose().translation - ref).norm();
}

void ServoRun::abort() {
    if (!done()) {
        status_ = ServoStatus::Aborted;
    }
}

metrics::MetricsRecord ServoRun::step() {
    if (done()) {
        throw ConfigurationError("servo run already finished (" + to_string(status_) + ")");
    }
    ++step_;
    metrics::MetricsRecord rec;
    rec.step = step_;

    vision::Corruption corruption = options_.corruption;
    if (options_.tool_motion && options_.tool_motion->in_burst(step_)) {
        corruption.outlier_rate = std::max(corruption.outlier_rate, options_.tool_motion->outlier_rate);
        corruption.dropout_rate = std::max(corruption.dropout_rate, options_.tool_motion->dropout_rate);
    }

    last_obs_ = world_.render();
    const auto& K = world_.intrinsics();
    bool controlled = false;
    const int active = active_vertex();
    const bool final_vertex = path_index_ + 1 == path_.size();
    try {
        const auto& vertex = graph_.vertex(active);
        const auto est = graph::target_homography(last_obs_, K, vertex, corruption, options_.servo.ransac,
                                                  step_seed(options_.seed, step_));
        const auto corr = est.matches.correspondences();
        last_mpd_ = vision::mean_pairwise_distance(corr, &est.ransac.inliers);
        rec.mpd_px = last_mpd_;
        rec.inliers = est.ransac.inlier_count;
        failures_ = 0;

        const double threshold = final_vertex ? options_.servo.final_mpd_px : options_.servo.intermediate_mpd_px;
        if (last_mpd_ <= threshold) {
            rec.target_vertex = active;
            if (final_vertex) {
                rec.event = "converged";
                status_ = ServoStatus::Converged;
            } else {
                rec.event = "advance";
                ++path_index_;
                controller_.reset();
                held_error_.setZero();
            }
        } else {
            const auto H = homography::pixel_to_normalized(est.ransac.G, K, vertex.intrinsics);
            const auto m_star = m_star_for(options_.controller.m_star, est.matches, est.ransac.inliers,
                                           vertex.intrinsics);
            const auto te = homography::task_error(H, m_star, options_.controller.mode);
            held_error_ = controller_.smooth(te.projected);
            controller_.apply(world_, held_error_);
            controlled = true;
        }
    } catch (const InsufficientFeaturesError&) {
        rec.event = "estimation_failure";
    } catch (const EstimationError&) {
        rec.event = "estimation_failure";
    } catch (const DegenerateGeometryError&) {
        rec.event = "estimation_failure";
    }

    if (rec.event == "estimation_failure") {
        rec.mpd_px = std::numeric_limits<double>::quiet_NaN();
        ++failures_;
        if (failures_ >= options_.servo.max_consecutive_failures) {
            rec.event = "failed";
            status_ = ServoStatus::Failed;
        } else {
            controller_.apply(world_, held_error_);
            controlled = true;
        }
    }
    if (!controlled) {
        world_.time_s += options_.controller.dt;
    }
    if (status_ == ServoStatus::Running && step_ >= options_.servo.max_steps) {
        rec.event = "aborted";
        status_ = ServoStatus::Aborted;
    }

    if (rec.target_vertex < 0) {
        rec.target_vertex = active_vertex();
    }
    rec.time_s = world_.time_s;
    rec.rcm_error_mm = 1000.0 * world_.rcm_error();
    rec.task_error = held_error_;
    rec.tip_mm = 1000.0 * world_.camera_pose().translation;
    rec.tip_error_mm = tip_error_mm(rec.target_vertex);
    return rec;
}

ServoResult run_servo(World& world, const graph::ViewGraph& graph, int target, const ServoOptions& options) {
    ServoRun run(world, graph, target, options);
    ServoResult result;
    result.path = run.path();
    while (!run.done()) {
        result.records.push_back(run.step());
        result.trajectory.push_back(world.q);
    }
    result.status = run.status();
    return result;
}

std::pair<World, graph::ViewGraph> build_graph(const ScenarioConfig& config) {
    config.validate();
    World world = World::from_config(config);
    graph::ViewGraph graph;
    for (const auto& step : config.script) {
        if (std::holds_alternative<scenario::CaptureStep>(step)) {
            graph.capture(world.render(), world.intrinsics(), world.time_s, world.camera_pose());
        } else {
            const auto& jog = std::get<scenario::JogStep>(step);
            for (int k = 0; k < jog.steps; ++k) {
                manual_jog(world, jog.twist, config.controller);
            }
        }
    }
    return {std::move(world), std::move(graph)};
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [world, graph] = build_graph(config);
    if (config.kind == scenario::ScenarioKind::Reposition) {
        const Pose T = config.reposition.transform(config.trocar);
        auto moved = std::make_shared<vision::PlanarScene>(*world.scene);
        moved->plane_pose = T * moved->plane_pose;
        world.scene = std::move(moved);
    }
    ScenarioResult result{run_servo(world, graph, config.servo_target, ServoOptions::from_config(config)),
                          std::move(graph), {}};
    if (result.servo.converged()) {
        result.graph.set_current(config.servo_target);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.summary = metrics::summarize(result.servo.records, wall);
    return result;
}

void write_artifacts(const ScenarioResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    metrics::write_csv(dir / "metrics.csv", result.servo.records);
    auto summary = metrics::summary_to_json(result.summary);
    summary["status"] = to_string(result.servo.status);
    summary["path"] = result.servo.path;
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
    result.graph.save(dir / "graph.json");
}

} // namespace hrcm::sim
