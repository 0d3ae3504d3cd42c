#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hrcm/metrics.hpp"
#include "hrcm/rcm_control.hpp"
#include "hrcm/scenario.hpp"
#include "hrcm/view_graph.hpp"

namespace hrcm::sim {

using kinematics::Pose;
using Twist = Eigen::Matrix<double, 6, 1>;

/// Robot, scene and camera. The RCM state always reflects the current q.
struct World {
    kinematics::ChainModel chain;
    Eigen::VectorXd q;
    std::shared_ptr<const vision::PlanarScene> scene;
    vision::EndoscopeCamera camera;
    Eigen::Vector3d trocar = Eigen::Vector3d::Zero();
    double time_s = 0.0;
    rcm::RcmState rcm;
    int limit_warnings = 0;

    World(kinematics::ChainModel chain, Eigen::VectorXd q, std::shared_ptr<const vision::PlanarScene> scene,
          vision::EndoscopeCamera camera, Eigen::Vector3d trocar);

    /// Robot placed by IK at the scenario's initial view.
    static World from_config(const scenario::ScenarioConfig& config);

    kinematics::EndoscopeFrames frames() const;
    Pose camera_pose() const;
    const homography::CameraIntrinsics& intrinsics() const { return camera.intrinsics(); }
    std::vector<vision::FeatureObservation> render() const;
    double rcm_error() const { return rcm.e_rcm_p.norm(); }

    /// Re-projects the trocar onto the endoscope line of the current q.
    void refresh_rcm();
};

/// Euler update q += dt q_dot, clamped to the joint limits (counted in
/// world.limit_warnings and reported on stderr once per world). Returns true
/// when a joint hit its limit. Throws NumericError for non-finite q_dot and
/// ConfigurationError for dt <= 0 or a size mismatch.
bool integrate_step(World& world, const Eigen::VectorXd& q_dot, double dt);

/// Per-frame control: moving-average filter on the projected task error and
/// `control_substeps` PID cycles, each integrated over dt / control_substeps.
/// The task error is held across substeps; the RCM error is re-measured.
class ServoController {
public:
    ServoController(const scenario::ControllerConfig& config, int dof);

    const scenario::ControllerConfig& config() const { return config_; }

    Eigen::Vector4d smooth(const Eigen::Vector4d& projected_error);
    void apply(World& world, const Eigen::Vector4d& task_error);
    void reset();

    const rcm::PidState& pid() const { return pid_; }

private:
    scenario::ControllerConfig config_;
    rcm::PidState pid_;
    homography::MovingAverage filter_;
};

/// One frame of camera-frame manual control: the twist (v, w) is projected to
/// the controlled DOF and used as the task error, so the RCM is kept.
void manual_jog(World& world, const Twist& twist, const scenario::ControllerConfig& config);

/// Seed of the matcher/RANSAC draws at a given servo step.
std::uint64_t step_seed(std::uint64_t seed, int step);

enum class ServoStatus { Running, Converged, Failed, Aborted };
std::string to_string(ServoStatus status);

struct ServoOptions {
    scenario::ControllerConfig controller;
    scenario::ServoConfig servo;
    vision::Corruption corruption;
    std::optional<scenario::ToolMotionConfig> tool_motion;
    std::uint64_t seed = 1;
    /// Evaluation only: rigid scene motion since capture, used to place the
    /// reference tip position. Never read by the controller.
    Pose eval_scene_motion;

    static ServoOptions from_config(const scenario::ScenarioConfig& config);
};

/// Frame-by-frame execution of a servo along the shortest path from the
/// graph's current vertex to `target`. Each call to step() renders, estimates,
/// controls and returns the frame's record.
class ServoRun {
public:
    ServoRun(World& world, const graph::ViewGraph& graph, int target, ServoOptions options);

    bool done() const { return status_ != ServoStatus::Running; }
    ServoStatus status() const { return status_; }
    const std::vector<int>& path() const { return path_; }
    int active_vertex() const { return path_[path_index_]; }
    int steps() const { return step_; }
    double last_mpd() const { return last_mpd_; }
    const std::vector<vision::FeatureObservation>& last_observations() const { return last_obs_; }

    metrics::MetricsRecord step();
    /// Stops the run; the robot simply receives no further commands.
    void abort();

private:
    double tip_error_mm(int vertex) const;

    World& world_;
    const graph::ViewGraph& graph_;
    ServoOptions options_;
    ServoController controller_;
    std::vector<int> path_;
    std::size_t path_index_ = 0;
    int step_ = 0;
    int failures_ = 0;
    Eigen::Vector4d held_error_ = Eigen::Vector4d::Zero();
    double last_mpd_ = std::numeric_limits<double>::quiet_NaN();
    std::vector<vision::FeatureObservation> last_obs_;
    ServoStatus status_ = ServoStatus::Running;
};

struct ServoResult {
    std::vector<metrics::MetricsRecord> records;
    std::vector<Eigen::VectorXd> trajectory;  // q after every step
    std::vector<int> path;
    ServoStatus status = ServoStatus::Running;
    bool converged() const { return status == ServoStatus::Converged; }
};

ServoResult run_servo(World& world, const graph::ViewGraph& graph, int target, const ServoOptions& options);

/// Builds the graph from the scenario script (jogs and captures). Returns
/// the world after the script and the graph, current vertex = last capture.
std::pair<World, graph::ViewGraph> build_graph(const scenario::ScenarioConfig& config);

struct ScenarioResult {
    ServoResult servo;
    graph::ViewGraph graph;
    metrics::Summary summary;
};

ScenarioResult run_scenario(const scenario::ScenarioConfig& config);

/// metrics.csv, summary.json and graph.json under `dir` (created if needed).
void write_artifacts(const ScenarioResult& result, const std::filesystem::path& dir);

} // namespace hrcm::sim
