#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "hrcm/homography_task.hpp"
#include "hrcm/kinematics.hpp"
#include "hrcm/rcm_control.hpp"
#include "hrcm/vision.hpp"

namespace hrcm::scenario {

enum class ScenarioKind { AnyToAny, ToolMotion, Reposition };

ScenarioKind parse_kind(const std::string& text);
std::string to_string(ScenarioKind kind);

enum class MStarPolicy { PrincipalRay, TargetCentroid };

struct CameraConfig {
    homography::CameraIntrinsics sensor{1100.0, 1100.0, 640.0, 512.0, {-0.08, 0.01, 5e-4, -3e-4, 0.0}};
    Eigen::Vector2d circle_center{640.0, 512.0};
    double circle_radius = 480.0;
    double crop_aspect = 1.0;
    double output_width = 640.0;

    vision::EndoscopeCamera build() const;
};

struct SceneConfig {
    Eigen::Vector3d origin{0.55, 0.0, 0.09};
    Eigen::Vector3d normal{0.0, 0.0, 1.0};  // points toward the camera
    int feature_count = 2500;
    double half_extent = 0.12;
    std::uint64_t seed = 11;

    kinematics::Pose plane_pose() const;
    vision::PlanarScene build() const;
};

/// Camera pose at start: the endoscope axis passes through the trocar, tilted
/// `tilt_deg` from straight down toward azimuth `azimuth_deg`, with the tip
/// `insertion_m` beyond the trocar and `roll_deg` about the optical axis.
struct InitialView {
    double tilt_deg = 10.0;
    double azimuth_deg = 30.0;
    double roll_deg = 0.0;
    double insertion_m = 0.06;
    Eigen::VectorXd q_seed;  // empty: built-in seed

    kinematics::Pose camera_pose(const Eigen::Vector3d& trocar) const;
};

struct ControllerConfig {
    double dt = 1.0 / 30.0;     // vision frame period
    int control_substeps = 10;  // controller/integration cycles per frame
    rcm::PidGains gains = rcm::PidGains::defaults();
    double damping = rcm::kDefaultDamping;
    double integral_clamp = rcm::kDefaultIntegralClamp;
    homography::ProjectionMode mode = homography::ProjectionMode::B;
    std::size_t filter_length = homography::MovingAverage::kDefaultLength;
    MStarPolicy m_star = MStarPolicy::PrincipalRay;
    double task_sign = 1.0;

    double control_dt() const { return dt / control_substeps; }
    void validate() const;
};

struct ServoConfig {
    double intermediate_mpd_px = 5.0;
    double final_mpd_px = 1.5;
    int max_steps = 900;
    int max_consecutive_failures = 30;
    vision::RansacParams ransac;

    void validate() const;
};

/// Periodic corruption bursts emulating instruments moving through the view.
struct ToolMotionConfig {
    int start_step = 5;
    int period_steps = 45;
    int burst_steps = 20;
    double outlier_rate = 0.3;
    double dropout_rate = 0.3;

    bool in_burst(int step) const;
};

struct JogStep {
    Eigen::Matrix<double, 6, 1> twist = Eigen::Matrix<double, 6, 1>::Zero();  // (v, w) in the camera frame
    int steps = 1;
};
struct CaptureStep {};
using ScriptStep = std::variant<JogStep, CaptureStep>;

/// Rigid motion of the scene plane: rotation by angle_deg about `axis`
/// through `pivot` (the trocar when unset).
struct RepositionConfig {
    Eigen::Vector3d axis{0.0, 0.0, 1.0};
    double angle_deg = 0.0;
    std::optional<Eigen::Vector3d> pivot;

    kinematics::Pose transform(const Eigen::Vector3d& trocar) const;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::AnyToAny;
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> chain_file;
    CameraConfig camera;
    SceneConfig scene;
    Eigen::Vector3d trocar{0.55, 0.0, 0.30};
    InitialView initial_view;
    ControllerConfig controller;
    ServoConfig servo;
    vision::Corruption corruption;  // baseline, every frame
    ToolMotionConfig tool_motion;
    std::vector<ScriptStep> script;
    int servo_target = 0;
    RepositionConfig reposition;
    std::filesystem::path output_dir = "out";

    /// Built-in scripts per kind (graph construction + target).
    static ScenarioConfig defaults(ScenarioKind kind);

    kinematics::ChainModel chain() const;
    void validate() const;
};

/// Parses a scenario document; unspecified fields keep the defaults of the
/// document's "kind". Relative chain paths resolve against `base_dir`.
ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

} // namespace hrcm::scenario
