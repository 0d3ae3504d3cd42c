#include "hrcm/scenario.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"
#include "hrcm/serialization.hpp"

namespace hrcm::scenario {

namespace {

constexpr double kDeg = M_PI / 180.0;

JogStep jog(std::initializer_list<double> twist, int steps) {
    JogStep j;
    int k = 0;
    for (double v : twist) {
        j.twist[k++] = v;
    }
    j.steps = steps;
    return j;
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

void read_vec3_if(const nlohmann::json& j, const char* key, Eigen::Vector3d& out) {
    if (j.contains(key)) {
        out = io::vec3_from_json(j.at(key));
    }
}

} // namespace

ScenarioKind parse_kind(const std::string& text) {
    if (text == "any_to_any") {
        return ScenarioKind::AnyToAny;
    }
    if (text == "tool_motion") {
        return ScenarioKind::ToolMotion;
    }
    if (text == "reposition") {
        return ScenarioKind::Reposition;
    }
    throw ConfigurationError("unknown scenario kind '" + text + "'");
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
    case ScenarioKind::AnyToAny:
        return "any_to_any";
    case ScenarioKind::ToolMotion:
        return "tool_motion";
    case ScenarioKind::Reposition:
        return "reposition";
    }
    return "any_to_any";
}

vision::EndoscopeCamera CameraConfig::build() const {
    return vision::EndoscopeCamera(sensor, circle_center, circle_radius, crop_aspect, output_width);
}

kinematics::Pose SceneConfig::plane_pose() const {
    const double len = normal.norm();
    if (!(len > 0.0)) {
        throw ConfigurationError("scene normal must be non-zero");
    }
    const Eigen::Vector3d z = normal / len;
    // In-plane x: world x projected onto the plane, or world y if x is parallel to the normal.
    Eigen::Vector3d ref = Eigen::Vector3d::UnitX();
    if (std::abs(z.dot(ref)) > 0.9) {
        ref = Eigen::Vector3d::UnitY();
    }
    const Eigen::Vector3d x = (ref - ref.dot(z) * z).normalized();
    kinematics::Pose p;
    p.rotation.col(0) = x;
    p.rotation.col(1) = z.cross(x);
    p.rotation.col(2) = z;
    p.translation = origin;
    return p;
}

vision::PlanarScene SceneConfig::build() const {
    auto scene = vision::PlanarScene::generate(plane_pose(), feature_count, half_extent, seed);
    scene.validate();
    return scene;
}

kinematics::Pose InitialView::camera_pose(const Eigen::Vector3d& trocar) const {
    const double t = tilt_deg * kDeg;
    const double a = azimuth_deg * kDeg;
    const Eigen::Vector3d z(std::sin(t) * std::cos(a), std::sin(t) * std::sin(a), -std::cos(t));
    Eigen::Vector3d ref = Eigen::Vector3d::UnitX();
    if (std::abs(z.dot(ref)) > 0.9) {
        ref = Eigen::Vector3d::UnitY();
    }
    const Eigen::Vector3d x0 = (ref - ref.dot(z) * z).normalized();
    const Eigen::Vector3d x = Eigen::AngleAxisd(roll_deg * kDeg, z) * x0;
    kinematics::Pose p;
    p.rotation.col(0) = x;
    p.rotation.col(1) = z.cross(x);
    p.rotation.col(2) = z;
    p.translation = trocar + insertion_m * z;
    return p;
}

void ControllerConfig::validate() const {
    if (!(dt > 0.0)) {
        throw ConfigurationError("controller dt must be positive");
    }
    if (control_substeps < 1) {
        throw ConfigurationError("control_substeps must be at least 1");
    }
    gains.validate();
    if (gains.channels() != 7) {
        throw ConfigurationError("gain diagonals must have 7 entries (4 task + 3 RCM)");
    }
    if (!(damping >= 0.0) || !(integral_clamp >= 0.0)) {
        throw ConfigurationError("damping and integral clamp must be non-negative");
    }
    if (filter_length == 0) {
        throw ConfigurationError("filter_length must be at least 1");
    }
    if (task_sign != 1.0 && task_sign != -1.0) {
        throw ConfigurationError("task_sign must be +1 or -1");
    }
}

void ServoConfig::validate() const {
    if (!(intermediate_mpd_px > 0.0) || !(final_mpd_px > 0.0)) {
        throw ConfigurationError("convergence thresholds must be positive");
    }
    if (max_steps < 1 || max_consecutive_failures < 1) {
        throw ConfigurationError("max_steps and max_consecutive_failures must be positive");
    }
    ransac.validate();
}

bool ToolMotionConfig::in_burst(int step) const {
    if (step < start_step || period_steps <= 0 || burst_steps <= 0) {
        return false;
    }
    return (step - start_step) % period_steps < burst_steps;
}

kinematics::Pose RepositionConfig::transform(const Eigen::Vector3d& trocar) const {
    const Eigen::Vector3d c = pivot.value_or(trocar);
    kinematics::Pose T;
    if (angle_deg != 0.0) {
        if (!(axis.norm() > 0.0)) {
            throw ConfigurationError("reposition axis must be non-zero");
        }
        T.rotation = Eigen::AngleAxisd(angle_deg * kDeg, axis.normalized()).toRotationMatrix();
    }
    T.translation = c - T.rotation * c;
    return T;
}

ScenarioConfig ScenarioConfig::defaults(ScenarioKind kind) {
    ScenarioConfig c;
    c.kind = kind;
    switch (kind) {
    case ScenarioKind::AnyToAny:
        // overview -> close-up -> examination close-up -> tool insertion area,
        // then servo back to the first close-up (path 3 -> 2 -> 1).
        c.script = {CaptureStep{},
                    jog({0.0, 0.0, 0.012, 0.08, 0.0, 0.0}, 30),
                    CaptureStep{},
                    jog({0.0, 0.0, 0.0, 0.0, 0.08, 0.15}, 30),
                    CaptureStep{},
                    jog({0.0, 0.0, -0.01, -0.09, 0.03, 0.0}, 30),
                    CaptureStep{}};
        c.servo_target = 1;
        break;
    case ScenarioKind::ToolMotion:
        // overview -> intermediate -> tool insertion area, then back to the overview.
        c.script = {CaptureStep{},
                    jog({0.0, 0.0, 0.0, -0.08, 0.04, 0.0}, 30),
                    CaptureStep{},
                    jog({0.0, 0.0, 0.01, -0.06, -0.05, -0.1}, 30),
                    CaptureStep{}};
        c.servo_target = 0;
        c.corruption.noise_px = 0.25;
        break;
    case ScenarioKind::Reposition:
        c.script = {CaptureStep{}};
        c.servo_target = 0;
        c.reposition.axis = Eigen::Vector3d::UnitZ();
        c.reposition.angle_deg = 16.6;
        break;
    }
    return c;
}

kinematics::ChainModel ScenarioConfig::chain() const {
    auto chain = chain_file ? kinematics::load_chain(*chain_file) : kinematics::ChainModel::default_chain();
    chain.require_rcm_capable();
    return chain;
}

void ScenarioConfig::validate() const {
    camera.sensor.validate();
    controller.validate();
    servo.validate();
    corruption.validate();
    if (!trocar.allFinite()) {
        throw ConfigurationError("trocar position must be finite");
    }
    if (!(initial_view.insertion_m > 0.0)) {
        throw ConfigurationError("initial insertion depth must be positive");
    }
    if (tool_motion.outlier_rate < 0.0 || tool_motion.outlier_rate > 1.0 || tool_motion.dropout_rate < 0.0 ||
        tool_motion.dropout_rate > 1.0) {
        throw ConfigurationError("tool motion rates must lie in [0, 1]");
    }
    int captures = 0;
    for (const auto& s : script) {
        if (std::holds_alternative<CaptureStep>(s)) {
            ++captures;
        } else if (std::get<JogStep>(s).steps < 0 || !std::get<JogStep>(s).twist.allFinite()) {
            throw ConfigurationError("jog steps must be non-negative with a finite twist");
        }
    }
    if (captures == 0) {
        throw ConfigurationError("scenario script must capture at least one view");
    }
    if (servo_target < 0 || servo_target >= captures) {
        throw ConfigurationError("servo_target " + std::to_string(servo_target) + " is not one of the " +
                                 std::to_string(captures) + " captured views");
    }
}

ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    try {
        const ScenarioKind kind = parse_kind(j.value("kind", std::string("any_to_any")));
        ScenarioConfig c = ScenarioConfig::defaults(kind);
        read_if(j, "seed", c.seed);
        if (j.contains("chain")) {
            std::filesystem::path p = j.at("chain").get<std::string>();
            if (p.is_relative() && !base_dir.empty()) {
                p = base_dir / p;
            }
            c.chain_file = p;
        }
        if (j.contains("camera")) {
            const auto& jc = j.at("camera");
            if (jc.contains("sensor")) {
                c.camera.sensor = io::intrinsics_from_json(jc.at("sensor"));
            }
            if (jc.contains("circle_center")) {
                const Eigen::VectorXd v = io::vec_from_json(jc.at("circle_center"), 2);
                c.camera.circle_center = Eigen::Vector2d(v[0], v[1]);
            }
            read_if(jc, "circle_radius", c.camera.circle_radius);
            read_if(jc, "crop_aspect", c.camera.crop_aspect);
            read_if(jc, "output_width", c.camera.output_width);
        }
        if (j.contains("scene")) {
            const auto& js = j.at("scene");
            read_vec3_if(js, "origin", c.scene.origin);
            read_vec3_if(js, "normal", c.scene.normal);
            read_if(js, "feature_count", c.scene.feature_count);
            read_if(js, "half_extent", c.scene.half_extent);
            read_if(js, "seed", c.scene.seed);
        }
        read_vec3_if(j, "trocar", c.trocar);
        if (j.contains("initial_view")) {
            const auto& ji = j.at("initial_view");
            read_if(ji, "tilt_deg", c.initial_view.tilt_deg);
            read_if(ji, "azimuth_deg", c.initial_view.azimuth_deg);
            read_if(ji, "roll_deg", c.initial_view.roll_deg);
            read_if(ji, "insertion_m", c.initial_view.insertion_m);
            if (ji.contains("q_seed")) {
                c.initial_view.q_seed = io::vec_from_json(ji.at("q_seed"));
            }
        }
        if (j.contains("controller")) {
            const auto& jc = j.at("controller");
            read_if(jc, "dt", c.controller.dt);
            read_if(jc, "control_substeps", c.controller.control_substeps);
            if (jc.contains("kp")) {
                c.controller.gains.kp = io::vec_from_json(jc.at("kp"), 7);
            }
            if (jc.contains("ki")) {
                c.controller.gains.ki = io::vec_from_json(jc.at("ki"), 7);
            }
            if (jc.contains("kd")) {
                c.controller.gains.kd = io::vec_from_json(jc.at("kd"), 7);
            }
            read_if(jc, "damping", c.controller.damping);
            read_if(jc, "integral_clamp", c.controller.integral_clamp);
            if (jc.contains("mode")) {
                c.controller.mode = homography::parse_mode(jc.at("mode").get<std::string>());
            }
            read_if(jc, "filter_length", c.controller.filter_length);
            if (jc.contains("m_star")) {
                const auto m = jc.at("m_star").get<std::string>();
                if (m == "principal_ray") {
                    c.controller.m_star = MStarPolicy::PrincipalRay;
                } else if (m == "target_centroid") {
                    c.controller.m_star = MStarPolicy::TargetCentroid;
                } else {
                    throw ConfigurationError("unknown m_star policy '" + m + "'");
                }
            }
            read_if(jc, "task_sign", c.controller.task_sign);
        }
        if (j.contains("servo")) {
            const auto& js = j.at("servo");
            read_if(js, "intermediate_mpd_px", c.servo.intermediate_mpd_px);
            read_if(js, "final_mpd_px", c.servo.final_mpd_px);
            read_if(js, "max_steps", c.servo.max_steps);
            read_if(js, "max_consecutive_failures", c.servo.max_consecutive_failures);
            if (js.contains("ransac")) {
                const auto& jr = js.at("ransac");
                read_if(jr, "threshold_px", c.servo.ransac.threshold_px);
                read_if(jr, "confidence", c.servo.ransac.confidence);
                read_if(jr, "max_iterations", c.servo.ransac.max_iterations);
            }
        }
        if (j.contains("corruption")) {
            const auto& jc = j.at("corruption");
            read_if(jc, "noise_px", c.corruption.noise_px);
            read_if(jc, "outlier_rate", c.corruption.outlier_rate);
            read_if(jc, "dropout_rate", c.corruption.dropout_rate);
        }
        if (j.contains("tool_motion")) {
            const auto& jt = j.at("tool_motion");
            read_if(jt, "start_step", c.tool_motion.start_step);
            read_if(jt, "period_steps", c.tool_motion.period_steps);
            read_if(jt, "burst_steps", c.tool_motion.burst_steps);
            read_if(jt, "outlier_rate", c.tool_motion.outlier_rate);
            read_if(jt, "dropout_rate", c.tool_motion.dropout_rate);
        }
        if (j.contains("script")) {
            c.script.clear();
            for (const auto& s : j.at("script")) {
                if (s.contains("capture")) {
                    c.script.emplace_back(CaptureStep{});
                } else if (s.contains("jog")) {
                    JogStep step;
                    step.twist = io::vec_from_json(s.at("jog"), 6);
                    step.steps = s.value("steps", 1);
                    c.script.emplace_back(step);
                } else {
                    throw ConfigurationError("script entries need either 'jog' or 'capture': " + s.dump());
                }
            }
        }
        read_if(j, "servo_target", c.servo_target);
        if (j.contains("reposition")) {
            const auto& jr = j.at("reposition");
            read_vec3_if(jr, "axis", c.reposition.axis);
            read_if(jr, "angle_deg", c.reposition.angle_deg);
            if (jr.contains("pivot") && !jr.at("pivot").is_null()) {
                c.reposition.pivot = io::vec3_from_json(jr.at("pivot"));
            }
        }
        if (j.contains("output_dir")) {
            std::filesystem::path p = j.at("output_dir").get<std::string>();
            if (p.is_relative() && !base_dir.empty()) {
                p = base_dir / p;
            }
            c.output_dir = p;
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("invalid scenario config: ") + e.what());
    }
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError("cannot open scenario config " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("scenario config " + path.string() + " is not valid JSON: " + e.what());
    }
    return scenario_from_json(j, path.parent_path());
}

nlohmann::json scenario_to_json(const ScenarioConfig& c) {
    nlohmann::json script = nlohmann::json::array();
    for (const auto& s : c.script) {
        if (std::holds_alternative<CaptureStep>(s)) {
            script.push_back({{"capture", true}});
        } else {
            const auto& jg = std::get<JogStep>(s);
            script.push_back({{"jog", io::vec_to_json(jg.twist)}, {"steps", jg.steps}});
        }
    }
    nlohmann::json j = {
        {"kind", to_string(c.kind)},
        {"seed", c.seed},
        {"camera",
         {{"sensor", io::intrinsics_to_json(c.camera.sensor)},
          {"circle_center", {c.camera.circle_center.x(), c.camera.circle_center.y()}},
          {"circle_radius", c.camera.circle_radius},
          {"crop_aspect", c.camera.crop_aspect},
          {"output_width", c.camera.output_width}}},
        {"scene",
         {{"origin", io::vec_to_json(c.scene.origin)},
          {"normal", io::vec_to_json(c.scene.normal)},
          {"feature_count", c.scene.feature_count},
          {"half_extent", c.scene.half_extent},
          {"seed", c.scene.seed}}},
        {"trocar", io::vec_to_json(c.trocar)},
        {"initial_view",
         {{"tilt_deg", c.initial_view.tilt_deg},
          {"azimuth_deg", c.initial_view.azimuth_deg},
          {"roll_deg", c.initial_view.roll_deg},
          {"insertion_m", c.initial_view.insertion_m}}},
        {"controller",
         {{"dt", c.controller.dt},
          {"control_substeps", c.controller.control_substeps},
          {"kp", io::vec_to_json(c.controller.gains.kp)},
          {"ki", io::vec_to_json(c.controller.gains.ki)},
          {"kd", io::vec_to_json(c.controller.gains.kd)},
          {"damping", c.controller.damping},
          {"integral_clamp", c.controller.integral_clamp},
          {"mode", std::string(homography::to_string(c.controller.mode))},
          {"filter_length", c.controller.filter_length},
          {"m_star", c.controller.m_star == MStarPolicy::PrincipalRay ? "principal_ray" : "target_centroid"},
          {"task_sign", c.controller.task_sign}}},
        {"servo",
         {{"intermediate_mpd_px", c.servo.intermediate_mpd_px},
          {"final_mpd_px", c.servo.final_mpd_px},
          {"max_steps", c.servo.max_steps},
          {"max_consecutive_failures", c.servo.max_consecutive_failures},
          {"ransac",
           {{"threshold_px", c.servo.ransac.threshold_px},
            {"confidence", c.servo.ransac.confidence},
            {"max_iterations", c.servo.ransac.max_iterations}}}}},
        {"corruption",
         {{"noise_px", c.corruption.noise_px},
          {"outlier_rate", c.corruption.outlier_rate},
          {"dropout_rate", c.corruption.dropout_rate}}},
        {"tool_motion",
         {{"start_step", c.tool_motion.start_step},
          {"period_steps", c.tool_motion.period_steps},
          {"burst_steps", c.tool_motion.burst_steps},
          {"outlier_rate", c.tool_motion.outlier_rate},
          {"dropout_rate", c.tool_motion.dropout_rate}}},
        {"script", script},
        {"servo_target", c.servo_target},
        {"reposition",
         {{"axis", io::vec_to_json(c.reposition.axis)},
          {"angle_deg", c.reposition.angle_deg},
          {"pivot", c.reposition.pivot ? io::vec_to_json(*c.reposition.pivot) : nlohmann::json(nullptr)}}},
        {"output_dir", c.output_dir.string()}};
    if (c.chain_file) {
        j["chain"] = c.chain_file->string();
    }
    if (c.initial_view.q_seed.size() > 0) {
        j["initial_view"]["q_seed"] = io::vec_to_json(c.initial_view.q_seed);
    }
    return j;
}

} // namespace hrcm::scenario
