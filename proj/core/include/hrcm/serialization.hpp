#pragma once

// JSON conversions shared by the config, graph and wire formats.

#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hrcm/homography_task.hpp"
#include "hrcm/kinematics.hpp"
#include "hrcm/vision.hpp"

namespace hrcm::io {

nlohmann::json vec_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vec_from_json(const nlohmann::json& j, Eigen::Index expected_size = -1);
Eigen::Vector3d vec3_from_json(const nlohmann::json& j);

/// {"rotation": [9 row-major], "translation": [3]}
nlohmann::json pose_to_json(const kinematics::Pose& p);
kinematics::Pose pose_from_json(const nlohmann::json& j);

/// {"fx", "fy", "cx", "cy", "distortion": [k1, k2, p1, p2, k3]}
nlohmann::json intrinsics_to_json(const homography::CameraIntrinsics& K);
homography::CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

/// Observations as [[id, u, v, inside_fov], ...]; NaN pixels become null.
nlohmann::json observations_to_json(const std::vector<vision::FeatureObservation>& obs);
std::vector<vision::FeatureObservation> observations_from_json(const nlohmann::json& j);

} // namespace hrcm::io
