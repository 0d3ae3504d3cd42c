#include "hrcm/serialization.hpp"

#include <cmath>

#include "hrcm/errors.hpp"

namespace hrcm::io {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        a.push_back(v[k]);
    }
    return a;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j, Eigen::Index expected_size) {
    if (!j.is_array()) {
        throw ConfigurationError("expected a numeric array, got " + j.dump());
    }
    if (expected_size >= 0 && static_cast<Eigen::Index>(j.size()) != expected_size) {
        throw ConfigurationError("expected " + std::to_string(expected_size) + " entries, got " + j.dump());
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) {
            throw ConfigurationError("non-numeric entry in " + j.dump());
        }
        v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    }
    return v;
}

Eigen::Vector3d vec3_from_json(const nlohmann::json& j) {
    return vec_from_json(j, 3);
}

nlohmann::json pose_to_json(const kinematics::Pose& p) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            r.push_back(p.rotation(i, k));
        }
    }
    return {{"rotation", r}, {"translation", vec_to_json(p.translation)}};
}

kinematics::Pose pose_from_json(const nlohmann::json& j) {
    kinematics::Pose p;
    const Eigen::VectorXd r = vec_from_json(j.at("rotation"), 9);
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            p.rotation(i, k) = r[3 * i + k];
        }
    }
    p.translation = vec3_from_json(j.at("translation"));
    if (!p.is_orthonormal(1e-6)) {
        throw ConfigurationError("pose rotation is not orthonormal");
    }
    return p;
}

nlohmann::json intrinsics_to_json(const homography::CameraIntrinsics& K) {
    return {{"fx", K.fx},
            {"fy", K.fy},
            {"cx", K.cx},
            {"cy", K.cy},
            {"distortion", {K.distortion[0], K.distortion[1], K.distortion[2], K.distortion[3], K.distortion[4]}}};
}

homography::CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
    homography::CameraIntrinsics K;
    try {
        K.fx = j.at("fx").get<double>();
        K.fy = j.at("fy").get<double>();
        K.cx = j.at("cx").get<double>();
        K.cy = j.at("cy").get<double>();
        if (j.contains("distortion")) {
            const Eigen::VectorXd d = vec_from_json(j.at("distortion"), 5);
            for (int k = 0; k < 5; ++k) {
                K.distortion[static_cast<std::size_t>(k)] = d[k];
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("invalid intrinsics: ") + e.what());
    }
    K.validate();
    return K;
}

nlohmann::json observations_to_json(const std::vector<vision::FeatureObservation>& obs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& o : obs) {
        if (o.pixel.allFinite()) {
            a.push_back({o.id, o.pixel.x(), o.pixel.y(), o.inside_fov});
        } else {
            a.push_back({o.id, nullptr, nullptr, false});
        }
    }
    return a;
}

std::vector<vision::FeatureObservation> observations_from_json(const nlohmann::json& j) {
    std::vector<vision::FeatureObservation> out;
    try {
        for (const auto& e : j) {
            vision::FeatureObservation o;
            o.id = e.at(0).get<int>();
            if (!e.at(1).is_null()) {
                o.pixel = Eigen::Vector2d(e.at(1).get<double>(), e.at(2).get<double>());
                o.inside_fov = e.at(3).get<bool>();
            }
            out.push_back(o);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("invalid observation list: ") + e.what());
    }
    return out;
}

} // namespace hrcm::io
